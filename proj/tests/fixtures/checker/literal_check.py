"""Minimal checker: flags `name: T = <literal>` where the literal is not a T."""
import ast
import sys

LITERALS = {int: "int", str: "str", float: "float", bool: "bool"}


def main(path):
    with open(path) as f:
        tree = ast.parse(f.read())
    errors = 0
    for node in ast.walk(tree):
        if isinstance(node, ast.AnnAssign) and isinstance(node.value, ast.Constant):
            want = ast.unparse(node.annotation)
            got = LITERALS.get(type(node.value.value))
            if got and want in LITERALS.values() and got != want:
                print(f"{path}:{node.lineno}: {got} is not {want}")
                errors += 1
    return 1 if errors else 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1]))
