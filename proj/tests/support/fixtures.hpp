#pragma once

#include "typespace/code_graph.hpp"

#include <string>
#include <vector>

namespace typespace::testing {

/// Directory holding tests/fixtures.
std::string fixture_dir();
std::string read_file_text(const std::string &path);

/// The graph as a sorted multiset of tab-separated lines:
///   node <category> <label>
///   edge <LABEL> <category>:<label> <category>:<label>
///   symbol <kind> <name> <annotation or ->
std::vector<std::string> graph_multiset(const CodeGraph &g);
/// Sorted non-empty lines of an expectation file.
std::vector<std::string> read_multiset(const std::string &path);

/// Names of the graph fixtures (`<name>.py` with `<name>.expect`).
std::vector<std::string> graph_fixture_names();

} // namespace typespace::testing
