#include "fixtures.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace typespace::testing {

std::string fixture_dir() { return TYPESPACE_FIXTURE_DIR; }

std::string read_file_text(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> graph_multiset(const CodeGraph &g) {
  auto node = [&](int i) {
    return std::string(category_name(g.nodes[i].category)) + ":" + g.nodes[i].label;
  };
  std::vector<std::string> out;
  for (const auto &n : g.nodes)
    out.push_back("node\t" + std::string(category_name(n.category)) + "\t" + n.label);
  for (const auto &[label, edges] : g.edges)
    for (auto [s, d] : edges)
      out.push_back("edge\t" + std::string(edge_label_name(label)) + "\t" + node(s) + "\t" +
                    node(d));
  for (const auto &s : g.symbols)
    out.push_back("symbol\t" + std::string(symbol_kind_name(s.kind)) + "\t" + s.name + "\t" +
                  (s.annotation ? s.annotation->str() : "-"));
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> read_multiset(const std::string &path) {
  std::istringstream in(read_file_text(path));
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);)
    if (!line.empty())
      out.push_back(line);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> graph_fixture_names() {
  std::vector<std::string> out;
  for (const auto &e : std::filesystem::directory_iterator(fixture_dir() + "/graphs"))
    if (e.path().extension() == ".py")
      out.push_back(e.path().stem().string());
  std::sort(out.begin(), out.end());
  return out;
}

} // namespace typespace::testing
