#include "typespace/errors.hpp"
#include "typespace/harness.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace typespace {

std::string content_hash(std::string_view text) {
  std::string norm;
  bool gap = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      gap = !norm.empty();
      continue;
    }
    if (gap)
      norm.push_back(' ');
    gap = false;
    norm.push_back(c);
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(norm.data(), norm.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 failed");
  static const char *hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 15]);
  }
  return out;
}

std::vector<SourceFile> dedup_sources(std::vector<SourceFile> files) {
  std::set<std::string> seen;
  std::vector<SourceFile> out;
  for (auto &f : files)
    if (seen.insert(content_hash(f.text)).second)
      out.push_back(std::move(f));
  return out;
}

std::vector<SourceFile> collect_sources(const std::string &root,
                                        std::vector<std::string> *diagnostics) {
  std::error_code ec;
  if (!fs::is_directory(root, ec))
    throw DataError("not a directory: '" + root + "'");
  std::vector<std::string> paths;
  for (auto it = fs::recursive_directory_iterator(root, ec); it != fs::recursive_directory_iterator();
       it.increment(ec)) {
    if (ec)
      throw DataError("cannot walk '" + root + "': " + ec.message());
    if (it->is_regular_file() && it->path().extension() == ".py")
      paths.push_back(fs::relative(it->path(), root).generic_string());
  }
  std::sort(paths.begin(), paths.end());
  std::vector<SourceFile> files;
  for (const auto &p : paths) {
    std::ifstream in(fs::path(root) / p, std::ios::binary);
    if (!in) {
      if (diagnostics)
        diagnostics->push_back(p + ": cannot read");
      continue;
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    files.push_back({p, ss.str()});
  }
  std::size_t before = files.size();
  files = dedup_sources(std::move(files));
  if (diagnostics && files.size() != before)
    diagnostics->push_back(std::to_string(before - files.size()) + " duplicate file(s) dropped");
  return files;
}

std::vector<CodeGraph> extract_corpus(const std::vector<SourceFile> &files,
                                      const ExtractOptions &options,
                                      std::vector<std::string> *diagnostics) {
  std::vector<CodeGraph> out;
  for (const auto &f : files) {
    try {
      Extraction e = extract(f.text, f.id, options);
      if (diagnostics)
        for (auto &d : e.diagnostics)
          diagnostics->push_back(f.id + ": " + d);
      out.push_back(std::move(e.graph));
    } catch (const Error &e) {
      if (diagnostics)
        diagnostics->push_back(f.id + ": skipped: " + e.what());
    }
  }
  return out;
}

Split split_corpus(const std::vector<CodeGraph> &graphs, std::uint64_t seed) {
  const std::size_t n = graphs.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i)
    order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  const std::size_t n_train = n * 70 / 100;
  const std::size_t n_valid = n * 10 / 100;
  std::vector<int> part(n);
  for (std::size_t i = 0; i < n; ++i)
    part[order[i]] = i < n_train ? 0 : i < n_train + n_valid ? 1 : 2;
  Split s;
  for (std::size_t i = 0; i < n; ++i)
    (part[i] == 0 ? s.train : part[i] == 1 ? s.valid : s.test).push_back(graphs[i]);
  return s;
}

std::map<TypeExpr, std::size_t> type_counts(const std::vector<CodeGraph> &graphs) {
  std::map<TypeExpr, std::size_t> counts;
  for (const auto &g : graphs)
    for (const auto &s : g.symbols)
      if (s.annotation)
        ++counts[*s.annotation];
  return counts;
}

namespace {

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a])))
    ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1])))
    --b;
  return std::string(s.substr(a, b - a));
}

template <class T> T number(const std::string &key, const std::string &v) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw DataError("config: bad value '" + v + "' for " + key);
  return out;
}

double real(const std::string &key, const std::string &v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used == v.size())
      return d;
  } catch (const std::exception &) {
  }
  throw DataError("config: bad value '" + v + "' for " + key);
}

bool boolean(const std::string &key, const std::string &v) {
  if (v == "true" || v == "1" || v == "yes")
    return true;
  if (v == "false" || v == "0" || v == "no")
    return false;
  throw DataError("config: bad value '" + v + "' for " + key);
}

std::set<EdgeLabel> labels(const std::string &key, const std::string &v) {
  std::set<EdgeLabel> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty())
      continue;
    auto l = parse_edge_label(item);
    if (!l)
      throw DataError("config: unknown edge label '" + item + "' in " + key);
    out.insert(*l);
  }
  return out;
}

} // namespace

std::map<std::string, std::string> parse_config(std::string_view text) {
  std::map<std::string, std::string> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos)
      nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    std::string t = trim(line);
    if (t.empty())
      continue;
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ParseError("config line " + std::to_string(line_no) + ": expected key = value",
                       line_no);
    std::string key = trim(std::string_view(t).substr(0, eq));
    std::string value = trim(std::string_view(t).substr(eq + 1));
    if (key.empty())
      throw ParseError("config line " + std::to_string(line_no) + ": empty key", line_no);
    if (!out.emplace(key, value).second)
      throw ParseError("config line " + std::to_string(line_no) + ": repeated key '" + key + "'",
                       line_no);
  }
  return out;
}

void apply_config(const std::map<std::string, std::string> &values, TrainConfig &c) {
  for (const auto &[k, v] : values) {
    if (k == "loss") {
      auto l = parse_loss_kind(v);
      if (!l)
        throw DataError("config: unknown loss '" + v + "'");
      c.loss = *l;
    } else if (k == "margin") {
      c.margin = real(k, v);
    } else if (k == "lambda") {
      c.lambda = real(k, v);
    } else if (k == "batch_symbols") {
      c.batch_symbols = number<std::size_t>(k, v);
    } else if (k == "epochs") {
      c.epochs = number<std::size_t>(k, v);
    } else if (k == "seed") {
      c.seed = number<std::uint64_t>(k, v);
    } else if (k == "class_min_count") {
      c.class_min_count = number<std::size_t>(k, v);
    } else if (k == "vocab_min_count") {
      c.vocab_min_count = number<std::size_t>(k, v);
    } else if (k == "vocab_max_size") {
      c.vocab_max_size = number<std::size_t>(k, v);
    } else if (k == "dim") {
      c.gnn.dim = number<std::size_t>(k, v);
    } else if (k == "steps") {
      c.gnn.steps = number<std::size_t>(k, v);
    } else if (k == "inverse_edges") {
      c.gnn.inverse_edges = boolean(k, v);
    } else if (k == "edges") {
      c.gnn.active = labels(k, v);
    } else if (k == "no_edges") {
      for (EdgeLabel l : labels(k, v))
        c.gnn.active.erase(l);
    } else if (k == "learning_rate") {
      c.adam.learning_rate = real(k, v);
    } else if (k == "clip_norm") {
      c.adam.clip_norm = real(k, v);
    } else {
      throw DataError("config: unknown key '" + k + "'");
    }
  }
  if (c.margin <= 0)
    throw DataError("config: margin must be positive");
  if (c.lambda < 0)
    throw DataError("config: lambda must be non-negative");
  if (c.gnn.dim == 0 || c.gnn.steps == 0 || c.batch_symbols == 0)
    throw DataError("config: dim, steps and batch_symbols must be positive");
}

} // namespace typespace
