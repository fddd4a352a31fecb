// Command-line front end: extract, split, train, index, predict, eval, serve.

#include "typespace/checkpoint.hpp"
#include "typespace/errors.hpp"
#include "typespace/harness.hpp"
#include "typespace/service.hpp"

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace typespace;
using json = nlohmann::ordered_json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kDiverged = 3 };

std::string read_text(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !out.write(text.data(), static_cast<std::streamsize>(text.size())))
    throw DataError("cannot write '" + path + "'");
}

void print_diagnostics(const std::vector<std::string> &diags) {
  for (const auto &d : diags)
    std::cerr << "warning: " << d << "\n";
}

// "a.jsonl+b.jsonl" and repeated values both name several corpora.
std::vector<CodeGraph> read_corpora(const std::vector<std::string> &args) {
  std::vector<CodeGraph> out;
  for (const auto &arg : args) {
    std::size_t start = 0;
    while (start <= arg.size()) {
      std::size_t plus = arg.find('+', start);
      std::string path = arg.substr(start, plus == std::string::npos ? std::string::npos : plus - start);
      if (!path.empty()) {
        auto part = read_corpus(path);
        out.insert(out.end(), std::make_move_iterator(part.begin()),
                   std::make_move_iterator(part.end()));
      }
      if (plus == std::string::npos)
        break;
      start = plus + 1;
    }
  }
  return out;
}

// corpus.jsonl -> corpus.<part>.jsonl
std::string part_path(const std::string &corpus, const std::string &part) {
  fs::path p(corpus);
  fs::path stem = p.parent_path() / p.stem();
  return stem.string() + "." + part + ".jsonl";
}

struct ExtractArgs {
  std::string dir, output;
  std::vector<std::string> no_edge;
};

int run_extract(const ExtractArgs &a) {
  ExtractOptions options;
  for (const auto &name : a.no_edge) {
    auto label = parse_edge_label(name);
    if (!label)
      throw DataError("unknown edge label '" + name + "'");
    options.disabled.insert(*label);
  }
  std::vector<std::string> diags;
  auto files = collect_sources(a.dir, &diags);
  auto graphs = extract_corpus(files, options, &diags);
  print_diagnostics(diags);
  write_corpus(a.output, graphs);
  std::cerr << "extracted " << graphs.size() << " of " << files.size() << " files\n";
  return kOk;
}

struct SplitArgs {
  std::string corpus;
  std::uint64_t seed = 0;
};

int run_split(const SplitArgs &a) {
  Split s = split_corpus(read_corpus(a.corpus), a.seed);
  write_corpus(part_path(a.corpus, "train"), s.train);
  write_corpus(part_path(a.corpus, "valid"), s.valid);
  write_corpus(part_path(a.corpus, "test"), s.test);
  std::cerr << "train " << s.train.size() << ", valid " << s.valid.size() << ", test "
            << s.test.size() << "\n";
  return kOk;
}

struct TrainArgs {
  std::string config, loss, train, valid, output, log;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
};

int run_train(TrainArgs a) {
  TrainConfig config;
  if (!a.config.empty()) {
    auto values = parse_config(read_text(a.config));
    // File locations belong to the command line, not to TrainConfig.
    for (auto [key, target] : {std::pair{"train", &a.train}, std::pair{"valid", &a.valid},
                               std::pair{"output", &a.output}, std::pair{"log", &a.log}}) {
      auto it = values.find(key);
      if (it == values.end())
        continue;
      if (target->empty())
        *target = it->second;
      values.erase(it);
    }
    apply_config(values, config);
  }
  if (!a.loss.empty()) {
    auto k = parse_loss_kind(a.loss);
    if (!k)
      throw DataError("unknown loss '" + a.loss + "'");
    config.loss = *k;
  }
  if (a.seed)
    config.seed = *a.seed;
  if (a.epochs)
    config.epochs = *a.epochs;
  if (a.train.empty() || a.output.empty())
    throw CLI::ValidationError("train", "a training corpus and an output path are required");

  auto train_set = read_corpus(a.train);
  std::vector<CodeGraph> valid_set;
  if (!a.valid.empty())
    valid_set = read_corpus(a.valid);

  std::ofstream log;
  if (!a.log.empty()) {
    log.open(a.log);
    if (!log)
      throw DataError("cannot write '" + a.log + "'");
  }
  auto hook = [&](const EpochLog &e, const Model &) {
    std::string line = epoch_log_line(e);
    std::cerr << line << "\n";
    if (log)
      log << line << "\n" << std::flush;
    return true;
  };
  TrainResult r = train(config, train_set, valid_set, hook);
  save_checkpoint(a.output, r.checkpoint);
  std::cerr << "best epoch " << r.best_epoch << ", checkpoint written to " << a.output << "\n";
  return kOk;
}

struct IndexArgs {
  std::string model, output;
  std::vector<std::string> corpus;
};

int run_index(const IndexArgs &a) {
  Model model(load_checkpoint(a.model));
  TypeMap map = build_map(model, read_corpora(a.corpus));
  save_map(a.output, map);
  std::cerr << map.size() << " markers written to " << a.output << "\n";
  return kOk;
}

struct PredictArgs {
  std::string model, map, file;
  PredictionConfig config;
};

json candidates_json(const std::vector<Candidate> &cands) {
  json out = json::array();
  for (const auto &c : cands)
    out.push_back({{"type", c.type.str()}, {"probability", c.probability}});
  return out;
}

int run_predict(const PredictArgs &a) {
  Model model(load_checkpoint(a.model));
  TypeMap map = load_map(a.map);
  std::string text = read_text(a.file);
  Extraction e = extract(text, a.file);
  print_diagnostics(e.diagnostics);
  std::vector<std::size_t> lines(e.graph.symbols.size(), 0);
  for (const auto &site : e.sites) {
    std::size_t at = std::min(site.existing ? site.begin : site.insert_at, text.size());
    lines[site.symbol] = 1 + static_cast<std::size_t>(
                                 std::count(text.begin(), text.begin() + at, '\n'));
  }
  for (const auto &p : predict_graph(model, map, e.graph, a.config)) {
    const SymbolInfo &s = e.graph.symbols[p.symbol];
    json row = {{"name", s.name},
                {"kind", symbol_kind_name(s.kind)},
                {"line", lines[p.symbol]},
                {"annotation", s.annotation ? json(s.annotation->str()) : json(nullptr)},
                {"candidates", candidates_json(p.candidates)}};
    std::cout << row.dump() << "\n";
  }
  return kOk;
}

struct EvalArgs {
  std::string model, map, test, output;
  PredictionConfig config;
};

int run_eval(const EvalArgs &a) {
  Model model(load_checkpoint(a.model));
  TypeMap map = load_map(a.map);
  Report report = evaluate(model, map, read_corpus(a.test), a.config);
  write_text(a.output, report_json(report));
  std::string csv = a.output + ".pr.csv";
  write_text(csv, pr_csv(pr_curve(report.records, default_thresholds())));
  const MetricTotals &all = report.groups.at("all");
  auto pct = [&](std::size_t n) { return all.count ? 100.0 * n / all.count : 0.0; };
  std::fprintf(stderr, "%zu symbols: exact %.1f%%, up to parametric %.1f%%, neutral %.1f%%\n",
               all.count, pct(all.exact), pct(all.up_to_parametric), pct(all.neutral));
  std::cerr << "report written to " << a.output << " and " << csv << "\n";
  return kOk;
}

struct ServeArgs {
  std::string model, map, addr = "127.0.0.1:8080", files, checker;
  int checker_timeout_ms = 20000;
  PredictionConfig config;
};

std::vector<std::string> split_words(const std::string &s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;)
    out.push_back(w);
  return out;
}

int run_serve(const ServeArgs &a) {
  auto colon = a.addr.rfind(':');
  if (colon == std::string::npos)
    throw CLI::ValidationError("--addr", "expected host:port");
  std::string host = a.addr.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(a.addr.substr(colon + 1));
  } catch (const std::logic_error &) {
    throw CLI::ValidationError("--addr", "bad port in '" + a.addr + "'");
  }

  Model model(load_checkpoint(a.model));
  CheckerConfig checker;
  checker.command = split_words(a.checker);
  checker.timeout = std::chrono::milliseconds(a.checker_timeout_ms);
  AnnotationService service(&model, load_map(a.map), a.config, checker);
  if (!a.files.empty()) {
    std::vector<std::string> diags;
    for (const auto &f : collect_sources(a.files, &diags)) {
      try {
        service.add_file(f.id, f.text);
      } catch (const Error &e) {
        diags.push_back(f.id + ": " + e.what());
      }
    }
    print_diagnostics(diags);
  }

  httplib::Server server;
  install_routes(server, service);
  if (!server.bind_to_port(host, port))
    throw DataError("cannot listen on " + a.addr);
  std::cerr << "listening on " << a.addr << "\n";
  server.listen_after_bind();
  return kOk;
}

void add_prediction_options(CLI::App *cmd, PredictionConfig &config) {
  cmd->add_option("--k", config.k, "neighbours per query")->check(CLI::PositiveNumber);
  cmd->add_option("--p", config.p, "distance exponent")->check(CLI::NonNegativeNumber);
  cmd->add_option("--max-candidates", config.max_candidates, "0 keeps every candidate");
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Python type suggestions from a learned type space"};
  app.require_subcommand(1);

  ExtractArgs ex;
  auto *extract_cmd = app.add_subcommand("extract", "build code graphs for every .py file");
  extract_cmd->add_option("dir", ex.dir)->required()->check(CLI::ExistingDirectory);
  extract_cmd->add_option("-o,--output", ex.output, "corpus.jsonl")->required();
  extract_cmd->add_option("--no-edge", ex.no_edge, "edge labels to leave out");

  SplitArgs sp;
  auto *split_cmd = app.add_subcommand("split", "70/10/20 file split of a corpus");
  split_cmd->add_option("corpus", sp.corpus)->required();
  split_cmd->add_option("--seed", sp.seed);

  TrainArgs tr;
  auto *train_cmd = app.add_subcommand("train", "train an encoder");
  train_cmd->add_option("--config", tr.config, "key = value file");
  train_cmd->add_option("--loss", tr.loss, "class, space or combined");
  train_cmd->add_option("--train", tr.train);
  train_cmd->add_option("--valid", tr.valid);
  train_cmd->add_option("-o,--output", tr.output);
  train_cmd->add_option("--log", tr.log, "per-epoch JSON lines");
  train_cmd->add_option("--seed", tr.seed);
  train_cmd->add_option("--epochs", tr.epochs);

  IndexArgs ix;
  auto *index_cmd = app.add_subcommand("index", "type map over annotated corpora");
  index_cmd->add_option("--model", ix.model)->required();
  index_cmd->add_option("--corpus", ix.corpus, "corpora, '+' separated or repeated")
      ->required();
  index_cmd->add_option("-o,--output", ix.output)->required();

  PredictArgs pr;
  auto *predict_cmd = app.add_subcommand("predict", "suggest types for one file");
  predict_cmd->add_option("--model", pr.model)->required();
  predict_cmd->add_option("--map", pr.map)->required();
  predict_cmd->add_option("file", pr.file)->required();
  add_prediction_options(predict_cmd, pr.config);

  EvalArgs ev;
  auto *eval_cmd = app.add_subcommand("eval", "metrics over a test corpus");
  eval_cmd->add_option("--model", ev.model)->required();
  eval_cmd->add_option("--map", ev.map)->required();
  eval_cmd->add_option("--test", ev.test)->required();
  eval_cmd->add_option("-o,--output", ev.output, "JSON report; PR points go next to it")
      ->required();
  add_prediction_options(eval_cmd, ev.config);

  ServeArgs sv;
  auto *serve_cmd = app.add_subcommand("serve", "HTTP review service");
  serve_cmd->add_option("--model", sv.model)->required();
  serve_cmd->add_option("--map", sv.map)->required();
  serve_cmd->add_option("--addr", sv.addr, "host:port");
  serve_cmd->add_option("--files", sv.files, "directory of files to review");
  serve_cmd->add_option("--checker", sv.checker, "type checker command; the file is appended");
  serve_cmd->add_option("--checker-timeout-ms", sv.checker_timeout_ms);
  add_prediction_options(serve_cmd, sv.config);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*extract_cmd)
      return run_extract(ex);
    if (*split_cmd)
      return run_split(sp);
    if (*train_cmd)
      return run_train(tr);
    if (*index_cmd)
      return run_index(ix);
    if (*predict_cmd)
      return run_predict(pr);
    if (*eval_cmd)
      return run_eval(ev);
    if (*serve_cmd)
      return run_serve(sv);
  } catch (const CLI::ValidationError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const Divergence &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDiverged;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
