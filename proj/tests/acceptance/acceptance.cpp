// Prints one PASS/FAIL line per acceptance criterion; exits 1 if any fails.

#include "typespace/checkpoint.hpp"
#include "typespace/harness.hpp"
#include "typespace/objective.hpp"
#include "typespace/typemap.hpp"

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "synthetic.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace typespace;
using namespace typespace::testing;

namespace {

using Outcome = std::optional<std::string>; // failure detail, or nothing on success

int failures = 0;

void check(const std::string &name, const std::function<Outcome()> &body) {
  auto start = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception &e) {
    out = std::string("exception: ") + e.what();
  }
  double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (out) {
    ++failures;
    std::printf("FAIL %s: %s\n", name.c_str(), out->c_str());
  } else {
    std::printf("PASS %s (%.1fs)\n", name.c_str(), secs);
  }
  std::fflush(stdout);
}

std::string fmt(const char *f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double scalar(Tape &t, Tape::Var v) { return t.value(v).item(); }

Tensor random_tensor(std::size_t r, std::size_t c, Rng &rng, double scale = 1.0) {
  Tensor t(r, c);
  for (auto &x : t.data)
    x = rng.uniform(-scale, scale);
  return t;
}

// ---------------------------------------------------------------- losses

Outcome loss_goldens() {
  Rng rng(11);
  for (std::size_t c : {2u, 3u, 7u, 50u}) {
    Tape t;
    auto reps = t.constant(random_tensor(5, 4, rng));
    auto protos = t.constant(Tensor(4, c));
    auto bias = t.constant(Tensor(1, c, 0.25));
    double v = scalar(t, classification_loss(t, reps, {0, 1, 0, 1, 1}, protos, bias));
    if (std::abs(v - std::log(static_cast<double>(c))) > 1e-9)
      return fmt("uniform logits over %zu classes gave %.17g", c, v);
  }
  for (double m : {0.5, 1.0, 2.0, 3.25}) {
    Tape t;
    auto s = t.constant(Tensor(1, 3, {0.5, -1.0, 2.0}));
    auto pos = t.constant(Tensor(1, 3, {1.5, -1.0, 2.5}));
    auto neg = t.constant(Tensor(1, 3, {0.5, -2.5, 2.0}));
    double v = scalar(t, triplet_loss(t, s, pos, neg, m));
    if (v != m)
      return fmt("equidistant triplet with m=%g gave %.17g", m, v);
  }
  {
    Tape t;
    auto reps = t.constant(Tensor(6, 2, {0, 0, 0, 1, 1, 0, 40, 0, 40, 1, 41, 0}));
    double v = scalar(t, space_loss(t, reps, {0, 0, 0, 1, 1, 1}, 2.0));
    if (v != 0.0)
      return fmt("margin-satisfied batch gave %.17g", v);
  }
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t n = 3 + rng.below(10);
    std::vector<int> labels(n);
    for (auto &l : labels)
      l = static_cast<int>(rng.below(3));
    labels[0] = labels[1] = 0;
    labels[2] = 1;
    Tensor r = random_tensor(n, 6, rng);
    ParamStore empty;
    Tape a, b;
    double space = scalar(a, space_loss(a, a.constant(r), labels, 2.0));
    double comb = scalar(b, combined_loss(b, b.constant(r), labels, std::vector<int>(n, 0),
                                          HeadVars::bind(b, empty), 2.0, 0.0)
                                .total);
    if (std::memcmp(&space, &comb, sizeof space) != 0)
      return fmt("lambda=0 gave %.17g, space loss %.17g", comb, space);
  }
  return {};
}

// ---------------------------------------------------------------- gradients

Outcome gradient_suite() {
  Rng rng(1234);
  std::string worst;
  double worst_rel = 0;
  for (const auto &c : gradient_cases()) {
    for (int trial = 0; trial < 10; ++trial) {
      GradReport r = c.run(rng);
      if (r.checked == 0)
        return c.name + ": nothing checked";
      if (r.max_rel >= 1e-4)
        return fmt("%s trial %d: rel %.3g at %s", c.name.c_str(), trial, r.max_rel,
                   r.worst.c_str());
      if (r.max_rel > worst_rel) {
        worst_rel = r.max_rel;
        worst = c.name;
      }
    }
  }
  std::printf("  worst relative error %.3g (%s)\n", worst_rel, worst.c_str());
  return {};
}

// ---------------------------------------------------------------- kNN

// Independent linear-scan implementation of the neighbour vote.
std::vector<Candidate> brute_force(const TypeMap &map, const std::vector<double> &q,
                                   std::size_t k, double p, std::size_t top) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t i = 0; i < map.size(); ++i) {
    double d = 0;
    for (std::size_t j = 0; j < q.size(); ++j)
      d += std::abs(q[j] - static_cast<double>(map.marker(i).vec[j]));
    all.emplace_back(d, i);
  }
  std::sort(all.begin(), all.end());
  all.resize(std::min(k, all.size()));
  std::vector<TypeExpr> order;
  std::map<TypeExpr, double> mass;
  double z = 0;
  for (auto [d, i] : all) {
    double w = p == 0 ? 1.0 : std::pow(std::max(d, 1e-9), -p);
    const TypeExpr &t = map.marker(i).type;
    if (!mass.count(t))
      order.push_back(t);
    mass[t] += w;
    z += w;
  }
  std::vector<Candidate> out;
  for (const auto &t : order)
    out.push_back({t, mass[t] / z});
  std::stable_sort(out.begin(), out.end(),
                   [](const Candidate &a, const Candidate &b) { return a.probability > b.probability; });
  if (out.size() > top)
    out.resize(top);
  return out;
}

Outcome knn_oracle() {
  Rng rng(99);
  std::vector<TypeExpr> pool;
  for (const char *t : {"int", "str", "float", "bool", "bytes", "List[int]", "List[str]",
                        "Dict[str, int]", "Optional[str]", "Set[int]", "Widget", "Tuple[int, str]"})
    pool.push_back(parse_type(t));
  const double ps[] = {0.0, 1.0, 2.0, 3.5};
  std::size_t queries = 0;
  for (std::size_t size : {1u, 17u, 500u, 2048u, 4096u}) {
    std::size_t dim = 2 + rng.below(15);
    TypeMap map(dim);
    std::vector<double> v(dim);
    for (std::size_t i = 0; i < size; ++i) {
      for (auto &x : v)
        x = rng.uniform(-1, 1);
      map.add(v, pool[rng.below(pool.size())], Provenance::Corpus);
    }
    if (map.indexed())
      return fmt("map of %zu markers left the exact regime", size);
    for (int n = 0; n < 200; ++n, ++queries) {
      for (auto &x : v)
        x = rng.uniform(-1.2, 1.2);
      PredictionConfig cfg;
      cfg.k = 1 + rng.below(20);
      cfg.p = ps[rng.below(4)];
      cfg.max_candidates = 1 + rng.below(12);
      auto got = knn_predict(map, v, cfg);
      auto want = brute_force(map, v, cfg.k, cfg.p, cfg.max_candidates);
      if (got.size() != want.size())
        return fmt("query %zu: %zu candidates, oracle %zu", queries, got.size(), want.size());
      for (std::size_t i = 0; i < got.size(); ++i)
        if (got[i].type != want[i].type ||
            std::abs(got[i].probability - want[i].probability) > 1e-12)
          return fmt("query %zu rank %zu: %s %.17g vs oracle %s %.17g", queries, i,
                     got[i].type.str().c_str(), got[i].probability, want[i].type.str().c_str(),
                     want[i].probability);
    }
  }
  if (queries != 1000)
    return fmt("ran %zu queries", queries);

  TypeMap worked(1);
  worked.add(std::vector<double>{1.0}, parse_type("int"), Provenance::Corpus);
  worked.add(std::vector<double>{-1.0}, parse_type("int"), Provenance::Corpus);
  worked.add(std::vector<double>{2.0}, parse_type("str"), Provenance::Corpus);
  auto c = knn_predict(worked, std::vector<double>{0.0}, {.k = 3, .p = 1.0});
  if (c.size() != 2 || c[0].type != parse_type("int") || std::abs(c[0].probability - 0.8) > 1e-9 ||
      std::abs(c[1].probability - 0.2) > 1e-9)
    return std::string("worked example does not give 0.8 / 0.2");
  return {};
}

// ---------------------------------------------------------------- graphs

Outcome graph_fixtures() {
  auto names = graph_fixture_names();
  if (names.size() != 11 || !std::count(names.begin(), names.end(), "fig3"))
    return fmt("expected fig3 plus 10 fixtures, found %zu", names.size());
  for (const auto &n : names) {
    std::string base = fixture_dir() + "/graphs/" + n;
    CodeGraph g = extract_graph(read_file_text(base + ".py"), n);
    g.validate();
    auto got = graph_multiset(g);
    auto want = read_multiset(base + ".expect");
    if (got != want) {
      std::vector<std::string> extra, missing;
      std::set_difference(got.begin(), got.end(), want.begin(), want.end(),
                          std::back_inserter(extra));
      std::set_difference(want.begin(), want.end(), got.begin(), got.end(),
                          std::back_inserter(missing));
      return n + ": " + std::to_string(extra.size()) + " unexpected, " +
             std::to_string(missing.size()) + " missing" +
             (extra.empty() ? "" : " first unexpected '" + extra[0] + "'") +
             (missing.empty() ? "" : " first missing '" + missing[0] + "'");
    }
  }
  CodeGraph g = extract_graph(read_file_text(fixture_dir() + "/graphs/fig3.py"));
  std::set<int> i_symbols;
  std::size_t i_tokens = 0;
  for (auto [tok, sym] : g.edges_of(EdgeLabel::OccurrenceOf))
    if (g.nodes[tok].label == "i") {
      ++i_tokens;
      i_symbols.insert(sym);
    }
  if (i_tokens != 2 || i_symbols.size() != 1)
    return std::string("fig3: the two uses of i do not share one symbol node");
  std::set<std::string> subs;
  for (auto [tok, voc] : g.edges_of(EdgeLabel::SubtokenOf))
    if (g.nodes[tok].label == "get_foo")
      subs.insert(g.nodes[voc].label);
  if (subs != std::set<std::string>{"get", "foo"})
    return std::string("fig3: get_foo is not linked to vocabulary nodes get and foo");
  return {};
}

// ---------------------------------------------------------------- training

struct Overfit {
  std::unique_ptr<Model> model;
  std::vector<CodeGraph> corpus;
};

Overfit overfit_state;

TrainConfig overfit_config() {
  TrainConfig c;
  c.loss = LossKind::Combined;
  c.gnn.dim = 64;
  c.gnn.steps = 8;
  c.batch_symbols = 32;
  c.class_min_count = 1;
  c.epochs = 200;
  c.seed = 0;
  return c;
}

// Trains until leave-one-out exact match reaches 90%, evaluated every ten
// epochs. Returns the epochs run and the final rate.
std::pair<std::size_t, double> train_to_target(const std::vector<CodeGraph> &corpus,
                                               std::size_t max_epochs, TrainResult &out) {
  TrainConfig c = overfit_config();
  c.epochs = max_epochs;
  double rate = 0;
  out = train(c, corpus, {}, [&](const EpochLog &e, const Model &m) {
    if ((e.epoch + 1) % 10 != 0)
      return true;
    rate = leave_one_out_exact(m, corpus);
    std::printf("  epoch %zu: leave-one-out exact %.3f\n", e.epoch + 1, rate);
    std::fflush(stdout);
    return rate < 0.9;
  });
  return {out.log.size(), rate};
}

Outcome overfit() {
  overfit_state.corpus = synthetic_corpus({.files = 20, .seed = 1});
  std::size_t annotated = 0;
  for (const auto &g : overfit_state.corpus)
    annotated += g.annotated_count();
  TrainResult first;
  auto [epochs, rate] = train_to_target(overfit_state.corpus, 200, first);
  if (rate < 0.9)
    return fmt("leave-one-out exact %.3f after %zu epochs (%zu symbols)", rate, epochs, annotated);
  TrainResult second;
  TrainConfig c = overfit_config();
  c.epochs = epochs;
  second = train(c, overfit_state.corpus, {});
  if (encode_checkpoint(first.checkpoint) != encode_checkpoint(second.checkpoint))
    return std::string("second run with the same seed produced a different checkpoint");
  overfit_state.model = std::make_unique<Model>(std::move(first.checkpoint));
  double final_rate = leave_one_out_exact(*overfit_state.model, overfit_state.corpus);
  if (final_rate < 0.9)
    return fmt("saved model scores %.3f", final_rate);
  std::printf("  %zu symbols, %.1f%% after %zu epochs, rerun byte-identical\n", annotated,
              100 * final_rate, epochs);
  return {};
}

// Index of the first symbol called `name` of `kind` in `g`.
std::optional<std::size_t> find_symbol(const CodeGraph &g, const std::string &name,
                                       SymbolKind kind) {
  for (std::size_t i = 0; i < g.symbols.size(); ++i)
    if (g.symbols[i].name == name && g.symbols[i].kind == kind)
      return i;
  return std::nullopt;
}

Outcome one_shot() {
  const TypeExpr widget = parse_type("Widget");
  std::vector<CodeGraph> corpus = overfit_state.corpus;
  if (corpus.empty())
    corpus = synthetic_corpus({.files = 20, .seed = 1});
  if (type_counts(corpus).count(widget))
    return std::string("training corpus is not withholding Widget");

  std::unique_ptr<Model> owned;
  const Model *model = overfit_state.model.get();
  if (!model) {
    TrainResult r;
    train_to_target(corpus, 60, r);
    owned = std::make_unique<Model>(std::move(r.checkpoint));
    model = owned.get();
  }

  auto held = synthetic_corpus({.files = 2, .seed = 77, .annotate_widget = true});
  const CodeGraph &a = held[0], &b = held[1];
  auto sa = find_symbol(a, "widget", SymbolKind::Variable);
  auto sb = find_symbol(b, "widget", SymbolKind::Variable);
  if (!sa || !sb || a.symbols[*sa].annotation != widget || b.symbols[*sb].annotation != widget)
    return std::string("held-out files lack an annotated widget variable");

  // Classification-only variant.
  TrainConfig cc = overfit_config();
  cc.loss = LossKind::Class;
  cc.epochs = 5;
  Model classifier(train(cc, corpus, {}).checkpoint);
  if (!classifier.has_classifier())
    return std::string("class-only model has no classifier head");
  const auto &classes = classifier.checkpoint().classes;
  if (std::count(classes.begin(), classes.end(), widget.str()))
    return std::string("Widget is among the classifier outputs");
  Tensor reps_a = classifier.embed(a);
  for (const auto &cand : classifier.classify(reps_a, classes.size())[*sa])
    if (cand.type == widget && cand.probability != 0)
      return fmt("classifier gives Widget probability %g", cand.probability);

  // Type-space variant: one new marker.
  TypeMap map = build_map(*model, corpus);
  Tensor ea = model->embed(a);
  std::vector<double> bound(ea.row_ptr(*sa), ea.row_ptr(*sa) + ea.cols);
  auto before = knn_predict(map, bound, {});
  for (const auto &cand : before)
    if (cand.type == widget)
      return std::string("Widget predicted before it was bound");
  map.add(bound, widget, Provenance::Accepted);
  auto one = knn_predict(map, bound, {.k = 1});
  if (one.size() != 1 || one[0].type != widget || one[0].probability != 1.0)
    return fmt("k=1 on the bound embedding gives %s at %g",
               one.empty() ? "nothing" : one[0].type.str().c_str(),
               one.empty() ? 0.0 : one[0].probability);
  Tensor eb = model->embed(b);
  auto cands = knn_predict(map, eb.row_ptr(*sb), {});
  auto hit = std::find_if(cands.begin(), cands.end(),
                          [&](const Candidate &c) { return c.type == widget; });
  if (hit == cands.end())
    return fmt("Widget missing from the %zu candidates of the held-out symbol", cands.size());
  std::printf("  held-out symbol: Widget at rank %zu with probability %.3f\n",
              static_cast<std::size_t>(hit - cands.begin()) + 1, hit->probability);
  return {};
}

// ---------------------------------------------------------------- desk pipeline

struct DeskRun {
  std::string checkpoint, map, report;
  Report parsed;
};

DeskRun desk_run() {
  auto corpus = synthetic_corpus({.files = 40, .seed = 5, .functions_per_file = 3});
  Split split = split_corpus(corpus, 5);
  TrainConfig c;
  c.epochs = 4;
  c.batch_symbols = 32;
  c.class_min_count = 1;
  c.seed = 3;
  TrainResult r = train(c, split.train, split.valid);
  DeskRun out;
  out.checkpoint = encode_checkpoint(r.checkpoint);
  Model model(std::move(r.checkpoint));
  std::vector<CodeGraph> indexed = split.train;
  indexed.insert(indexed.end(), split.valid.begin(), split.valid.end());
  TypeMap map = build_map(model, indexed);
  out.map = encode_map(map);
  out.parsed = evaluate(model, map, split.test, {});
  out.report = report_json(out.parsed);
  return out;
}

std::optional<DeskRun> desk;

Outcome metric_definitions() {
  struct Row {
    const char *pred, *truth;
    bool match;
  };
  const Row table[] = {
      {"List", "List[int]", true},          {"List[int]", "List", true},
      {"List[str]", "List[int]", true},     {"Dict[str, int]", "List", false},
      {"Dict[str, int]", "Dict", true},     {"int", "str", false},
      {"Optional[int]", "Optional[str]", true}, {"Tuple[int]", "List[int]", false},
  };
  for (const auto &r : table)
    if (match_up_to_parametric(parse_type(r.pred), parse_type(r.truth)) != r.match)
      return fmt("%s vs %s should be %s", r.pred, r.truth, r.match ? "a match" : "no match");
  if (!desk)
    desk = desk_run();
  const auto &records = desk->parsed.records;
  if (records.empty())
    return std::string("desk evaluation produced no records");
  for (const auto &r : records)
    if (r.exact && !r.neutral)
      return "exact but not neutral: " + r.name + " in " + r.file_id;
  std::printf("  %zu evaluation records\n", records.size());
  return {};
}

Outcome neutrality_lattice() {
  auto T = [](const char *s) { return parse_type(s); };
  TypeLattice l = build_type_lattice({T("List[int]"), T("int"), T("bool"), T("str"),
                                      T("Dict[str, List[int]]"), T("Optional[str]")});
  if (!l.is_subtype(T("List[int]"), T("List[Any]")) || !l.is_subtype(T("List[Any]"), T("Any")) ||
      !l.is_subtype(T("List[int]"), T("Any")))
    return std::string("List[int] :< List[Any] :< Any does not hold");
  if (l.is_subtype(T("List[Any]"), T("List[int]")))
    return std::string("List[Any] :< List[int] should not hold");
  for (const auto &t : l.nodes())
    if (check_neutral(top_type(), t, l))
      return "check_neutral(Any, " + t.str() + ") is true";
  TypeExpr deep = normalize_type(T("List[List[List[int]]]"));
  if (deep.str() != "List[List[Any]]")
    return "depth rewrite gave " + deep.str();
  return {};
}

Outcome threshold_subsets() {
  if (!desk)
    desk = desk_run();
  const auto &records = desk->parsed.records;
  std::vector<double> ts = default_thresholds();
  for (const auto &r : records)
    if (r.prediction)
      ts.push_back(r.confidence);
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  std::vector<std::vector<std::size_t>> sets;
  for (double t : ts)
    sets.push_back(emitted_at(records, t));
  for (std::size_t i = 0; i < ts.size(); ++i)
    for (std::size_t j = i + 1; j < ts.size(); ++j)
      if (!std::includes(sets[i].begin(), sets[i].end(), sets[j].begin(), sets[j].end()))
        return fmt("emitted set at %.6f is not within the set at %.6f", ts[j], ts[i]);
  std::printf("  %zu thresholds over %zu records\n", ts.size(), records.size());
  return {};
}

Outcome determinism() {
  if (!desk)
    desk = desk_run();
  DeskRun again = desk_run();
  if (again.checkpoint != desk->checkpoint)
    return std::string("checkpoints differ");
  if (again.map != desk->map)
    return std::string("maps differ");
  if (again.report != desk->report)
    return std::string("reports differ");
  std::printf("  checkpoint %zu bytes, map %zu bytes, report %zu bytes\n", desk->checkpoint.size(),
              desk->map.size(), desk->report.size());
  return {};
}

} // namespace

int main() {
  check("loss golden values", loss_goldens);
  check("gradient suite", gradient_suite);
  check("knn oracle and worked example", knn_oracle);
  check("graph extraction fixtures", graph_fixtures);
  check("overfit capacity", overfit);
  check("open-vocabulary one-shot", one_shot);
  check("metric definitions", metric_definitions);
  check("neutrality lattice", neutrality_lattice);
  check("threshold subset property", threshold_subsets);
  check("determinism", determinism);
  std::printf("%d of 10 criteria failing\n", failures);
  return failures ? 1 : 0;
}
