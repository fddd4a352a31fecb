#include "typespace/errors.hpp"
#include "typespace/harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <set>

namespace typespace {

std::vector<SymbolPrediction> predict_graph(const Model &model, const TypeMap &map,
                                            const CodeGraph &g, const PredictionConfig &config) {
  std::vector<SymbolPrediction> out;
  if (g.symbols.empty())
    return out;
  Tensor reps = model.embed(g);
  if (model.has_classifier()) {
    auto cands = model.classify(reps, config.max_candidates);
    for (std::size_t s = 0; s < g.symbols.size(); ++s)
      out.push_back({s, std::move(cands[s])});
    return out;
  }
  for (std::size_t s = 0; s < g.symbols.size(); ++s)
    out.push_back({s, knn_predict(map, reps.row_ptr(s), config)});
  return out;
}

bool match_up_to_parametric(const TypeExpr &pred, const TypeExpr &truth) {
  return erase_type_parameters(pred) == erase_type_parameters(truth);
}

void score_record(EvalRecord &r, const TypeLattice &lattice) {
  if (!r.prediction) {
    r.exact = r.up_to_parametric = r.neutral = false;
    return;
  }
  r.exact = *r.prediction == r.truth;
  r.up_to_parametric = match_up_to_parametric(*r.prediction, r.truth);
  r.neutral = check_neutral(*r.prediction, r.truth, lattice);
}

Report summarize(std::vector<EvalRecord> records) {
  Report rep;
  rep.records = std::move(records);
  for (const char *g : {"all", "common", "rare", "variable", "parameter", "return"})
    rep.groups[g];
  for (const auto &r : rep.records) {
    for (const std::string &g :
         {std::string("all"), std::string(r.rare ? "rare" : "common"),
          std::string(symbol_kind_name(r.kind))}) {
      auto &t = rep.groups[g];
      ++t.count;
      t.exact += r.exact;
      t.up_to_parametric += r.up_to_parametric;
      t.neutral += r.neutral;
    }
  }
  return rep;
}

Report evaluate(const Model &model, const TypeMap &map, const std::vector<CodeGraph> &test,
                const PredictionConfig &config) {
  std::vector<EvalRecord> records;
  std::set<TypeExpr> types;
  for (const auto &g : test) {
    if (g.annotated_count() == 0)
      continue;
    auto preds = predict_graph(model, map, g, config);
    for (const auto &p : preds) {
      const SymbolInfo &s = g.symbols[p.symbol];
      if (!s.annotation)
        continue;
      EvalRecord r;
      r.file_id = g.file_id;
      r.name = s.name;
      r.kind = s.kind;
      r.truth = *s.annotation;
      if (!p.candidates.empty()) {
        r.prediction = p.candidates.front().type;
        r.confidence = p.candidates.front().probability;
        types.insert(*r.prediction);
      }
      auto it = model.train_counts().find(r.truth);
      r.rare = it == model.train_counts().end() || it->second < kRareBelow;
      types.insert(r.truth);
      records.push_back(std::move(r));
    }
  }
  TypeLattice lattice = build_type_lattice(types);
  for (auto &r : records)
    score_record(r, lattice);
  return summarize(std::move(records));
}

std::string report_json(const Report &report) {
  using json = nlohmann::ordered_json;
  json out;
  json summary = json::object();
  for (const char *g : {"all", "common", "rare", "variable", "parameter", "return"}) {
    auto it = report.groups.find(g);
    MetricTotals t = it == report.groups.end() ? MetricTotals{} : it->second;
    auto pct = [&](std::size_t n) {
      return t.count == 0 ? json() : json(100.0 * static_cast<double>(n) / static_cast<double>(t.count));
    };
    summary[g] = {{"count", t.count},
                  {"exact", pct(t.exact)},
                  {"up_to_parametric", pct(t.up_to_parametric)},
                  {"neutral", pct(t.neutral)}};
  }
  out["summary"] = std::move(summary);
  json recs = json::array();
  for (const auto &r : report.records) {
    recs.push_back({{"file", r.file_id},
                    {"symbol", r.name},
                    {"kind", symbol_kind_name(r.kind)},
                    {"truth", r.truth.str()},
                    {"prediction", r.prediction ? json(r.prediction->str()) : json()},
                    {"confidence", r.confidence},
                    {"exact", r.exact},
                    {"up_to_parametric", r.up_to_parametric},
                    {"neutral", r.neutral},
                    {"rare", r.rare}});
  }
  out["records"] = std::move(recs);
  return out.dump(2) + "\n";
}

std::vector<std::size_t> emitted_at(const std::vector<EvalRecord> &records, double threshold) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].prediction && records[i].confidence >= threshold)
      out.push_back(i);
  return out;
}

std::vector<PrPoint> pr_curve(const std::vector<EvalRecord> &records,
                              std::vector<double> thresholds) {
  std::sort(thresholds.begin(), thresholds.end());
  std::vector<PrPoint> out;
  if (records.empty())
    return out;
  for (double t : thresholds) {
    auto emitted = emitted_at(records, t);
    if (emitted.empty())
      continue;
    std::size_t neutral = 0;
    for (std::size_t i : emitted)
      neutral += records[i].neutral;
    out.push_back({t, static_cast<double>(emitted.size()) / static_cast<double>(records.size()),
                   static_cast<double>(neutral) / static_cast<double>(emitted.size()),
                   emitted.size()});
  }
  return out;
}

std::vector<double> default_thresholds() {
  std::vector<double> t;
  for (int i = 0; i <= 20; ++i)
    t.push_back(i / 20.0);
  return t;
}

std::string pr_csv(const std::vector<PrPoint> &points) {
  std::string out = "threshold,recall,precision,emitted\n";
  char buf[128];
  for (const auto &p : points) {
    std::snprintf(buf, sizeof buf, "%.4f,%.6f,%.6f,%zu\n", p.threshold, p.recall, p.precision,
                  p.emitted);
    out += buf;
  }
  return out;
}

} // namespace typespace
