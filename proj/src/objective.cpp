#include "typespace/objective.hpp"

#include "typespace/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace typespace {

std::string_view loss_kind_name(LossKind k) {
  switch (k) {
  case LossKind::Class:
    return "class";
  case LossKind::Space:
    return "space";
  case LossKind::Combined:
    return "combined";
  }
  return "?";
}

std::optional<LossKind> parse_loss_kind(std::string_view name) {
  if (name == "typilus") // older spelling of "combined", still accepted on the command line
    return LossKind::Combined;
  for (LossKind k : {LossKind::Class, LossKind::Space, LossKind::Combined})
    if (loss_kind_name(k) == name)
      return k;
  return std::nullopt;
}

ClassVocabulary::ClassVocabulary() {
  names_.push_back(kUnk);
  index_.emplace(kUnk, 0);
}

ClassVocabulary ClassVocabulary::build(const std::vector<CodeGraph> &graphs,
                                       std::size_t min_count, bool erase) {
  std::map<std::string, std::size_t> counts;
  for (const auto &g : graphs)
    for (const auto &s : g.symbols)
      if (s.annotation)
        ++counts[(erase ? erase_type_parameters(*s.annotation) : *s.annotation).str()];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto &a, const auto &b) { return a.second > b.second; });
  std::vector<std::string> names;
  for (auto &[n, c] : ranked)
    if (c >= min_count)
      names.push_back(n);
  return from_list(names, erase);
}

ClassVocabulary ClassVocabulary::from_list(const std::vector<std::string> &names, bool erase) {
  ClassVocabulary v;
  v.erase_ = erase;
  for (const auto &n : names)
    if (n != kUnk && v.index_.emplace(n, static_cast<int>(v.names_.size())).second)
      v.names_.push_back(n);
  return v;
}

int ClassVocabulary::lookup(const TypeExpr &t) const {
  auto it = index_.find((erase_ ? erase_type_parameters(t) : t).str());
  return it == index_.end() ? 0 : it->second;
}

void init_head_params(ParamStore &params, std::size_t dim, std::size_t classes, bool projection,
                      Rng &rng) {
  Tensor protos(dim, classes);
  init_uniform(protos, rng);
  params.add("class/prototypes", std::move(protos));
  Tensor bias(1, classes);
  init_uniform(bias, rng);
  params.add("class/bias", std::move(bias));
  if (projection) {
    Tensor w(dim, dim);
    init_uniform(w, rng);
    params.add("proj/W", std::move(w));
  }
}

std::vector<std::string> head_param_names() {
  return {"class/prototypes", "class/bias", "proj/W"};
}

Tape::Var classification_loss(Tape &tape, Tape::Var reps, const std::vector<int> &targets,
                              Tape::Var prototypes, Tape::Var bias) {
  Tape::Var logits = tape.add_bias(tape.matmul(reps, prototypes), bias);
  return tape.mean(tape.softmax_xent(logits, targets));
}

Tape::Var triplet_loss(Tape &tape, Tape::Var s, Tape::Var pos, Tape::Var neg, double margin) {
  // Written as h(d+ - d-, m) so that the loss vanishes once the positive is
  // closer than the negative by at least m.
  Tape::Var gap = tape.sub(tape.l1_rows(s, pos), tape.l1_rows(s, neg));
  return tape.mean(tape.hinge(gap, margin));
}

namespace {

double l1(const Tensor &t, std::size_t a, std::size_t b) {
  const double *x = t.row_ptr(a), *y = t.row_ptr(b);
  double d = 0;
  for (std::size_t k = 0; k < t.cols; ++k)
    d += std::abs(x[k] - y[k]);
  return d;
}

} // namespace

Tape::Var space_loss(Tape &tape, Tape::Var reps, const std::vector<int> &labels, double margin) {
  const Tensor &r = tape.value(reps);
  const std::size_t n = r.rows;
  if (labels.size() != n)
    throw ContractViolation("space_loss: " + std::to_string(labels.size()) + " labels for " +
                            r.shape_str() + " embeddings");
  std::vector<int> left, right;
  std::vector<double> weight;
  std::vector<double> dist(n);
  for (std::size_t s = 0; s < n; ++s) {
    double pos_max = -std::numeric_limits<double>::infinity();
    double neg_min = std::numeric_limits<double>::infinity();
    bool has_pos = false, has_neg = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == s)
        continue;
      dist[j] = l1(r, s, j);
      if (labels[j] == labels[s]) {
        has_pos = true;
        pos_max = std::max(pos_max, dist[j]);
      } else {
        has_neg = true;
        neg_min = std::min(neg_min, dist[j]);
      }
    }
    if (!has_pos || !has_neg)
      continue;
    std::vector<int> pull, push;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == s)
        continue;
      if (labels[j] == labels[s]) {
        if (dist[j] > neg_min - margin)
          pull.push_back(static_cast<int>(j));
      } else if (dist[j] < pos_max + margin) {
        push.push_back(static_cast<int>(j));
      }
    }
    for (int j : pull) {
      left.push_back(static_cast<int>(s));
      right.push_back(j);
      weight.push_back(1.0 / (static_cast<double>(pull.size()) * static_cast<double>(n)));
    }
    for (int j : push) {
      left.push_back(static_cast<int>(s));
      right.push_back(j);
      weight.push_back(-1.0 / (static_cast<double>(push.size()) * static_cast<double>(n)));
    }
  }
  if (left.empty())
    return tape.constant(Tensor::scalar(0.0));
  std::size_t m = weight.size();
  Tape::Var d = tape.l1_rows(tape.gather_rows(reps, left), tape.gather_rows(reps, right));
  return tape.sum(tape.mul(d, tape.constant(Tensor(m, 1, std::move(weight)))));
}

HeadVars HeadVars::bind(Tape &tape, const ParamStore &params) {
  auto leaf = [&](const char *name) -> Tape::Var {
    if (!params.has(name))
      return -1;
    int id = params.id(name);
    if (tape.params() == &params)
      return tape.param(id);
    return tape.constant(params.value(id));
  };
  HeadVars h;
  h.prototypes = leaf("class/prototypes");
  h.bias = leaf("class/bias");
  h.projection = leaf("proj/W");
  return h;
}

LossTerms combined_loss(Tape &tape, Tape::Var reps, const std::vector<int> &labels,
                       const std::vector<int> &classes, const HeadVars &head, double margin,
                       double lambda) {
  LossTerms out;
  out.space = space_loss(tape, reps, labels, margin);
  out.total = out.space;
  if (lambda == 0)
    return out;
  if (head.projection < 0 || head.prototypes < 0)
    throw ContractViolation("combined_loss: missing projection or classifier head");
  Tape::Var projected = tape.matmul(reps, head.projection);
  out.cls = classification_loss(tape, projected, classes, head.prototypes, head.bias);
  out.total = tape.add(out.space, tape.scale(out.cls, lambda));
  return out;
}

LossTerms batch_loss(Tape &tape, Tape::Var reps, const std::vector<int> &labels,
                     const std::vector<int> &classes, const HeadVars &head,
                     const TrainConfig &config) {
  switch (config.loss) {
  case LossKind::Class: {
    LossTerms out;
    out.cls = classification_loss(tape, reps, classes, head.prototypes, head.bias);
    out.total = out.cls;
    return out;
  }
  case LossKind::Space: {
    LossTerms out;
    out.space = space_loss(tape, reps, labels, config.margin);
    out.total = out.space;
    return out;
  }
  case LossKind::Combined:
    return combined_loss(tape, reps, labels, classes, head, config.margin, config.lambda);
  }
  throw ContractViolation("batch_loss: unknown loss");
}

std::vector<std::vector<int>> make_batches(const std::vector<CodeGraph> &graphs,
                                           std::size_t batch_symbols, Rng &rng) {
  if (batch_symbols == 0)
    throw ContractViolation("make_batches: batch_symbols must be positive");
  std::vector<int> order;
  for (std::size_t i = 0; i < graphs.size(); ++i)
    if (graphs[i].annotated_count() > 0)
      order.push_back(static_cast<int>(i));
  rng.shuffle(order);
  std::vector<std::vector<int>> batches;
  std::vector<int> current;
  std::size_t count = 0;
  for (int i : order) {
    current.push_back(i);
    count += graphs[i].annotated_count();
    if (count >= batch_symbols) {
      batches.push_back(std::move(current));
      current.clear();
      count = 0;
    }
  }
  if (!current.empty())
    batches.push_back(std::move(current));
  return batches;
}

BatchTargets batch_targets(const GraphBatch &batch, const std::vector<const CodeGraph *> &graphs,
                           const ClassVocabulary &classes) {
  BatchTargets out;
  std::map<TypeExpr, int> ids;
  for (std::size_t row = 0; row < batch.symbol_refs.size(); ++row) {
    auto [g, s] = batch.symbol_refs[row];
    const auto &ann = graphs[g]->symbols[s].annotation;
    if (!ann)
      continue;
    auto [it, fresh] = ids.emplace(*ann, static_cast<int>(ids.size()));
    (void)fresh;
    out.rows.push_back(static_cast<int>(row));
    out.labels.push_back(it->second);
    out.classes.push_back(classes.lookup(*ann));
    out.types.push_back(*ann);
  }
  return out;
}

} // namespace typespace
