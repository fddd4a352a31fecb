#include "typespace/errors.hpp"
#include "typespace/harness.hpp"

#include <json.hpp>

#include <cmath>
#include <limits>
#include <sstream>

namespace typespace {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string join_labels(const std::set<EdgeLabel> &labels) {
  std::string out;
  for (EdgeLabel l : all_edge_labels()) {
    if (!labels.count(l))
      continue;
    if (!out.empty())
      out += ',';
    out += edge_label_name(l);
  }
  return out;
}

const std::string &meta_get(const std::map<std::string, std::string> &meta,
                            const std::string &key) {
  auto it = meta.find(key);
  if (it == meta.end())
    throw DataError("checkpoint: missing metadata '" + key + "'");
  return it->second;
}

std::size_t meta_size(const std::map<std::string, std::string> &meta, const std::string &key) {
  const std::string &v = meta_get(meta, key);
  try {
    std::size_t used = 0;
    unsigned long long n = std::stoull(v, &used);
    if (used == v.size())
      return static_cast<std::size_t>(n);
  } catch (const std::exception &) {
  }
  throw DataError("checkpoint: bad metadata " + key + "=" + v);
}

} // namespace

GnnConfig gnn_config_from_meta(const std::map<std::string, std::string> &meta) {
  GnnConfig g;
  g.dim = meta_size(meta, "dim");
  g.steps = meta_size(meta, "steps");
  g.inverse_edges = meta_get(meta, "inverse_edges") == "true";
  g.active.clear();
  std::stringstream ss(meta_get(meta, "edges"));
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty())
      continue;
    auto l = parse_edge_label(item);
    if (!l)
      throw DataError("checkpoint: unknown edge label '" + item + "'");
    g.active.insert(*l);
  }
  return g;
}

Model::Model(Checkpoint checkpoint) : ckpt_(std::move(checkpoint)) {
  vocab_ = Vocabulary::from_list(ckpt_.vocabulary);
  gnn_ = gnn_config_from_meta(ckpt_.meta);
  if (gnn_.dim != ckpt_.dim)
    throw DataError("checkpoint: header D " + std::to_string(ckpt_.dim) + " != metadata D " +
                    std::to_string(gnn_.dim));
  auto loss = parse_loss_kind(meta_get(ckpt_.meta, "loss"));
  if (!loss)
    throw DataError("checkpoint: unknown loss '" + meta_get(ckpt_.meta, "loss") + "'");
  loss_ = *loss;
  classifier_ = loss_ == LossKind::Class && ckpt_.params.has("class/prototypes");
  if (auto it = ckpt_.meta.find("train_type_counts"); it != ckpt_.meta.end()) {
    auto j = nlohmann::json::parse(it->second, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw DataError("checkpoint: bad train_type_counts");
    for (auto &[k, v] : j.items())
      train_counts_[parse_type(k)] = v.get<std::size_t>();
  }
  try {
    encoder_ = std::make_unique<Encoder>(gnn_, ckpt_.params);
  } catch (const ContractViolation &e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
  if (ckpt_.params.value("embedding").rows != vocab_.size())
    throw DataError("checkpoint: embedding rows do not match the vocabulary");
}

Tensor Model::embed(const CodeGraph &g) const { return encoder_->embed(g, vocab_); }

std::vector<std::vector<Candidate>> Model::classify(const Tensor &reps, std::size_t top) const {
  if (!classifier_)
    throw ContractViolation("classify: model has no classifier head");
  const Tensor &protos = ckpt_.params.value("class/prototypes");
  const Tensor &bias = ckpt_.params.value("class/bias");
  std::vector<TypeExpr> types;
  for (const auto &name : ckpt_.classes)
    types.push_back(name == ClassVocabulary::kUnk ? TypeExpr(name) : parse_type(name));
  std::vector<std::vector<Candidate>> out;
  const std::size_t c = protos.cols;
  for (std::size_t i = 0; i < reps.rows; ++i) {
    std::vector<double> logit(c);
    for (std::size_t j = 0; j < c; ++j) {
      double v = bias(0, j);
      for (std::size_t k = 0; k < reps.cols; ++k)
        v += reps(i, k) * protos(k, j);
      logit[j] = v;
    }
    double mx = *std::max_element(logit.begin(), logit.end());
    double z = 0;
    for (double &v : logit) {
      v = std::exp(v - mx);
      z += v;
    }
    std::vector<Candidate> cands;
    for (std::size_t j = 1; j < c; ++j)
      cands.push_back({types[j], logit[j] / z});
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate &a, const Candidate &b) {
      return a.probability > b.probability;
    });
    if (top > 0 && cands.size() > top)
      cands.resize(top);
    out.push_back(std::move(cands));
  }
  return out;
}

std::string epoch_log_line(const EpochLog &e) {
  nlohmann::ordered_json j;
  auto num = [](double v) { return std::isnan(v) ? nlohmann::ordered_json() : nlohmann::ordered_json(v); };
  j["epoch"] = e.epoch;
  j["space"] = num(e.space);
  j["class"] = num(e.cls);
  j["total"] = num(e.total);
  j["valid"] = num(e.valid);
  j["wall_seconds"] = e.wall_seconds;
  return j.dump();
}

namespace {

struct Trainer {
  const TrainConfig &config;
  Vocabulary vocab;
  ClassVocabulary classes;
  ParamStore params;

  Checkpoint snapshot(bool keep_heads, const std::map<TypeExpr, std::size_t> &counts,
                      std::size_t epochs_run, std::size_t best) const {
    Checkpoint c;
    c.dim = config.gnn.dim;
    c.vocabulary = vocab.words();
    c.classes = classes.names();
    c.params = keep_heads ? params : params.without(head_param_names());
    c.params.round_to_float();
    c.meta["loss"] = loss_kind_name(config.loss);
    c.meta["dim"] = std::to_string(config.gnn.dim);
    c.meta["steps"] = std::to_string(config.gnn.steps);
    c.meta["edges"] = join_labels(config.gnn.active);
    c.meta["inverse_edges"] = config.gnn.inverse_edges ? "true" : "false";
    c.meta["seed"] = std::to_string(config.seed);
    c.meta["epochs_run"] = std::to_string(epochs_run);
    c.meta["best_epoch"] = std::to_string(best);
    c.meta["class_erasure"] = classes.erases() ? "true" : "false";
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto &[t, n] : counts)
      j[t.str()] = n;
    c.meta["train_type_counts"] = j.dump();
    return c;
  }

  // Loss terms of one batch; the tape binds `params` for training or reads
  // them as constants.
  LossTerms run(Tape &tape, const std::vector<CodeGraph> &graphs, const std::vector<int> &ids) {
    std::vector<const CodeGraph *> ptrs;
    for (int i : ids)
      ptrs.push_back(&graphs[i]);
    GraphBatch batch = make_graph_batch(ptrs, vocab);
    BatchTargets t = batch_targets(batch, ptrs, classes);
    Encoder enc(config.gnn, params);
    Tape::Var reps = tape.gather_rows(enc.encode(tape, batch), t.rows);
    HeadVars head = HeadVars::bind(tape, params);
    return batch_loss(tape, reps, t.labels, t.classes, head, config);
  }
};

double value_or_nan(const Tape &tape, Tape::Var v) { return v < 0 ? kNaN : tape.value(v).item(); }

} // namespace

TrainResult train(const TrainConfig &config, const std::vector<CodeGraph> &train_set,
                  const std::vector<CodeGraph> &valid_set, const EpochHook &hook) {
  Trainer tr{config, Vocabulary::build(train_set, config.vocab_min_count, config.vocab_max_size),
             ClassVocabulary::build(train_set, config.class_min_count,
                                    config.loss != LossKind::Class),
             {}};
  Rng init_rng(config.seed);
  Rng batch_rng(config.seed ^ 0x9e3779b97f4a7c15ull);
  Encoder::init_params(tr.params, config.gnn, tr.vocab.size(), init_rng);
  if (config.loss != LossKind::Space)
    init_head_params(tr.params, config.gnn.dim, tr.classes.size(),
                     config.loss == LossKind::Combined, init_rng);
  Adam adam(tr.params, config.adam);
  const auto counts = type_counts(train_set);
  const bool keep_heads = config.loss == LossKind::Class;

  // Validation batches keep corpus order.
  std::vector<std::vector<int>> valid_batches;
  {
    std::vector<int> cur;
    std::size_t n = 0;
    for (std::size_t i = 0; i < valid_set.size(); ++i) {
      if (valid_set[i].annotated_count() == 0)
        continue;
      cur.push_back(static_cast<int>(i));
      n += valid_set[i].annotated_count();
      if (n >= config.batch_symbols) {
        valid_batches.push_back(std::move(cur));
        cur.clear();
        n = 0;
      }
    }
    if (!cur.empty())
      valid_batches.push_back(std::move(cur));
  }

  TrainResult result;
  double best_valid = std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    auto start = std::chrono::steady_clock::now();
    auto batches = make_batches(train_set, config.batch_symbols, batch_rng);
    double space = 0, cls = 0, total = 0;
    try {
      for (const auto &ids : batches) {
        Tape tape(&tr.params);
        LossTerms terms = tr.run(tape, train_set, ids);
        double t = tape.value(terms.total).item();
        if (!std::isfinite(t))
          throw Divergence("loss became non-finite at epoch " + std::to_string(epoch));
        space += value_or_nan(tape, terms.space);
        cls += value_or_nan(tape, terms.cls);
        total += t;
        tape.backward(terms.total);
        adam.step();
      }
    } catch (const NonFiniteValue &) {
      throw Divergence("non-finite values during epoch " + std::to_string(epoch));
    }
    const double nb = batches.empty() ? kNaN : static_cast<double>(batches.size());
    EpochLog log{epoch, space / nb, cls / nb, total / nb, kNaN, 0};
    if (!valid_batches.empty()) {
      double v = 0;
      try {
        for (const auto &ids : valid_batches) {
          Tape tape;
          v += tape.value(tr.run(tape, valid_set, ids).total).item();
        }
      } catch (const NonFiniteValue &) {
        v = kNaN;
      }
      log.valid = v / static_cast<double>(valid_batches.size());
      if (!std::isfinite(log.valid))
        throw Divergence("validation loss became non-finite at epoch " + std::to_string(epoch));
    }
    log.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(log);

    bool improved = valid_batches.empty() || log.valid < best_valid;
    if (improved) {
      best_valid = log.valid;
      result.best_epoch = epoch;
      result.checkpoint = tr.snapshot(keep_heads, counts, epoch + 1, epoch);
    }
    if (hook) {
      Model current(tr.snapshot(true, counts, epoch + 1, epoch));
      if (!hook(log, current))
        break;
    }
  }
  if (result.log.empty())
    result.checkpoint = tr.snapshot(keep_heads, counts, 0, 0);
  result.checkpoint.meta["epochs_run"] = std::to_string(result.log.size());
  return result;
}

TypeMap build_map(const Model &model, const std::vector<CodeGraph> &graphs) {
  TypeMap map(model.dim());
  for (const auto &g : graphs) {
    if (g.annotated_count() == 0)
      continue;
    Tensor reps = model.embed(g);
    for (std::size_t s = 0; s < g.symbols.size(); ++s)
      if (g.symbols[s].annotation)
        map.add(reps.row_ptr(s), *g.symbols[s].annotation, Provenance::Corpus);
  }
  return map;
}

} // namespace typespace
