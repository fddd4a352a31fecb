#include "typespace/ggnn.hpp"

#include "typespace/errors.hpp"

#include <algorithm>
#include <unordered_map>

namespace typespace {

Vocabulary::Vocabulary() {
  words_.push_back(kUnk);
  index_.emplace(kUnk, 0);
}

Vocabulary Vocabulary::build(const std::vector<CodeGraph> &graphs, std::size_t min_count,
                             std::size_t max_size) {
  std::unordered_map<std::string, std::size_t> counts;
  std::unordered_map<std::string, std::vector<std::string>> cache;
  for (const auto &g : graphs) {
    for (const auto &n : g.nodes) {
      auto it = cache.find(n.label);
      if (it == cache.end())
        it = cache.emplace(n.label, subtokenize(n.label)).first;
      for (const auto &st : it->second)
        ++counts[st];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto &[w, c] : counts)
    if (c >= min_count && w != kUnk)
      ranked.emplace_back(w, c);
  std::sort(ranked.begin(), ranked.end(), [](const auto &a, const auto &b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (ranked.size() > max_size)
    ranked.resize(max_size);
  std::vector<std::string> words;
  for (auto &[w, c] : ranked)
    words.push_back(w);
  return from_list(words);
}

Vocabulary Vocabulary::from_list(const std::vector<std::string> &words) {
  Vocabulary v;
  for (const auto &w : words) {
    if (w == kUnk)
      continue;
    if (v.index_.emplace(w, static_cast<int>(v.words_.size())).second)
      v.words_.push_back(w);
  }
  return v;
}

int Vocabulary::lookup(const std::string &subtoken) const {
  auto it = index_.find(subtoken);
  return it == index_.end() ? 0 : it->second;
}

std::vector<int> Vocabulary::encode(const std::string &label) const {
  std::vector<int> out;
  for (const auto &st : subtokenize(label))
    out.push_back(lookup(st));
  return out;
}

GraphBatch make_graph_batch(const std::vector<const CodeGraph *> &graphs,
                            const Vocabulary &vocab) {
  GraphBatch b;
  std::unordered_map<std::string, std::vector<int>> cache;
  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    const CodeGraph &g = *graphs[gi];
    const int offset = static_cast<int>(b.num_nodes);
    for (const auto &n : g.nodes) {
      auto it = cache.find(n.label);
      if (it == cache.end())
        it = cache.emplace(n.label, vocab.encode(n.label)).first;
      b.node_subtokens.push_back(it->second);
    }
    for (const auto &[label, list] : g.edges) {
      auto &out = b.edges[label];
      for (auto [s, d] : list)
        out.emplace_back(s + offset, d + offset);
    }
    for (std::size_t s = 0; s < g.symbols.size(); ++s) {
      b.symbol_nodes.push_back(g.symbols[s].node + offset);
      b.symbol_refs.emplace_back(static_cast<int>(gi), static_cast<int>(s));
    }
    b.num_nodes += g.nodes.size();
  }
  return b;
}

namespace {

std::string edge_param(EdgeLabel l, bool inverse) {
  return std::string(inverse ? "edge_inv/" : "edge/") + std::string(edge_label_name(l));
}

Tape::Var leaf(Tape &tape, const ParamStore &params, int id) {
  if (tape.params() == &params)
    return tape.param(id);
  return tape.constant(params.value(id));
}

} // namespace

void Encoder::init_params(ParamStore &params, const GnnConfig &config,
                          std::size_t vocab_size, Rng &rng) {
  const std::size_t d = config.dim;
  Tensor emb(vocab_size, d);
  init_uniform(emb, rng);
  params.add("embedding", std::move(emb));
  for (EdgeLabel l : all_edge_labels()) {
    if (!config.active.count(l))
      continue;
    for (bool inverse : {false, true}) {
      if (inverse && !config.inverse_edges)
        continue;
      Tensor e(d, d);
      init_uniform(e, rng);
      params.add(edge_param(l, inverse), std::move(e));
    }
  }
  GruWeights::create(params, "gru/", d, rng);
}

Encoder::Encoder(GnnConfig config, const ParamStore &params)
    : config_(std::move(config)), params_(params), embedding_(params.id("embedding")),
      gru_(GruWeights::find(params, "gru/")) {
  if (config_.steps < 1)
    throw ContractViolation("encoder: steps must be >= 1");
  if (params.value(embedding_).cols != config_.dim)
    throw ContractViolation("encoder: embedding width " +
                            std::to_string(params.value(embedding_).cols) + " != D " +
                            std::to_string(config_.dim));
  for (EdgeLabel l : config_.active) {
    forward_[l] = params.id(edge_param(l, false));
    if (config_.inverse_edges)
      inverse_[l] = params.id(edge_param(l, true));
  }
}

Tape::Var Encoder::init_node_states(Tape &tape, const GraphBatch &batch) const {
  std::vector<int> flat, segment;
  Tensor inv(batch.num_nodes, config_.dim);
  for (std::size_t n = 0; n < batch.num_nodes; ++n) {
    const auto &subs = batch.node_subtokens[n];
    for (int s : subs) {
      flat.push_back(s);
      segment.push_back(static_cast<int>(n));
    }
    double f = subs.empty() ? 0.0 : 1.0 / static_cast<double>(subs.size());
    std::fill_n(inv.row_ptr(n), config_.dim, f);
  }
  Tape::Var emb = leaf(tape, params_, embedding_);
  Tape::Var sums = tape.segment_sum(tape.gather_rows(emb, flat), segment, batch.num_nodes);
  return tape.mul(sums, tape.constant(std::move(inv)));
}

Tape::Var Encoder::propagate(Tape &tape, const GraphBatch &batch, Tape::Var states) const {
  struct Channel {
    int param;
    std::vector<int> from;
  };
  std::vector<Channel> channels;
  std::vector<int> targets;
  for (EdgeLabel l : all_edge_labels()) {
    if (!config_.active.count(l))
      continue;
    auto it = batch.edges.find(l);
    if (it == batch.edges.end() || it->second.empty())
      continue;
    // An edge i -> j sends E_k h_j to i; the inverse sends E'_k h_i to j.
    Channel fwd{forward_.at(l), {}};
    for (auto [i, j] : it->second) {
      fwd.from.push_back(j);
      targets.push_back(i);
    }
    channels.push_back(std::move(fwd));
    if (config_.inverse_edges) {
      Channel inv{inverse_.at(l), {}};
      for (auto [i, j] : it->second) {
        inv.from.push_back(i);
        targets.push_back(j);
      }
      channels.push_back(std::move(inv));
    }
  }
  std::vector<Tape::Var> transforms;
  for (const auto &c : channels)
    transforms.push_back(leaf(tape, params_, c.param));
  GruVars gru = GruVars::bind(tape, gru_, tape.params() == &params_ ? nullptr : &params_);

  Tape::Var h = states;
  for (std::size_t t = 0; t < config_.steps; ++t) {
    Tape::Var messages;
    if (channels.empty()) {
      messages = tape.constant(Tensor(batch.num_nodes, config_.dim));
    } else {
      std::vector<Tape::Var> parts;
      for (std::size_t c = 0; c < channels.size(); ++c)
        parts.push_back(tape.matmul(tape.gather_rows(h, channels[c].from), transforms[c]));
      messages = tape.segment_max(tape.concat_rows(parts), targets, batch.num_nodes);
    }
    h = gru_cell(tape, messages, h, gru);
  }
  return h;
}

Tape::Var Encoder::symbol_embeddings(Tape &tape, const GraphBatch &batch,
                                     Tape::Var states) const {
  return tape.gather_rows(states, batch.symbol_nodes);
}

Tape::Var Encoder::encode(Tape &tape, const GraphBatch &batch) const {
  return symbol_embeddings(tape, batch, propagate(tape, batch, init_node_states(tape, batch)));
}

Tensor Encoder::embed(const CodeGraph &g, const Vocabulary &vocab) const {
  Tape tape;
  GraphBatch batch = make_graph_batch({&g}, vocab);
  return tape.value(encode(tape, batch));
}

} // namespace typespace
