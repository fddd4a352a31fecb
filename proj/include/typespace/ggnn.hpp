#pragma once

#include "typespace/code_graph.hpp"
#include "typespace/tape.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace typespace {

/// Subtoken vocabulary. Index 0 is the unknown-subtoken entry.
class Vocabulary {
public:
  static constexpr const char *kUnk = "<unk>";

  Vocabulary();
  /// Keeps subtokens of node labels seen at least `min_count` times, the most
  /// frequent `max_size` of them (ties broken alphabetically).
  static Vocabulary build(const std::vector<CodeGraph> &graphs, std::size_t min_count = 2,
                          std::size_t max_size = 10000);
  static Vocabulary from_list(const std::vector<std::string> &words);

  int lookup(const std::string &subtoken) const;
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string> &words() const { return words_; }

  /// Vocabulary indices of the subtokens of `label` (UNK for unknown ones).
  std::vector<int> encode(const std::string &label) const;

private:
  std::vector<std::string> words_;
  std::map<std::string, int> index_;
};

struct GnnConfig {
  std::size_t dim = 64;
  std::size_t steps = 8;
  std::set<EdgeLabel> active{all_edge_labels().begin(), all_edge_labels().end()};
  bool inverse_edges = true;
};

/// Several graphs merged into one disjoint graph.
struct GraphBatch {
  std::size_t num_nodes = 0;
  std::vector<std::vector<int>> node_subtokens;
  std::map<EdgeLabel, EdgeList> edges;
  std::vector<int> symbol_nodes;                // batch node of each symbol
  std::vector<std::pair<int, int>> symbol_refs; // (graph in batch, symbol index)
};

GraphBatch make_graph_batch(const std::vector<const CodeGraph *> &graphs,
                            const Vocabulary &vocab);

/// The encoder e(.): subtoken-mean initial states, T rounds of gated message
/// passing with elementwise-max aggregation, readout at symbol nodes.
///
/// Parameters: "embedding" (V x D), "edge/<LABEL>" and "edge_inv/<LABEL>"
/// (D x D, applied to the neighbour's state), "gru/*".
class Encoder {
public:
  Encoder(GnnConfig config, const ParamStore &params);

  static void init_params(ParamStore &params, const GnnConfig &config,
                          std::size_t vocab_size, Rng &rng);

  const GnnConfig &config() const { return config_; }

  /// Initial node states: mean subtoken embedding per node.
  Tape::Var init_node_states(Tape &tape, const GraphBatch &batch) const;
  /// Runs the configured number of propagation steps.
  Tape::Var propagate(Tape &tape, const GraphBatch &batch, Tape::Var states) const;
  /// Final states of the symbol nodes, one row per batch symbol.
  Tape::Var symbol_embeddings(Tape &tape, const GraphBatch &batch, Tape::Var states) const;

  /// All three stages; rows follow batch.symbol_nodes.
  Tape::Var encode(Tape &tape, const GraphBatch &batch) const;

  /// Inference without gradients: one row per symbol of `g`.
  Tensor embed(const CodeGraph &g, const Vocabulary &vocab) const;

private:
  GnnConfig config_;
  const ParamStore &params_;
  int embedding_;
  std::map<EdgeLabel, int> forward_;
  std::map<EdgeLabel, int> inverse_;
  GruWeights gru_;
};

} // namespace typespace
