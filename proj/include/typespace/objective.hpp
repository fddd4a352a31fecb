#pragma once

#include "typespace/ggnn.hpp"
#include "typespace/optim.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace typespace {

enum class LossKind { Class, Space, Combined };

std::string_view loss_kind_name(LossKind k);
std::optional<LossKind> parse_loss_kind(std::string_view name);

struct TrainConfig {
  LossKind loss = LossKind::Combined;
  double margin = 2.0;
  double lambda = 1.0;
  std::size_t batch_symbols = 128;
  std::size_t epochs = 50;
  std::uint64_t seed = 0;
  std::size_t class_min_count = 10;
  std::size_t vocab_min_count = 2;
  std::size_t vocab_max_size = 10000;
  GnnConfig gnn;
  AdamConfig adam;
};

/// Maps types to classifier outputs. Index 0 is the catch-all class.
class ClassVocabulary {
public:
  static constexpr const char *kUnk = "<unk>";

  ClassVocabulary();
  /// Types annotated at least `min_count` times in `graphs`, most frequent
  /// first. With `erase`, types are counted after dropping their parameters.
  static ClassVocabulary build(const std::vector<CodeGraph> &graphs, std::size_t min_count,
                               bool erase);
  static ClassVocabulary from_list(const std::vector<std::string> &names, bool erase);

  bool erases() const { return erase_; }
  int lookup(const TypeExpr &t) const;
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string> &names() const { return names_; }

private:
  std::vector<std::string> names_;
  std::map<std::string, int> index_;
  bool erase_ = true;
};

/// Learnable heads used only during training (and by the class-only model
/// at inference): "class/prototypes" (D x C), "class/bias" (1 x C) and the
/// projection "proj/W" (D x D).
void init_head_params(ParamStore &params, std::size_t dim, std::size_t classes, bool projection,
                      Rng &rng);

/// Parameter names dropped from a model once training ends.
std::vector<std::string> head_param_names();

/// Mean over rows of -log softmax(r P + b)[target].
Tape::Var classification_loss(Tape &tape, Tape::Var reps, const std::vector<int> &targets,
                              Tape::Var prototypes, Tape::Var bias);

/// Mean over rows of max(|s - pos|_1 - |s - neg|_1 + m, 0).
Tape::Var triplet_loss(Tape &tape, Tape::Var s, Tape::Var pos, Tape::Var neg, double margin);

/// Batch similarity loss. Row i of `reps` has type id labels[i]. For each
/// symbol s with same-typed symbols S+ and differently typed symbols S-,
///   P+ = {p in S+ : d(s,p) > min_{n in S-} d(s,n) - m}
///   P- = {n in S- : d(s,n) < max_{p in S+} d(s,p) + m}
/// and the term is mean_{P+} d - mean_{P-} d (0 when S+ or S- is empty).
/// Returns the mean term over all rows. The sets are chosen on the forward
/// values and treated as constants.
Tape::Var space_loss(Tape &tape, Tape::Var reps, const std::vector<int> &labels, double margin);

struct LossTerms {
  Tape::Var total = -1;
  Tape::Var space = -1; // -1 when the term is not part of the loss
  Tape::Var cls = -1;
};

/// Heads bound on one tape.
struct HeadVars {
  Tape::Var prototypes = -1;
  Tape::Var bias = -1;
  Tape::Var projection = -1;
  static HeadVars bind(Tape &tape, const ParamStore &params);
};

/// space_loss + lambda * classification_loss(reps W, classes). With
/// lambda == 0 the class term is left out entirely.
LossTerms combined_loss(Tape &tape, Tape::Var reps, const std::vector<int> &labels,
                       const std::vector<int> &classes, const HeadVars &head, double margin,
                       double lambda);

/// The loss selected by `config.loss` over one encoded batch.
LossTerms batch_loss(Tape &tape, Tape::Var reps, const std::vector<int> &labels,
                     const std::vector<int> &classes, const HeadVars &head,
                     const TrainConfig &config);

/// Groups the graphs carrying annotations into batches of whole graphs, in
/// a shuffled order, closing a batch once it holds `batch_symbols`
/// annotated symbols.
std::vector<std::vector<int>> make_batches(const std::vector<CodeGraph> &graphs,
                                           std::size_t batch_symbols, Rng &rng);

/// Annotated symbols of a batch: rows to select from the encoder output,
/// type ids (equal full types share an id) and class targets.
struct BatchTargets {
  std::vector<int> rows;
  std::vector<int> labels;
  std::vector<int> classes;
  std::vector<TypeExpr> types;
};

BatchTargets batch_targets(const GraphBatch &batch, const std::vector<const CodeGraph *> &graphs,
                           const ClassVocabulary &classes);

} // namespace typespace
