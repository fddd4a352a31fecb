#pragma once

#include "typespace/checkpoint.hpp"
#include "typespace/code_graph.hpp"
#include "typespace/errors.hpp"
#include "typespace/ggnn.hpp"
#include "typespace/objective.hpp"
#include "typespace/typemap.hpp"

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace typespace {

/// Training produced a non-finite loss.
class Divergence : public Error {
public:
  using Error::Error;
};

// ---------------------------------------------------------------- corpus

/// Hex SHA-256 of `text` with every whitespace run collapsed to one space
/// and leading/trailing whitespace removed.
std::string content_hash(std::string_view text);

struct SourceFile {
  std::string id; // path relative to the ingested root, '/' separated
  std::string text;
};

/// All `*.py` files under `root`, sorted by id, with exact duplicates (by
/// content_hash) reduced to their first occurrence.
std::vector<SourceFile> collect_sources(const std::string &root,
                                        std::vector<std::string> *diagnostics = nullptr);
std::vector<SourceFile> dedup_sources(std::vector<SourceFile> files);

/// Extracts every file, skipping the ones that fail with a diagnostic.
std::vector<CodeGraph> extract_corpus(const std::vector<SourceFile> &files,
                                      const ExtractOptions &options,
                                      std::vector<std::string> *diagnostics = nullptr);

struct Split {
  std::vector<CodeGraph> train, valid, test;
};

/// File-level 70/10/20 split of a shuffled corpus: n*70/100 files to train,
/// n*10/100 to valid, the remainder to test (integer division). Each part
/// keeps corpus order.
Split split_corpus(const std::vector<CodeGraph> &graphs, std::uint64_t seed);

/// Annotation counts per type.
std::map<TypeExpr, std::size_t> type_counts(const std::vector<CodeGraph> &graphs);

inline constexpr std::size_t kRareBelow = 100;

// ---------------------------------------------------------------- config

/// Reads flat `key = value` lines; `#` starts a comment. Throws ParseError
/// with the line number on a malformed line or a repeated key.
std::map<std::string, std::string> parse_config(std::string_view text);

/// Applies recognised keys to `config`; throws DataError for unknown keys or
/// bad values.
void apply_config(const std::map<std::string, std::string> &values, TrainConfig &config);

// ---------------------------------------------------------------- model

/// A trained encoder loaded from a checkpoint.
class Model {
public:
  explicit Model(Checkpoint checkpoint);
  Model(const Model &) = delete;
  Model &operator=(const Model &) = delete;

  const Checkpoint &checkpoint() const { return ckpt_; }
  const Vocabulary &vocabulary() const { return vocab_; }
  const GnnConfig &gnn() const { return gnn_; }
  std::size_t dim() const { return gnn_.dim; }
  LossKind loss() const { return loss_; }
  /// Training annotation counts stored with the model.
  const std::map<TypeExpr, std::size_t> &train_counts() const { return train_counts_; }

  /// One row per symbol of `g`.
  Tensor embed(const CodeGraph &g) const;

  /// Whether predictions come from the classifier head (class-only models).
  bool has_classifier() const { return classifier_; }
  /// Class probabilities for each row of `reps`, best first, without the
  /// catch-all class.
  std::vector<std::vector<Candidate>> classify(const Tensor &reps, std::size_t top) const;

private:
  Checkpoint ckpt_;
  Vocabulary vocab_;
  GnnConfig gnn_;
  LossKind loss_ = LossKind::Combined;
  bool classifier_ = false;
  std::map<TypeExpr, std::size_t> train_counts_;
  std::unique_ptr<Encoder> encoder_;
};

GnnConfig gnn_config_from_meta(const std::map<std::string, std::string> &meta);

// ---------------------------------------------------------------- training

struct EpochLog {
  std::size_t epoch;
  double space;   // mean over batches; NaN when the term is not used
  double cls;
  double total;
  double valid;   // validation loss; NaN without validation symbols
  double wall_seconds;
};

std::string epoch_log_line(const EpochLog &e);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
};

/// Called after every epoch with the current parameters (heads included);
/// returning false stops training.
using EpochHook = std::function<bool(const EpochLog &, const Model &)>;

/// Trains the encoder (plus heads for the class and combined losses) with
/// Adam. Keeps the parameters of the epoch with the lowest validation loss
/// (the last epoch without validation data). Heads are dropped from the
/// result except for the class-only loss. Throws Divergence on a
/// non-finite loss.
TrainResult train(const TrainConfig &config, const std::vector<CodeGraph> &train_set,
                  const std::vector<CodeGraph> &valid_set, const EpochHook &hook = {});

// ---------------------------------------------------------------- maps

/// One corpus marker per annotated symbol, in corpus order.
TypeMap build_map(const Model &model, const std::vector<CodeGraph> &graphs);

// ---------------------------------------------------------------- evaluation

struct SymbolPrediction {
  std::size_t symbol;
  std::vector<Candidate> candidates;
};

/// Ranked candidates for every symbol of `g`: from the map, or from the
/// classifier head for class-only models.
std::vector<SymbolPrediction> predict_graph(const Model &model, const TypeMap &map,
                                            const CodeGraph &g, const PredictionConfig &config);

struct EvalRecord {
  std::string file_id;
  std::string name;
  SymbolKind kind;
  TypeExpr truth;
  std::optional<TypeExpr> prediction;
  double confidence = 0;
  bool exact = false;
  bool up_to_parametric = false;
  bool neutral = false;
  bool rare = false;
};

/// Compares one prediction with the truth. `lattice` must contain both.
void score_record(EvalRecord &r, const TypeLattice &lattice);

/// Same base and arity-free comparison: Er(pred) == Er(truth).
bool match_up_to_parametric(const TypeExpr &pred, const TypeExpr &truth);

struct MetricTotals {
  std::size_t count = 0, exact = 0, up_to_parametric = 0, neutral = 0;
};

struct Report {
  std::vector<EvalRecord> records;
  std::map<std::string, MetricTotals> groups; // all, common, rare, variable, parameter, return
};

Report summarize(std::vector<EvalRecord> records);

Report evaluate(const Model &model, const TypeMap &map, const std::vector<CodeGraph> &test,
                const PredictionConfig &config);

/// Deterministic JSON rendering: summary percentages then every record.
std::string report_json(const Report &report);

struct PrPoint {
  double threshold;
  double recall;
  double precision;
  std::size_t emitted;
};

/// Indices of records whose confidence reaches `threshold`.
std::vector<std::size_t> emitted_at(const std::vector<EvalRecord> &records, double threshold);

/// One point per threshold (sorted ascending) that emits anything.
std::vector<PrPoint> pr_curve(const std::vector<EvalRecord> &records,
                              std::vector<double> thresholds);
std::vector<double> default_thresholds();
std::string pr_csv(const std::vector<PrPoint> &points);

// ---------------------------------------------------------------- checker

enum class Verdict { Accept, Reject, Skip };
std::string_view verdict_name(Verdict v);

struct CheckerConfig {
  std::vector<std::string> command; // empty: unconfigured
  std::chrono::milliseconds timeout{20000};
};

struct CheckResult {
  Verdict verdict = Verdict::Skip;
  std::string detail;
};

/// Writes `type` into `source` at `site`, replacing an existing annotation.
std::string apply_annotation(std::string_view source, const SymbolSite &site,
                             const std::string &type);

/// Runs the checker on a copy of the file carrying the one annotation. The
/// file's path is appended to the command. Exit status 0 accepts, 1
/// rejects; anything else, a crash or a timeout skips.
CheckResult checker_hook(const CheckerConfig &config, std::string_view source,
                         const std::string &file_name, const SymbolSite &site,
                         const std::string &type);

} // namespace typespace
