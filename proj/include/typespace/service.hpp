#pragma once

#include "typespace/harness.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace httplib {
class Server;
}

namespace typespace {

struct Decision {
  std::size_t seq = 0;
  std::string symbol_id;
  std::string action; // "accept" or "reject"
  std::string type;
  std::int64_t timestamp_ms = 0;
};

struct Suggestion {
  std::string symbol_id;
  std::string name;
  SymbolKind kind = SymbolKind::Variable;
  std::size_t line = 0; // 1-based; 0 when unknown
  std::vector<Candidate> candidates;
  bool needs_manual_type = false;
};

struct FileSummary {
  std::string file;
  std::size_t symbols = 0;
  std::size_t pending = 0;
};

struct AcceptResult {
  std::string symbol_id;
  TypeExpr type;
  std::size_t map_size = 0;
  std::vector<std::string> reranked; // pending symbols whose top type changed
  std::optional<CheckResult> check;
};

struct NeighbourInfo {
  std::size_t marker;
  double distance;
  TypeExpr type;
  Provenance provenance;
};

struct Patch {
  std::string file;
  std::string symbol_id;
  std::string type;
  std::size_t offset; // where the annotation text goes
  bool replaces;      // an existing annotation spans [offset, end)
  std::size_t end;
  std::string text;   // text to insert (or the replacement)
};

/// Review loop over a fixed set of files: suggestions from a working type
/// map, accept/reject decisions per session. Files must be added before
/// requests are served; sessions are independent and each is serialized.
class AnnotationService {
public:
  static constexpr const char *kDefaultSession = "default";

  /// `model` may be null when every file comes with its own embeddings.
  AnnotationService(const Model *model, TypeMap base_map, PredictionConfig config = {},
                    CheckerConfig checker = {});
  ~AnnotationService();

  /// Extracts and embeds a source file. Throws ParseError/DataError.
  void add_file(const std::string &id, const std::string &text);
  /// Adds a file whose symbol embeddings are given (one row per symbol).
  void add_file(const std::string &id, const std::string &text, Extraction extraction,
                Tensor embeddings);

  std::string create_session();
  bool has_session(const std::string &session) const;

  std::vector<FileSummary> files(const std::string &session) const;
  /// Pending symbols of `file` (unannotated, undecided), best first.
  std::vector<Suggestion> suggestions(const std::string &session, const std::string &file) const;
  AcceptResult accept(const std::string &session, const std::string &symbol_id,
                      const TypeExpr &type);
  Suggestion reject(const std::string &session, const std::string &symbol_id,
                    const TypeExpr &type);
  std::vector<NeighbourInfo> neighbors(const std::string &session, const std::string &symbol_id,
                                       std::size_t k) const;
  std::vector<Decision> log(const std::string &session) const;
  TypeMap working_map(const std::string &session) const;
  std::vector<Patch> patches(const std::string &session) const;

  /// Applies a decision log to `session` in order.
  void replay(const std::string &session, const std::vector<Decision> &decisions);

private:
  struct File;
  struct Session;
  struct SymbolRef {
    const File *file;
    std::size_t symbol;
  };

  Session &session(const std::string &id) const;
  SymbolRef resolve(const std::string &symbol_id) const;
  Suggestion suggest(const Session &s, const SymbolRef &ref) const;
  std::map<std::string, std::string> top_types(const Session &s) const;
  bool pending(const Session &s, const SymbolRef &ref) const;

  const Model *model_;
  TypeMap base_;
  PredictionConfig config_;
  CheckerConfig checker_;
  std::vector<std::unique_ptr<File>> files_;
  std::map<std::string, std::size_t> file_index_;
  mutable std::mutex sessions_mutex_;
  std::map<std::string, std::unique_ptr<Session>> sessions_;
  std::size_t next_session_ = 1;
};

/// Installs the HTTP API on `server`. Unknown entities answer 404,
/// conflicts 409 and malformed requests 422, each with {"error": message}.
void install_routes(httplib::Server &server, AnnotationService &service);

} // namespace typespace
