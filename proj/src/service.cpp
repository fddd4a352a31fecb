#include "typespace/service.hpp"

#include "typespace/errors.hpp"

#include <algorithm>
#include <chrono>
#include <set>

namespace typespace {

struct AnnotationService::File {
  std::string id;
  std::string text;
  Extraction extraction;
  Tensor embeddings;
  std::vector<std::optional<SymbolSite>> sites; // per symbol
};

struct AnnotationService::Session {
  mutable std::mutex mu;
  TypeMap map;
  std::vector<Decision> log;
  std::map<std::string, TypeExpr> accepted;
  std::map<std::string, std::set<TypeExpr>> rejected;
};

AnnotationService::AnnotationService(const Model *model, TypeMap base_map, PredictionConfig config,
                                     CheckerConfig checker)
    : model_(model), base_(std::move(base_map)), config_(config), checker_(std::move(checker)) {
  if (model_ && model_->dim() != base_.dim())
    throw DataError("type map dimension " + std::to_string(base_.dim()) +
                    " does not match the model's " + std::to_string(model_->dim()));
  auto s = std::make_unique<Session>();
  s->map = base_;
  sessions_.emplace(kDefaultSession, std::move(s));
}

AnnotationService::~AnnotationService() = default;

void AnnotationService::add_file(const std::string &id, const std::string &text) {
  if (!model_)
    throw ContractViolation("add_file: no model to embed '" + id + "'");
  Extraction e = extract(text, id);
  Tensor reps = model_->embed(e.graph);
  add_file(id, text, std::move(e), std::move(reps));
}

void AnnotationService::add_file(const std::string &id, const std::string &text,
                                 Extraction extraction, Tensor embeddings) {
  if (file_index_.count(id))
    throw Conflict("file '" + id + "' already loaded");
  if (embeddings.rows != extraction.graph.symbols.size() ||
      (embeddings.rows > 0 && embeddings.cols != base_.dim()))
    throw ContractViolation("add_file: embeddings " + embeddings.shape_str() + " for " +
                            std::to_string(extraction.graph.symbols.size()) + " symbols");
  auto f = std::make_unique<File>();
  f->id = id;
  f->text = text;
  f->sites.resize(extraction.graph.symbols.size());
  for (const auto &site : extraction.sites)
    if (site.symbol >= 0 && static_cast<std::size_t>(site.symbol) < f->sites.size())
      f->sites[site.symbol] = site;
  f->extraction = std::move(extraction);
  f->embeddings = std::move(embeddings);
  file_index_.emplace(id, files_.size());
  files_.push_back(std::move(f));
}

std::string AnnotationService::create_session() {
  std::lock_guard lock(sessions_mutex_);
  std::string id;
  do {
    id = "s" + std::to_string(next_session_++);
  } while (sessions_.count(id));
  auto s = std::make_unique<Session>();
  s->map = base_;
  sessions_.emplace(id, std::move(s));
  return id;
}

bool AnnotationService::has_session(const std::string &id) const {
  std::lock_guard lock(sessions_mutex_);
  return sessions_.count(id) > 0;
}

AnnotationService::Session &AnnotationService::session(const std::string &id) const {
  std::lock_guard lock(sessions_mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end())
    throw NotFound("unknown session '" + id + "'");
  return *it->second;
}

AnnotationService::SymbolRef AnnotationService::resolve(const std::string &symbol_id) const {
  auto hash = symbol_id.rfind('#');
  if (hash == std::string::npos)
    throw NotFound("unknown symbol '" + symbol_id + "'");
  auto it = file_index_.find(symbol_id.substr(0, hash));
  if (it == file_index_.end())
    throw NotFound("unknown symbol '" + symbol_id + "'");
  const File *f = files_[it->second].get();
  std::string num = symbol_id.substr(hash + 1);
  if (num.empty() || num.size() > 9 || !std::all_of(num.begin(), num.end(), ::isdigit))
    throw NotFound("unknown symbol '" + symbol_id + "'");
  std::size_t s = std::stoul(num);
  if (s >= f->extraction.graph.symbols.size())
    throw NotFound("unknown symbol '" + symbol_id + "'");
  return {f, s};
}

namespace {

std::string symbol_id_of(const std::string &file, std::size_t s) {
  return file + "#" + std::to_string(s);
}

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

} // namespace

bool AnnotationService::pending(const Session &s, const SymbolRef &ref) const {
  if (ref.file->extraction.graph.symbols[ref.symbol].annotation)
    return false;
  return !s.accepted.count(symbol_id_of(ref.file->id, ref.symbol));
}

Suggestion AnnotationService::suggest(const Session &s, const SymbolRef &ref) const {
  const SymbolInfo &info = ref.file->extraction.graph.symbols[ref.symbol];
  Suggestion out;
  out.symbol_id = symbol_id_of(ref.file->id, ref.symbol);
  out.name = info.name;
  out.kind = info.kind;
  if (const auto &site = ref.file->sites[ref.symbol]) {
    std::size_t at = site->existing ? site->begin : site->insert_at;
    at = std::min(at, ref.file->text.size());
    out.line = 1 + static_cast<std::size_t>(
                       std::count(ref.file->text.begin(), ref.file->text.begin() + at, '\n'));
  }
  if (!s.map.empty()) {
    PredictionConfig uncapped = config_;
    uncapped.max_candidates = 0;
    auto cands = knn_predict(s.map, ref.file->embeddings.row_ptr(ref.symbol), uncapped);
    auto rej = s.rejected.find(out.symbol_id);
    for (auto &c : cands) {
      if (rej != s.rejected.end() && rej->second.count(c.type))
        continue;
      out.candidates.push_back(std::move(c));
      if (config_.max_candidates > 0 && out.candidates.size() == config_.max_candidates)
        break;
    }
  }
  out.needs_manual_type = out.candidates.empty();
  return out;
}

std::vector<FileSummary> AnnotationService::files(const std::string &id) const {
  Session &s = session(id);
  std::lock_guard lock(s.mu);
  std::vector<FileSummary> out;
  for (const auto &f : files_) {
    FileSummary sum{f->id, f->extraction.graph.symbols.size(), 0};
    for (std::size_t i = 0; i < sum.symbols; ++i)
      sum.pending += pending(s, {f.get(), i});
    out.push_back(sum);
  }
  return out;
}

std::vector<Suggestion> AnnotationService::suggestions(const std::string &id,
                                                       const std::string &file) const {
  Session &s = session(id);
  auto it = file_index_.find(file);
  if (it == file_index_.end())
    throw NotFound("unknown file '" + file + "'");
  const File *f = files_[it->second].get();
  std::lock_guard lock(s.mu);
  std::vector<Suggestion> out;
  for (std::size_t i = 0; i < f->extraction.graph.symbols.size(); ++i)
    if (pending(s, {f, i}))
      out.push_back(suggest(s, {f, i}));
  std::stable_sort(out.begin(), out.end(), [](const Suggestion &a, const Suggestion &b) {
    double pa = a.candidates.empty() ? -1 : a.candidates.front().probability;
    double pb = b.candidates.empty() ? -1 : b.candidates.front().probability;
    return pa > pb;
  });
  return out;
}

std::map<std::string, std::string> AnnotationService::top_types(const Session &s) const {
  std::map<std::string, std::string> out;
  for (const auto &f : files_)
    for (std::size_t i = 0; i < f->extraction.graph.symbols.size(); ++i)
      if (pending(s, {f.get(), i})) {
        Suggestion sug = suggest(s, {f.get(), i});
        out[sug.symbol_id] = sug.candidates.empty() ? "" : sug.candidates.front().type.str();
      }
  return out;
}

AcceptResult AnnotationService::accept(const std::string &id, const std::string &symbol_id,
                                       const TypeExpr &type) {
  Session &s = session(id);
  SymbolRef ref = resolve(symbol_id);
  if (type.is_top())
    throw DataError("cannot accept Any as a type");
  std::lock_guard lock(s.mu);
  if (!pending(s, ref))
    throw Conflict("symbol '" + symbol_id + "' is already decided");
  auto before = top_types(s);
  s.map.add(ref.file->embeddings.row_ptr(ref.symbol), type, Provenance::Accepted);
  s.accepted.emplace(symbol_id, type);
  s.log.push_back({s.log.size() + 1, symbol_id, "accept", type.str(), now_ms()});
  AcceptResult out;
  out.symbol_id = symbol_id;
  out.type = type;
  out.map_size = s.map.size();
  for (const auto &[sym, top] : top_types(s)) {
    auto it = before.find(sym);
    if (it != before.end() && it->second != top)
      out.reranked.push_back(sym);
  }
  if (!checker_.command.empty()) {
    if (const auto &site = ref.file->sites[ref.symbol])
      out.check = checker_hook(checker_, ref.file->text, ref.file->id, *site, type.str());
    else
      out.check = CheckResult{Verdict::Skip, "no annotation site"};
  }
  return out;
}

Suggestion AnnotationService::reject(const std::string &id, const std::string &symbol_id,
                                     const TypeExpr &type) {
  Session &s = session(id);
  SymbolRef ref = resolve(symbol_id);
  std::lock_guard lock(s.mu);
  if (!pending(s, ref))
    throw Conflict("symbol '" + symbol_id + "' is already decided");
  s.rejected[symbol_id].insert(type);
  s.log.push_back({s.log.size() + 1, symbol_id, "reject", type.str(), now_ms()});
  return suggest(s, ref);
}

std::vector<NeighbourInfo> AnnotationService::neighbors(const std::string &id,
                                                        const std::string &symbol_id,
                                                        std::size_t k) const {
  Session &s = session(id);
  SymbolRef ref = resolve(symbol_id);
  if (k == 0)
    throw DataError("k must be at least 1");
  std::lock_guard lock(s.mu);
  std::vector<NeighbourInfo> out;
  for (const auto &n : s.map.nearest(ref.file->embeddings.row_ptr(ref.symbol), k)) {
    const Marker &m = s.map.marker(n.marker);
    out.push_back({n.marker, n.distance, m.type, m.provenance});
  }
  return out;
}

std::vector<Decision> AnnotationService::log(const std::string &id) const {
  Session &s = session(id);
  std::lock_guard lock(s.mu);
  return s.log;
}

TypeMap AnnotationService::working_map(const std::string &id) const {
  Session &s = session(id);
  std::lock_guard lock(s.mu);
  return s.map;
}

std::vector<Patch> AnnotationService::patches(const std::string &id) const {
  Session &s = session(id);
  std::lock_guard lock(s.mu);
  std::vector<Patch> out;
  for (const auto &d : s.log) {
    if (d.action != "accept")
      continue;
    SymbolRef ref = resolve(d.symbol_id);
    const auto &site = ref.file->sites[ref.symbol];
    if (!site)
      continue;
    Patch p{ref.file->id, d.symbol_id, d.type, 0, site->existing, 0, d.type};
    if (site->existing) {
      p.offset = site->begin;
      p.end = site->end;
    } else {
      p.offset = p.end = site->insert_at;
      p.text = (site->is_return ? " -> " : ": ") + d.type;
    }
    out.push_back(std::move(p));
  }
  return out;
}

void AnnotationService::replay(const std::string &id, const std::vector<Decision> &decisions) {
  for (const auto &d : decisions) {
    TypeExpr t = parse_type(d.type);
    if (d.action == "accept")
      accept(id, d.symbol_id, t);
    else if (d.action == "reject")
      reject(id, d.symbol_id, t);
    else
      throw DataError("unknown action '" + d.action + "'");
  }
}

} // namespace typespace
