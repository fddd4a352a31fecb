#include "typespace/errors.hpp"
#include "typespace/service.hpp"

#include <httplib.h>
#include <json.hpp>

namespace typespace {

namespace {

using json = nlohmann::ordered_json;

// Malformed request body or parameters.
struct BadRequest : Error {
  using Error::Error;
};

void send(httplib::Response &res, int status, const json &body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json candidates_json(const std::vector<Candidate> &cands) {
  json out = json::array();
  for (const auto &c : cands)
    out.push_back({{"type", c.type.str()}, {"probability", c.probability}});
  return out;
}

json suggestion_json(const Suggestion &s) {
  return {{"symbol_id", s.symbol_id},
          {"name", s.name},
          {"kind", symbol_kind_name(s.kind)},
          {"line", s.line},
          {"candidates", candidates_json(s.candidates)},
          {"needs_manual_type", s.needs_manual_type}};
}

std::string query(const httplib::Request &req, const std::string &key, bool required) {
  if (req.has_param(key))
    return req.get_param_value(key);
  if (required)
    throw BadRequest("missing query parameter '" + key + "'");
  return "";
}

std::string query_session(const httplib::Request &req) {
  std::string s = query(req, "session", false);
  return s.empty() ? AnnotationService::kDefaultSession : s;
}

json body(const httplib::Request &req) {
  json j = json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw BadRequest("request body must be a JSON object");
  return j;
}

std::string field(const json &j, const char *key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string())
    throw BadRequest(std::string("missing string field '") + key + "'");
  return it->get<std::string>();
}

std::string body_session(const json &j) {
  auto it = j.find("session");
  if (it == j.end())
    return AnnotationService::kDefaultSession;
  if (!it->is_string())
    throw BadRequest("field 'session' must be a string");
  return it->get<std::string>();
}

TypeExpr body_type(const json &j) {
  std::string text = field(j, "type");
  try {
    return normalize_type(parse_type(text));
  } catch (const ParseError &e) {
    throw BadRequest(std::string("bad type: ") + e.what());
  }
}

// Runs a handler and maps failures to status codes.
template <class F> httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request &req, httplib::Response &res) {
    try {
      f(req, res);
    } catch (const NotFound &e) {
      send(res, 404, {{"error", e.what()}});
    } catch (const Conflict &e) {
      send(res, 409, {{"error", e.what()}});
    } catch (const BadRequest &e) {
      send(res, 422, {{"error", e.what()}});
    } catch (const ParseError &e) {
      send(res, 422, {{"error", e.what()}});
    } catch (const DataError &e) {
      send(res, 422, {{"error", e.what()}});
    } catch (const std::exception &e) {
      send(res, 500, {{"error", e.what()}});
    }
  };
}

} // namespace

void install_routes(httplib::Server &server, AnnotationService &svc) {
  server.Get("/api/files", guarded([&svc](const httplib::Request &req, httplib::Response &res) {
               json files = json::array();
               for (const auto &f : svc.files(query_session(req)))
                 files.push_back(
                     {{"file", f.file}, {"symbols", f.symbols}, {"pending", f.pending}});
               send(res, 200, {{"files", files}});
             }));

  server.Get("/api/suggestions",
             guarded([&svc](const httplib::Request &req, httplib::Response &res) {
               std::string file = query(req, "file", true);
               json list = json::array();
               for (const auto &s : svc.suggestions(query_session(req), file))
                 list.push_back(suggestion_json(s));
               send(res, 200, {{"file", file}, {"suggestions", list}});
             }));

  server.Post("/api/accept", guarded([&svc](const httplib::Request &req, httplib::Response &res) {
                json j = body(req);
                std::string symbol = field(j, "symbol_id");
                TypeExpr type = body_type(j);
                AcceptResult r = svc.accept(body_session(j), symbol, type);
                json out = {{"symbol_id", r.symbol_id},
                            {"type", r.type.str()},
                            {"map_size", r.map_size},
                            {"reranked", r.reranked},
                            {"checker", nullptr}};
                if (r.check)
                  out["checker"] = {{"verdict", verdict_name(r.check->verdict)},
                                    {"detail", r.check->detail}};
                send(res, 200, out);
              }));

  server.Post("/api/reject", guarded([&svc](const httplib::Request &req, httplib::Response &res) {
                json j = body(req);
                std::string symbol = field(j, "symbol_id");
                TypeExpr type = body_type(j);
                Suggestion s = svc.reject(body_session(j), symbol, type);
                json out = suggestion_json(s);
                out["type"] = type.str();
                send(res, 200, out);
              }));

  server.Get("/api/neighbors",
             guarded([&svc](const httplib::Request &req, httplib::Response &res) {
               std::string symbol = query(req, "symbol_id", true);
               std::string k_text = query(req, "k", false);
               std::size_t k = 10;
               if (!k_text.empty()) {
                 try {
                   std::size_t used = 0;
                   long v = std::stol(k_text, &used);
                   if (used != k_text.size() || v < 1)
                     throw BadRequest("k must be a positive integer");
                   k = static_cast<std::size_t>(v);
                 } catch (const std::logic_error &) {
                   throw BadRequest("k must be a positive integer");
                 }
               }
               json list = json::array();
               for (const auto &n : svc.neighbors(query_session(req), symbol, k))
                 list.push_back({{"marker", n.marker},
                                 {"type", n.type.str()},
                                 {"distance", n.distance},
                                 {"provenance", provenance_name(n.provenance)}});
               send(res, 200, {{"symbol_id", symbol}, {"neighbors", list}});
             }));

  server.Post("/api/session", guarded([&svc](const httplib::Request &, httplib::Response &res) {
                send(res, 200, {{"session", svc.create_session()}});
              }));

  server.Get(R"(/api/session/([^/]+)/log)",
             guarded([&svc](const httplib::Request &req, httplib::Response &res) {
               std::string id = req.matches[1];
               json list = json::array();
               for (const auto &d : svc.log(id))
                 list.push_back({{"seq", d.seq},
                                 {"action", d.action},
                                 {"symbol_id", d.symbol_id},
                                 {"type", d.type},
                                 {"timestamp_ms", d.timestamp_ms}});
               send(res, 200, {{"session", id}, {"decisions", list}});
             }));

  server.Get("/api/export-map",
             guarded([&svc](const httplib::Request &req, httplib::Response &res) {
               res.status = 200;
               res.set_content(encode_map(svc.working_map(query_session(req))),
                               "application/octet-stream");
             }));

  server.Get("/api/patches", guarded([&svc](const httplib::Request &req, httplib::Response &res) {
               json list = json::array();
               for (const auto &p : svc.patches(query_session(req)))
                 list.push_back({{"file", p.file},
                                 {"symbol_id", p.symbol_id},
                                 {"type", p.type},
                                 {"offset", p.offset},
                                 {"end", p.end},
                                 {"replaces", p.replaces},
                                 {"text", p.text}});
               send(res, 200, {{"patches", list}});
             }));
}

} // namespace typespace
