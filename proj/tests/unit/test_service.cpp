#include "typespace/errors.hpp"
#include "typespace/service.hpp"

#include <gtest/gtest.h>
#include <httplib.h>
#include <json.hpp>

#include <thread>

using namespace typespace;
using json = nlohmann::json;

namespace {

TypeExpr T(const char *s) { return parse_type(s); }

const char *kSource = "def f(a, b):\n    c = a\n    return c\n";

// Extraction of `text` with symbol embeddings placed by name.
std::pair<Extraction, Tensor> placed(const std::string &id, const std::string &text,
                                     const std::map<std::string, std::vector<double>> &at,
                                     std::size_t dim = 2) {
  Extraction e = extract(text, id);
  Tensor t(e.graph.symbols.size(), dim, 50.0);
  for (std::size_t s = 0; s < e.graph.symbols.size(); ++s) {
    auto it = at.find(e.graph.symbols[s].name);
    if (it != at.end())
      for (std::size_t d = 0; d < dim; ++d)
        t(s, d) = it->second[d];
  }
  return {std::move(e), std::move(t)};
}

std::string symbol_id(const AnnotationService &svc, const std::string &file,
                      const std::string &name) {
  for (const auto &s : svc.suggestions(AnnotationService::kDefaultSession, file))
    if (s.name == name)
      return s.symbol_id;
  throw std::runtime_error("no pending symbol " + name);
}

TypeMap two_type_map() {
  TypeMap m(2);
  m.add(std::vector<double>{0, 0}, T("int"), Provenance::Corpus);
  m.add(std::vector<double>{10, 0}, T("str"), Provenance::Corpus);
  return m;
}

void add(AnnotationService &svc, const std::string &id, const std::string &text,
         const std::map<std::string, std::vector<double>> &at) {
  auto [e, t] = placed(id, text, at);
  svc.add_file(id, text, std::move(e), std::move(t));
}

} // namespace

TEST(Service, NoSymbolsNoSuggestions) {
  AnnotationService svc(nullptr, two_type_map(), {.k = 1});
  add(svc, "arith.py", "1 + 2\n", {});
  EXPECT_TRUE(svc.suggestions("default", "arith.py").empty());
  add(svc, "blank.py", "", {});
  EXPECT_TRUE(svc.suggestions("default", "blank.py").empty());
}

TEST(Service, SingleMarkerGivesProbabilityOne) {
  TypeMap m(2);
  m.add(std::vector<double>{1, 1}, T("bytes"), Provenance::Corpus);
  AnnotationService svc(nullptr, m);
  add(svc, "m.py", kSource, {});
  auto list = svc.suggestions("default", "m.py");
  ASSERT_FALSE(list.empty());
  for (const auto &s : list) {
    ASSERT_EQ(s.candidates.size(), 1u);
    EXPECT_EQ(s.candidates[0].type, T("bytes"));
    EXPECT_EQ(s.candidates[0].probability, 1.0);
  }
}

TEST(Service, SuggestionsSortedByConfidenceWithLines) {
  AnnotationService svc(nullptr, two_type_map(), {.k = 2, .p = 1});
  add(svc, "m.py", kSource, {{"a", {0, 0}}, {"b", {5, 0}}, {"c", {2, 0}}, {"f", {9, 0}}});
  auto list = svc.suggestions("default", "m.py");
  ASSERT_EQ(list.size(), 4u);
  for (std::size_t i = 1; i < list.size(); ++i)
    EXPECT_GE(list[i - 1].candidates[0].probability, list[i].candidates[0].probability);
  for (const auto &s : list) {
    if (s.name == "c")
      EXPECT_EQ(s.line, 2u);
    if (s.name == "a")
      EXPECT_EQ(s.line, 1u);
  }
}

TEST(Service, AcceptAddsOneMarkerAndDecides) {
  AnnotationService svc(nullptr, two_type_map(), {.k = 1});
  add(svc, "m.py", kSource, {{"a", {1, 0}}, {"c", {1.2, 0}}});
  std::string a = symbol_id(svc, "m.py", "a");
  AcceptResult r = svc.accept("default", a, T("bytes"));
  EXPECT_EQ(r.map_size, 3u);
  TypeMap map = svc.working_map("default");
  EXPECT_EQ(map.size(), 3u);
  EXPECT_EQ(map.marker(2).provenance, Provenance::Accepted);
  EXPECT_EQ(map.marker(2).type, T("bytes"));
  for (const auto &s : svc.suggestions("default", "m.py"))
    EXPECT_NE(s.symbol_id, a);
  EXPECT_THROW(svc.accept("default", a, T("int")), Conflict);
  EXPECT_EQ(svc.working_map("default").size(), 3u);
  // c sits next to a: its top suggestion moved from int to bytes.
  std::string c_id;
  for (const auto &s : svc.suggestions("default", "m.py"))
    if (s.name == "c") {
      c_id = s.symbol_id;
      EXPECT_EQ(s.candidates[0].type, T("bytes"));
    }
  EXPECT_NE(std::find(r.reranked.begin(), r.reranked.end(), c_id), r.reranked.end());
  EXPECT_EQ(r.reranked.size(), 1u);
}

TEST(Service, NewBindingEntersCandidates) {
  AnnotationService svc(nullptr, two_type_map(), {.k = 3, .p = 2});
  add(svc, "m.py", kSource, {{"a", {3, 3}}, {"c", {3.1, 3}}});
  std::string a = symbol_id(svc, "m.py", "a");
  svc.accept("default", a, T("Widget"));
  bool found = false;
  for (const auto &s : svc.suggestions("default", "m.py"))
    if (s.name == "c")
      for (const auto &cand : s.candidates)
        found |= cand.type == T("Widget");
  EXPECT_TRUE(found);
}

TEST(Service, RejectFiltersAndLogs) {
  AnnotationService svc(nullptr, two_type_map(), {.k = 2});
  add(svc, "m.py", kSource, {{"a", {0, 0}}});
  std::string a = symbol_id(svc, "m.py", "a");
  Suggestion s = svc.reject("default", a, T("int"));
  ASSERT_FALSE(s.candidates.empty());
  for (const auto &c : s.candidates)
    EXPECT_NE(c.type, T("int"));
  s = svc.reject("default", a, T("str"));
  EXPECT_TRUE(s.candidates.empty());
  EXPECT_TRUE(s.needs_manual_type);
  auto log = svc.log("default");
  ASSERT_EQ(log.size(), 2u);
  EXPECT_EQ(log[0].seq, 1u);
  EXPECT_EQ(log[1].action, "reject");
  EXPECT_EQ(svc.working_map("default").size(), 2u);
}

TEST(Service, SessionsAreIndependentAndReplayable) {
  AnnotationService svc(nullptr, two_type_map(), {.k = 1});
  add(svc, "m.py", kSource, {{"a", {0, 0}}, {"b", {1, 1}}});
  std::string s1 = svc.create_session();
  std::string a = symbol_id(svc, "m.py", "a"), b = symbol_id(svc, "m.py", "b");
  svc.accept(s1, a, T("bytes"));
  svc.reject(s1, b, T("int"));
  EXPECT_EQ(svc.working_map("default").size(), 2u);
  EXPECT_EQ(svc.working_map(s1).size(), 3u);
  std::string s2 = svc.create_session();
  EXPECT_NE(s1, s2);
  svc.replay(s2, svc.log(s1));
  EXPECT_EQ(svc.working_map(s2), svc.working_map(s1));
  EXPECT_THROW(svc.log("nope"), NotFound);
  EXPECT_THROW(svc.suggestions("default", "nope.py"), NotFound);
  EXPECT_THROW(svc.accept("default", "m.py#999", T("int")), NotFound);
  EXPECT_THROW(svc.accept("default", a, top_type()), DataError);
}

TEST(Service, PatchesDescribeEdits) {
  AnnotationService svc(nullptr, two_type_map(), {.k = 1});
  add(svc, "m.py", kSource, {});
  svc.accept("default", symbol_id(svc, "m.py", "a"), T("int"));
  svc.accept("default", symbol_id(svc, "m.py", "f"), T("str"));
  auto patches = svc.patches("default");
  ASSERT_EQ(patches.size(), 2u);
  std::string text = kSource;
  // Apply from the back so offsets stay valid.
  std::sort(patches.begin(), patches.end(),
            [](const Patch &x, const Patch &y) { return x.offset > y.offset; });
  for (const auto &p : patches)
    text.replace(p.offset, p.end - p.offset, p.text);
  EXPECT_EQ(text, "def f(a: int, b) -> str:\n    c = a\n    return c\n");
}

TEST(Service, ConcurrentAcceptsAllLand) {
  std::string text;
  for (int i = 0; i < 40; ++i)
    text += "v" + std::to_string(i) + " = 0\n";
  AnnotationService svc(nullptr, two_type_map(), {.k = 1});
  add(svc, "many.py", text, {});
  auto pending = svc.suggestions("default", "many.py");
  ASSERT_EQ(pending.size(), 40u);
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t)
    threads.emplace_back([&, t] {
      for (std::size_t i = t; i < pending.size(); i += 4)
        svc.accept("default", pending[i].symbol_id, T("int"));
    });
  for (auto &th : threads)
    th.join();
  EXPECT_EQ(svc.working_map("default").size(), 42u);
  EXPECT_EQ(svc.log("default").size(), 40u);
  EXPECT_TRUE(svc.suggestions("default", "many.py").empty());
}

class Http : public ::testing::Test {
protected:
  void SetUp() override {
    svc_ = std::make_unique<AnnotationService>(nullptr, two_type_map(), PredictionConfig{.k = 1});
    add(*svc_, "m.py", kSource, {{"a", {0, 0}}, {"c", {0.5, 0}}});
    install_routes(server_, *svc_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
  }
  json get(const std::string &path, int expect = 200) {
    auto res = client_->Get(path);
    EXPECT_TRUE(res);
    EXPECT_EQ(res->status, expect) << path << " " << res->body;
    return json::parse(res->body);
  }
  json post(const std::string &path, const std::string &body, int expect = 200) {
    auto res = client_->Post(path, body, "application/json");
    EXPECT_TRUE(res);
    EXPECT_EQ(res->status, expect) << path << " " << res->body;
    return json::parse(res->body);
  }
  std::string id_of(const std::string &name) {
    json list = get("/api/suggestions?file=m.py");
    for (const auto &s : list["suggestions"])
      if (s["name"] == name)
        return s["symbol_id"];
    return "";
  }

  std::unique_ptr<AnnotationService> svc_;
  httplib::Server server_;
  std::thread thread_;
  std::unique_ptr<httplib::Client> client_;
  int port_ = 0;
};

TEST_F(Http, FilesAndSuggestions) {
  json files = get("/api/files");
  ASSERT_EQ(files["files"].size(), 1u);
  EXPECT_EQ(files["files"][0]["file"], "m.py");
  EXPECT_EQ(files["files"][0]["pending"], 4);
  json s = get("/api/suggestions?file=m.py");
  ASSERT_EQ(s["suggestions"].size(), 4u);
  const json &first = s["suggestions"][0];
  EXPECT_TRUE(first.contains("symbol_id"));
  EXPECT_TRUE(first["candidates"][0].contains("probability"));
  get("/api/suggestions?file=zzz.py", 404);
  get("/api/suggestions", 422);
}

TEST_F(Http, AcceptFlow) {
  std::string a = id_of("a");
  json r = post("/api/accept", json{{"symbol_id", a}, {"type", "typing.List[int]"}}.dump());
  EXPECT_EQ(r["type"], "List[int]");
  EXPECT_EQ(r["map_size"], 3);
  EXPECT_TRUE(r["checker"].is_null());
  post("/api/accept", json{{"symbol_id", a}, {"type", "int"}}.dump(), 409);
  post("/api/accept", json{{"symbol_id", "m.py#77"}, {"type", "int"}}.dump(), 404);
  post("/api/accept", "not json", 422);
  post("/api/accept", json{{"symbol_id", id_of("c")}, {"type", "List[int"}}.dump(), 422);
  post("/api/accept", json{{"symbol_id", id_of("c")}, {"type", "Any"}}.dump(), 422);

  json log = get("/api/session/default/log");
  ASSERT_EQ(log["decisions"].size(), 1u);
  EXPECT_EQ(log["decisions"][0]["action"], "accept");
  get("/api/session/nope/log", 404);

  auto res = client_->Get("/api/export-map");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->get_header_value("Content-Type"), "application/octet-stream");
  TypeMap map = decode_map(res->body);
  ASSERT_EQ(map.size(), 3u);
  EXPECT_EQ(map.marker(2).provenance, Provenance::Accepted);

  json patches = get("/api/patches");
  ASSERT_EQ(patches["patches"].size(), 1u);
  EXPECT_EQ(patches["patches"][0]["text"], ": List[int]");
}

TEST_F(Http, RejectNeighborsSessions) {
  std::string c = id_of("c");
  json r = post("/api/reject", json{{"symbol_id", c}, {"type", "int"}}.dump());
  EXPECT_EQ(r["candidates"].size(), 0u);
  EXPECT_EQ(r["needs_manual_type"], true);
  json n = get("/api/neighbors?symbol_id=" + httplib::detail::encode_query_param(c) + "&k=2");
  ASSERT_EQ(n["neighbors"].size(), 2u);
  EXPECT_EQ(n["neighbors"][0]["type"], "int");
  EXPECT_EQ(n["neighbors"][0]["provenance"], "corpus");
  EXPECT_DOUBLE_EQ(n["neighbors"][0]["distance"].get<double>(), 0.5);
  get("/api/neighbors?symbol_id=" + httplib::detail::encode_query_param(c) + "&k=0", 422);
  get("/api/neighbors?symbol_id=" + httplib::detail::encode_query_param(c) + "&k=x", 422);

  json s = post("/api/session", "");
  std::string id = s["session"];
  json fresh = get("/api/suggestions?file=m.py&session=" + id);
  EXPECT_EQ(fresh["suggestions"].size(), 4u);
  post("/api/accept", json{{"symbol_id", c}, {"type", "str"}, {"session", id}}.dump());
  EXPECT_EQ(get("/api/session/" + id + "/log")["decisions"].size(), 1u);
  EXPECT_EQ(get("/api/session/default/log")["decisions"].size(), 1u);
  get("/api/files?session=unknown", 404);
}
