#include "typespace/checkpoint.hpp"
#include "typespace/code_graph.hpp"
#include "typespace/typemap.hpp"

#include "synthetic.hpp"

#include <gtest/gtest.h>
#include <httplib.h>
#include <json.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <thread>

using namespace typespace;
namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test {
protected:
  static void SetUpTestSuite() {
    char tmpl[] = "/tmp/typespace-cli-XXXXXX";
    dir_ = mkdtemp(tmpl);
    fs::create_directories(dir_ / "src");
    for (const auto &f : typespace::testing::synthetic_sources({.files = 12, .functions_per_file = 2}))
      std::ofstream(dir_ / "src" / f.id) << f.text;
    std::ofstream(dir_ / "src" / "broken.py") << "def (:\n";
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  // Runs the tool with `args`; returns its exit status.
  static int run(const std::string &args, std::string *out = nullptr) {
    std::string cmd = "cd " + dir_.string() + " && " + TYPESPACE_CLI + " " + args +
                      " > out.txt 2> err.txt";
    int status = std::system(cmd.c_str());
    if (out)
      *out = read("out.txt");
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  static std::string read(const std::string &rel) {
    std::ifstream in(dir_ / rel);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
  static void write(const std::string &rel, const std::string &text) {
    std::ofstream(dir_ / rel) << text;
  }
  static bool exists(const std::string &rel) { return fs::exists(dir_ / rel); }

  // Extract, split, train and index once for the tests that need a model.
  static void pipeline() {
    static bool done = false;
    if (done)
      return;
    ASSERT_EQ(run("extract src -o corpus.jsonl"), 0) << read("err.txt");
    ASSERT_EQ(run("split corpus.jsonl --seed 3"), 0) << read("err.txt");
    write("train.cfg", "train = corpus.train.jsonl\nvalid = corpus.valid.jsonl\n"
                       "output = model.ckpt\nlog = train.log\n"
                       "dim = 8\nsteps = 2\nepochs = 2\nbatch_symbols = 16\n"
                       "class_min_count = 1\nvocab_min_count = 1\n");
    ASSERT_EQ(run("train --config train.cfg --loss typilus"), 0) << read("err.txt");
    ASSERT_EQ(run("index --model model.ckpt --corpus corpus.train.jsonl+corpus.valid.jsonl -o map.bin"), 0)
        << read("err.txt");
    done = true;
  }

  static fs::path dir_;
};

fs::path Cli::dir_;

} // namespace

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("extract"), 1);
  EXPECT_EQ(run("split"), 1);
  EXPECT_EQ(run("train"), 1);
  EXPECT_EQ(run("--help"), 0);
}

TEST_F(Cli, ExtractSkipsBrokenFilesAndWritesCorpus) {
  ASSERT_EQ(run("extract src -o all.jsonl"), 0);
  auto graphs = read_corpus((dir_ / "all.jsonl").string());
  EXPECT_EQ(graphs.size(), 12u);
  EXPECT_NE(read("err.txt").find("broken.py"), std::string::npos);
  ASSERT_EQ(run("extract src -o thin.jsonl --no-edge NEXT_MAY_USE NEXT_LEXICAL_USE"), 0);
  for (const auto &g : read_corpus((dir_ / "thin.jsonl").string())) {
    EXPECT_FALSE(g.edges.count(EdgeLabel::NextMayUse));
    EXPECT_FALSE(g.edges.count(EdgeLabel::NextLexicalUse));
  }
  EXPECT_EQ(run("extract src -o x.jsonl --no-edge BOGUS"), 2);
}

TEST_F(Cli, SplitWritesThreeParts) {
  pipeline();
  EXPECT_EQ(read_corpus((dir_ / "corpus.train.jsonl").string()).size(), 8u);
  EXPECT_EQ(read_corpus((dir_ / "corpus.valid.jsonl").string()).size(), 1u);
  EXPECT_EQ(read_corpus((dir_ / "corpus.test.jsonl").string()).size(), 3u);
}

TEST_F(Cli, TrainWritesCheckpointAndLog) {
  pipeline();
  Checkpoint ck = load_checkpoint((dir_ / "model.ckpt").string());
  EXPECT_EQ(ck.dim, 8u);
  EXPECT_EQ(ck.meta.at("loss"), "combined");
  std::istringstream log(read("train.log"));
  std::size_t lines = 0;
  for (std::string line; std::getline(log, line); ++lines)
    EXPECT_TRUE(nlohmann::json::parse(line).contains("valid"));
  EXPECT_EQ(lines, 2u);
  EXPECT_FALSE(load_map((dir_ / "map.bin").string()).empty());
}

TEST_F(Cli, TrainErrors) {
  write("bad.cfg", "colour = red\n");
  EXPECT_EQ(run("train --config bad.cfg --train corpus.jsonl -o m.ckpt"), 2);
  write("dup.cfg", "dim = 4\ndim = 8\n");
  EXPECT_EQ(run("train --config dup.cfg --train corpus.jsonl -o m.ckpt"), 2);
  EXPECT_EQ(run("train --train missing.jsonl -o m.ckpt"), 2);
  EXPECT_EQ(run("train --train corpus.jsonl --loss bogus -o m.ckpt"), 2);
}

TEST_F(Cli, DivergenceExitCode) {
  pipeline();
  write("wild.cfg", "dim = 8\nsteps = 2\nepochs = 3\nlearning_rate = 1e300\nclip_norm = 0\n"
                    "class_min_count = 1\nvocab_min_count = 1\n");
  EXPECT_EQ(run("train --config wild.cfg --train corpus.train.jsonl -o wild.ckpt"), 3)
      << read("err.txt");
  EXPECT_FALSE(exists("wild.ckpt"));
}

TEST_F(Cli, PredictPrintsOneLinePerSymbol) {
  pipeline();
  std::string out;
  ASSERT_EQ(run("predict --model model.ckpt --map map.bin src/mod_000.py --k 3 --p 1", &out), 0)
      << read("err.txt");
  CodeGraph g = extract_graph(read("src/mod_000.py"));
  std::istringstream in(out);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line); ++n) {
    auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("name"));
    EXPECT_LE(j["candidates"].size(), 3u);
  }
  EXPECT_EQ(n, g.symbols.size());
  EXPECT_EQ(run("predict --model model.ckpt --map map.bin src/nothere.py"), 2);
  EXPECT_EQ(run("predict --model corpus.jsonl --map map.bin src/mod_000.py"), 2);
}

TEST_F(Cli, EvalWritesReportAndCurve) {
  pipeline();
  ASSERT_EQ(run("eval --model model.ckpt --map map.bin --test corpus.test.jsonl -o report.json"), 0)
      << read("err.txt");
  auto report = nlohmann::json::parse(read("report.json"));
  EXPECT_TRUE(report["summary"].contains("rare"));
  std::string csv = read("report.json.pr.csv");
  EXPECT_EQ(csv.rfind("threshold,recall,precision,emitted\n", 0), 0u);
  std::string first = read("report.json");
  ASSERT_EQ(run("eval --model model.ckpt --map map.bin --test corpus.test.jsonl -o report.json"), 0);
  EXPECT_EQ(read("report.json"), first);
}

TEST_F(Cli, ServeAnswersHttp) {
  pipeline();
  int port = 20000 + static_cast<int>(getpid() % 20000);
  std::string cmd = "(cd " + dir_.string() + " && exec " + TYPESPACE_CLI +
                    " serve --model model.ckpt --map map.bin --files src --addr 127.0.0.1:" +
                    std::to_string(port) + " > serve.out 2>&1) & echo $! > " +
                    (dir_ / "serve.pid").string();
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  httplib::Client client("127.0.0.1", port);
  httplib::Result res;
  for (int i = 0; i < 100 && !(res = client.Get("/api/files")); ++i)
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  pid_t pid = std::stoi(read("serve.pid"));
  ASSERT_TRUE(res) << read("serve.out");
  EXPECT_EQ(res->status, 200);
  auto files = nlohmann::json::parse(res->body)["files"];
  EXPECT_EQ(files.size(), 12u);
  auto s = client.Get("/api/suggestions?file=mod_000.py");
  ASSERT_TRUE(s);
  EXPECT_EQ(s->status, 200);
  kill(pid, SIGTERM);
}
