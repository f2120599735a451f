#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "gidea/trace.hpp"
#include "stub_server.hpp"
#include "support.hpp"

using namespace gidea;
using gidea::testing::fixture;
using gidea::testing::slurp;
using gidea::testing::StubServer;
using gidea::testing::TempDir;
using gidea::testing::tree_bytes;

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> simulate_cs9(const fs::path& root) {
  return {"simulate",  "--config", fixture("studies/cs9.json").string(), "--subjects", "2", "--seed", "7",
          "--scripted", fixture("scripts/cs9_scripted.json").string(), "--personas",
          fixture("personas/cs9.json").string(), "--out", root.string()};
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("validate: valid config prints nothing") {
    const Result r = run_cli({"validate", "--config", fixture("studies/cs9.json").string()});
    CHECK(r.code == cli::kExitOk);
    CHECK(r.out.empty());
  }

  TEST_CASE("validate: one line per violation") {
    TempDir tmp("validate");
    auto doc = nlohmann::json::parse(slurp(fixture("studies/cs9.json")));
    doc["research_questions"] = nlohmann::json::array();
    doc["policy"]["max_rounds"] = 0;
    std::ofstream(tmp.path() / "bad.json") << doc.dump(2);
    const Result r = run_cli({"validate", "--config", (tmp.path() / "bad.json").string()});
    CHECK(r.code == cli::kExitFailure);
    const auto lines = std::count(r.out.begin(), r.out.end(), '\n');
    CHECK(lines == 2);
    CHECK(r.out.find("research_questions") != std::string::npos);
    CHECK(r.out.find("max_rounds") != std::string::npos);
  }

  TEST_CASE("validate: missing flag is a usage error") {
    const Result r = run_cli({"validate"});
    CHECK(r.code == cli::kExitUsage);
    CHECK(r.err.find("--config") != std::string::npos);
    CHECK(run_cli({}).code == cli::kExitUsage);
    CHECK(run_cli({"frobnicate"}).code == cli::kExitUsage);
  }

  TEST_CASE("simulate: scripted runs are byte-identical") {
    TempDir a("sim-a"), b("sim-b");
    const Result ra = run_cli(simulate_cs9(a.path()));
    const Result rb = run_cli(simulate_cs9(b.path()));
    REQUIRE(ra.code == cli::kExitOk);
    REQUIRE(rb.code == cli::kExitOk);
    CHECK(ra.out == rb.out);
    const std::string run_id = first_line(ra.out);
    CHECK(run_id.rfind("CS9-s7-", 0) == 0);
    CHECK(tree_bytes(a.path() / run_id) == tree_bytes(b.path() / run_id));
    CHECK(run_cli(simulate_cs9(a.path())).code == cli::kExitFailure);
    auto again = simulate_cs9(a.path());
    again.push_back("--force");
    CHECK(run_cli(again).code == cli::kExitOk);
  }

  TEST_CASE("simulate: runs root defaults to the environment variable") {
    TempDir tmp("env-root");
    setenv("GIDEA_RUNS_DIR", tmp.path().c_str(), 1);
    auto args = simulate_cs9(tmp.path());
    args.resize(args.size() - 2);
    const Result r = run_cli(args);
    unsetenv("GIDEA_RUNS_DIR");
    REQUIRE(r.code == cli::kExitOk);
    CHECK(fs::exists(tmp.path() / first_line(r.out) / "manifest.json"));
  }

  TEST_CASE("simulate: missing api key exits 3 naming the variable") {
    TempDir tmp("nokey");
    unsetenv("OPENAI_API_KEY");
    const Result r = run_cli({"simulate", "--config", fixture("studies/cs9.json").string(), "--provider", "gpt-4o",
                              "--subjects", "1", "--out", tmp.path().string()});
    CHECK(r.code == cli::kExitProvider);
    CHECK(r.err.find("OPENAI_API_KEY") != std::string::npos);
    CHECK(fs::is_empty(tmp.path()));
  }

  TEST_CASE("simulate: a live run with wire tracing never persists the key") {
    TempDir tmp("live");
    const std::string key = "sk-live-test-31337";
    StubServer server([&](const httplib::Request& req, httplib::Response& res) {
      CHECK(req.get_header_value("Authorization") == "Bearer " + key);
      const nlohmann::json body{
          {"choices", {{{"message", {{"role", "assistant"}, {"content", "A calm person who likes tea."}}},
                        {"finish_reason", "stop"}}}},
          {"system_fingerprint", "served for " + key}};
      res.set_content(body.dump(), "application/json");
    });
    const nlohmann::json registry{
        {"models",
         {{{"model_id", "stub"},
           {"knowledge_cutoff", "2023-10"},
           {"provider",
            {{"kind", "live_http"}, {"model_id", "stub-1"}, {"base_url", server.base_url()}, {"api_key_env", "GIDEA_STUB_KEY"}}}}}}};
    std::ofstream(tmp.path() / "models.json") << registry.dump();
    setenv("GIDEA_STUB_KEY", key.c_str(), 1);
    const Result r = run_cli({"simulate", "--config", fixture("studies/cs9.json").string(), "--provider", "stub",
                              "--models", (tmp.path() / "models.json").string(), "--subjects", "1", "--seed", "1",
                              "--out", (tmp.path() / "runs").string(), "--trace-wire"});
    unsetenv("GIDEA_STUB_KEY");
    // The stub's replies are not valid schedule JSON, so the subject stops early.
    CHECK(r.code == cli::kExitOk);
    const fs::path dir = tmp.path() / "runs" / first_line(r.out);
    REQUIRE(fs::exists(dir / "wire.jsonl"));
    const std::string wire = slurp(dir / "wire.jsonl");
    CHECK(wire.find("[REDACTED]") != std::string::npos);
    for (const auto& [path, bytes] : tree_bytes(dir)) CHECK_MESSAGE(bytes.find(key) == std::string::npos, path);
    const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
    CHECK(manifest["providers"]["assistant"]["api_key_env"] == "GIDEA_STUB_KEY");
    CHECK(manifest["subjects"]["S1"]["status"] == "partial");
  }

  TEST_CASE("simulate: every subject failing on the provider exits 3") {
    TempDir tmp("down");
    StubServer server([](const httplib::Request&, httplib::Response& res) {
      res.status = 401;
      res.set_content(R"({"error":{"message":"bad key"}})", "application/json");
    });
    const nlohmann::json registry{
        {"models",
         {{{"model_id", "stub"},
           {"knowledge_cutoff", "2023-10"},
           {"provider",
            {{"kind", "live_http"}, {"model_id", "stub-1"}, {"base_url", server.base_url()}, {"api_key_env", "GIDEA_STUB_KEY"}}}}}}};
    std::ofstream(tmp.path() / "models.json") << registry.dump();
    setenv("GIDEA_STUB_KEY", "sk-wrong", 1);
    const Result r = run_cli({"simulate", "--config", fixture("studies/cs9.json").string(), "--provider", "stub",
                              "--models", (tmp.path() / "models.json").string(), "--subjects", "2", "--out",
                              (tmp.path() / "runs").string()});
    unsetenv("GIDEA_STUB_KEY");
    CHECK(r.code == cli::kExitProvider);
  }

  TEST_CASE("report: a completed run writes its analysis tables") {
    TempDir tmp("report");
    const Result sim = run_cli(simulate_cs9(tmp.path()));
    REQUIRE(sim.code == cli::kExitOk);
    const fs::path dir = tmp.path() / first_line(sim.out);
    const Result r = run_cli({"report", "--run", dir.string()});
    CHECK(r.code == cli::kExitOk);
    CHECK(fs::exists(dir / "analysis"));
    int csvs = 0;
    for (const auto& e : fs::directory_iterator(dir / "analysis")) csvs += e.path().extension() == ".csv";
    CHECK(csvs >= 2);
    CHECK(fs::exists(dir / "analysis" / "decisions.csv"));
  }

  TEST_CASE("report: a corrupted run exits 1 naming stream and seq") {
    TempDir tmp("corrupt");
    const Result sim = run_cli(simulate_cs9(tmp.path()));
    REQUIRE(sim.code == cli::kExitOk);
    const fs::path dir = tmp.path() / first_line(sim.out);
    const fs::path stream = dir / "S2" / "transcript.jsonl";
    std::istringstream in(slurp(stream));
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    REQUIRE(lines.size() > 2);
    lines.erase(lines.begin() + 1);
    std::ofstream o(stream, std::ios::trunc);
    for (const auto& l : lines) o << l << "\n";
    o.close();
    const Result r = run_cli({"report", "--run", dir.string()});
    CHECK(r.code == cli::kExitFailure);
    CHECK(r.err.find("S2/transcript") != std::string::npos);
    CHECK(r.err.find("seq 2") != std::string::npos);
  }

  TEST_CASE("evaluate: published per-question scores give the overall mean") {
    const Result r = run_cli({"evaluate", "--similarity", fixture("paper/similarity_gpt-4o.csv").string()});
    CHECK(r.code == cli::kExitOk);
    CHECK(first_line(r.out) == "overall mean: 0.85");
    // 0.915 exactly; the published figure rounds it down to 0.91.
    CHECK(r.out.find("mode interview: 0.92") != std::string::npos);
    CHECK(r.out.find("mode storyboard: 0.88") != std::string::npos);
    CHECK(r.out.find("mode woz: 0.83") != std::string::npos);
    CHECK(run_cli({"evaluate"}).code == cli::kExitUsage);
  }

  TEST_CASE("summarize then evaluate a scripted run with the hash embedder") {
    TempDir tmp("pipeline");
    const Result sim = run_cli(simulate_cs9(tmp.path()));
    REQUIRE(sim.code == cli::kExitOk);
    const fs::path dir = tmp.path() / first_line(sim.out);
    const nlohmann::json script{{"entries",
                                 {{{"match", "summarize/*/original"}, {"response", "Users welcome timely help."}, {"times", 0}},
                                  {{"match", "summarize/*/simulated"}, {"response", "Avatars accepted help."}, {"times", 0}},
                                  {{"match", "*"}, {"response", "Users welcome timely help."}, {"times", 0}}}}};
    std::ofstream(tmp.path() / "analysis_script.json") << script.dump();
    const Result s = run_cli({"summarize", "--run", dir.string(), "--findings", fixture("findings").string(),
                              "--scripted", (tmp.path() / "analysis_script.json").string()});
    REQUIRE(s.code == cli::kExitOk);
    CHECK(s.out == "rq1: summarized\nrq2: summarized\n");
    const Result e = run_cli({"evaluate", "--run", dir.string(), "--embedder", "hash"});
    REQUIRE(e.code == cli::kExitOk);
    // Every revision collapses to the same text, so every question scores 1.
    CHECK(first_line(e.out) == "overall mean: 1.00");
    CHECK(fs::exists(dir / "analysis" / "similarity.csv"));
  }

  TEST_CASE("leakage: temporal and continuation reports") {
    TempDir tmp("leak");
    const Result t = run_cli({"leakage", "--model", "gpt-4o", "--method", "temporal", "--studies",
                              fixture("studies").string(), "--scores", fixture("paper/similarity_gpt-4o.csv").string(),
                              "--out", tmp.path().string()});
    REQUIRE(t.code == cli::kExitOk);
    CHECK(t.out.find("p: 0.823") != std::string::npos);
    CHECK(fs::exists(tmp.path() / "leakage_gpt-4o.json"));
    const Result c = run_cli({"leakage", "--model", "gpt-4o", "--method", "continuation", "--studies",
                              fixture("studies").string(), "--scores", fixture("paper/continuation_gpt-4o.csv").string(),
                              "--out", tmp.path().string()});
    REQUIRE(c.code == cli::kExitOk);
    CHECK(c.out.find("p: 0.137") != std::string::npos);
    CHECK(run_cli({"leakage", "--model", "gpt-4o", "--method", "sideways", "--studies", fixture("studies").string()})
              .code == cli::kExitUsage);
    CHECK(run_cli({"leakage", "--model", "gpt-4o", "--method", "temporal", "--studies", fixture("studies").string(),
                   "--scores", fixture("paper/similarity_gpt-4o.csv").string(), "--variance", "odd"})
              .code == cli::kExitUsage);
  }

  TEST_CASE("personas: deterministic profile sampling") {
    const std::vector<std::string> args{"personas", "--personas", fixture("personas/cs9.json").string(), "--subjects",
                                        "3", "--seed", "5"};
    const Result a = run_cli(args), b = run_cli(args);
    REQUIRE(a.code == cli::kExitOk);
    CHECK(a.out == b.out);
    CHECK(nlohmann::json::parse(a.out).size() == 3);
  }
}
