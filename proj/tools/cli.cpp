#include "cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "gidea/analysis.hpp"
#include "gidea/config.hpp"
#include "gidea/context.hpp"
#include "gidea/engine.hpp"
#include "gidea/environment.hpp"
#include "gidea/errors.hpp"
#include "gidea/evalpipe.hpp"
#include "gidea/http_provider.hpp"
#include "gidea/leakage.hpp"
#include "gidea/metrics.hpp"
#include "gidea/scripted.hpp"
#include "gidea/trace.hpp"

namespace gidea::cli {

namespace fs = std::filesystem;

const char* builtin_models_json() {
  return R"({
  "models": [
    {"model_id": "gpt-4o", "knowledge_cutoff": "2023-10",
     "provider": {"kind": "live_http", "model_id": "gpt-4o", "base_url": "https://api.openai.com/v1",
                  "api_key_env": "OPENAI_API_KEY"}},
    {"model_id": "llama-3.1-70b", "knowledge_cutoff": "2023-12",
     "provider": {"kind": "live_http", "model_id": "meta-llama/Meta-Llama-3.1-70B-Instruct-Turbo",
                  "base_url": "https://api.together.xyz/v1", "api_key_env": "TOGETHER_API_KEY"}},
    {"model_id": "mixtral-8x7b", "knowledge_cutoff": "2023-09",
     "provider": {"kind": "live_http", "model_id": "mistralai/Mixtral-8x7B-Instruct-v0.1",
                  "base_url": "https://api.together.xyz/v1", "api_key_env": "TOGETHER_API_KEY"}}
  ],
  "embedders": [
    {"model_id": "all-mpnet-base-v2",
     "provider": {"kind": "live_http", "model_id": "sentence-transformers/all-mpnet-base-v2",
                  "base_url": "http://localhost:8080/v1", "api_key_env": "GIDEA_EMBEDDINGS_API_KEY"}}
  ]
})";
}

namespace {

// Raised for command-line misuse detected after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Registry {
  nlohmann::json doc;

  static Registry load(const std::string& path) {
    Registry r;
    std::string source = path;
    if (source.empty()) {
      if (const char* env = std::getenv("GIDEA_MODELS")) source = env;
    }
    try {
      r.doc = nlohmann::json::parse(source.empty() ? std::string(builtin_models_json()) : read_file(source));
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("model registry " + source + ": " + e.what());
    }
    return r;
  }

  ProviderIdentity find(const char* section, const std::string& id) const {
    if (doc.contains(section)) {
      for (const auto& m : doc[section]) {
        if (m.value("model_id", "") == id) return ProviderIdentity::from_json(m.at("provider"));
      }
    }
    throw UsageError(std::string("unknown ") + (std::string(section) == "models" ? "provider" : "embedder") + " '" +
                     id + "'");
  }

  std::vector<CutoffInfo> cutoffs() const {
    nlohmann::json models = {{"models", doc.value("models", nlohmann::json::array())}};
    return parse_cutoffs(models);
  }
};

// Serializes wire records into <run>/wire.jsonl, opening it on first use.
class WireLog {
 public:
  explicit WireLog(fs::path path) : path_(std::move(path)) {}

  void write(const nlohmann::json& record) {
    std::lock_guard lock(mu_);
    if (!stream_) stream_ = std::make_unique<EventStream>(path_);
    stream_->emit(EventKind::wire, record);
  }

 private:
  fs::path path_;
  std::mutex mu_;
  std::unique_ptr<EventStream> stream_;
};

struct ChatBackend {
  std::unique_ptr<ChatProvider> provider;
  ModelHandle handle;
};

// --scripted wins over --provider; a live provider's key is checked before
// any work starts.
ChatBackend make_chat_backend(const std::string& provider_id, const std::string& scripted, const std::string& models,
                              WireLogger wire) {
  ChatBackend b;
  if (!scripted.empty()) {
    auto identity = ScriptedChatProvider::default_identity();
    if (!provider_id.empty()) identity.model_id = provider_id;
    b.provider = std::make_unique<ScriptedChatProvider>(ScriptedChatProvider::load_script(scripted), identity);
    b.handle.sleep = no_sleep();
  } else {
    if (provider_id.empty()) throw UsageError("either --provider or --scripted is required");
    const ProviderIdentity identity = Registry::load(models).find("models", provider_id);
    if (identity.kind == ProviderKind::live_http) resolve_api_key(identity);
    b.provider = std::make_unique<HttpChatProvider>(identity, std::move(wire));
  }
  b.handle.provider = b.provider.get();
  return b;
}

std::unique_ptr<Embedder> make_embedder(const std::string& id, const std::string& models, WireLogger wire) {
  if (id.empty() || id == "hash") return std::make_unique<HashEmbedder>();
  const ProviderIdentity identity = Registry::load(models).find("embedders", id);
  resolve_api_key(identity);
  return std::make_unique<HttpEmbedder>(identity, std::move(wire));
}

fs::path runs_root(const std::string& out) {
  if (!out.empty()) return out;
  if (const char* env = std::getenv("GIDEA_RUNS_DIR")) return env;
  return "runs";
}

nlohmann::json read_json(const fs::path& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::vector<AvatarProfile> resolve_profiles(const std::string& personas, int subjects, std::uint64_t seed) {
  if (subjects < 1) throw UsageError("--subjects must be at least 1");
  if (personas.empty()) return sample_profiles(ProfileDistribution{}, subjects, seed);
  const nlohmann::json doc = read_json(personas);
  if (doc.is_array() || (doc.is_object() && doc.contains("profiles"))) {
    auto profiles = profiles_from_json(doc.is_array() ? doc : doc["profiles"]);
    if (static_cast<int>(profiles.size()) < subjects) {
      throw PreconditionError(personas + " holds " + std::to_string(profiles.size()) + " profiles, fewer than --subjects");
    }
    profiles.resize(static_cast<std::size_t>(subjects));
    return profiles;
  }
  return sample_profiles(ProfileDistribution::from_json(doc), subjects, seed);
}

// Reads "study_id,score" rows.
std::map<std::string, double> read_study_scores(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::getline(in, line);
  std::map<std::string, double> out;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError(path.string() + ": expected study_id,score rows");
    try {
      out[line.substr(0, comma)] = std::stod(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw ParseError(path.string() + ": malformed score in '" + line + "'");
    }
  }
  return out;
}

std::vector<StudyConfig> load_study_dir(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<StudyConfig> out;
  for (const auto& f : files) out.push_back(load_config(f));
  if (out.empty()) throw IoError("no study configs in " + dir.string());
  return out;
}

struct Args {
  std::string config;
  std::string personas;
  std::string environment;
  std::string provider;
  std::string scripted;
  std::string models;
  std::string out;
  std::string run_id;
  std::string embedder = "hash";
  std::string findings = "findings";
  std::string model;
  std::string method = "temporal";
  std::string scores;
  std::string excerpts;
  std::string studies;
  std::string variance = "welch";
  std::string original_ranks;
  std::string start_time = kDefaultStartTime;
  std::vector<std::string> runs;
  std::vector<std::string> similarity;
  int subjects = 15;
  int jobs = 1;
  std::uint64_t seed = 0;
  bool force = false;
  bool trace_wire = false;
};

int cmd_validate(const Args& a, std::ostream& out) {
  const auto violations = config_violations(read_file(a.config));
  for (const auto& v : violations) out << v << "\n";
  return violations.empty() ? kExitOk : kExitFailure;
}

int cmd_personas(const Args& a, std::ostream& out) {
  auto profiles = resolve_profiles(a.personas, a.subjects, a.seed);
  if (!a.provider.empty() || !a.scripted.empty()) {
    auto backend = make_chat_backend(a.provider, a.scripted, a.models, {});
    for (auto& p : profiles) p.narrative = generate_narrative(p, backend.handle);
  }
  const std::string bytes = profiles_to_json(profiles).dump(2) + "\n";
  if (a.out.empty()) {
    out << bytes;
  } else {
    write_file_durable(a.out, bytes);
    out << a.out << "\n";
  }
  return kExitOk;
}

int cmd_simulate(const Args& a, std::ostream& out, std::ostream& err) {
  const StudyConfig study = load_config(a.config);
  const EnvironmentConfig env = a.environment.empty() ? default_environment() : load_environment(a.environment);
  const auto profiles = resolve_profiles(a.personas, a.subjects, a.seed);

  RunOptions options;
  options.seed = a.seed;
  options.runs_root = runs_root(a.out);
  options.run_id = a.run_id.empty() ? derive_run_id(study, profiles, env, a.seed) : a.run_id;
  options.force = a.force;
  options.jobs = a.jobs;
  options.start_time = a.start_time;

  std::shared_ptr<WireLog> wire_log;
  WireLogger wire;
  if (a.trace_wire) {
    wire_log = std::make_shared<WireLog>(options.runs_root / options.run_id / "wire.jsonl");
    wire = [wire_log](const nlohmann::json& r) { wire_log->write(r); };
  }
  auto backend = make_chat_backend(a.provider, a.scripted, a.models, wire);
  const Models models{backend.handle, backend.handle};
  const RunOutcome outcome = run_study(study, profiles, env, models, options);

  for (const auto& [subject, status] : outcome.status) {
    if (status != "complete") err << "subject " << subject << ": " << status << "\n";
  }
  out << outcome.run_id << "\n";
  if (outcome.all_provider_failures) {
    err << "every subject stopped on a provider failure; see " << (outcome.dir / "manifest.json").string() << "\n";
    return kExitProvider;
  }
  return kExitOk;
}

int cmd_summarize(const Args& a, std::ostream& out) {
  const fs::path dir = a.runs.front();
  const LoadedRun run = load_run(dir);
  const StudyConfig& study = run.config;
  auto backend = make_chat_backend(a.provider, a.scripted, a.models, {});
  auto originals = load_original_findings(a.findings, study);
  const std::string simulated = simulated_log_text(run);
  for (std::size_t k = 0; k < study.research_questions.size(); ++k) {
    const int rq = static_cast<int>(k + 1);
    const std::vector<std::string> rqs{study.research_questions[k]};
    FindingsDoc sim{study.study_id, rq, FindingsSource::simulated, simulated, std::nullopt, std::nullopt};
    for (FindingsDoc* doc : {&originals[k], &sim}) {
      summarize_and_revise(*doc, rqs, backend.handle);
      write_file_durable(findings_artifact(dir, rq, doc->source, "summary"), *doc->summary + "\n");
      write_file_durable(findings_artifact(dir, rq, doc->source, "revised"), *doc->revised_summary + "\n");
    }
    out << "rq" << rq << ": summarized\n";
  }
  return kExitOk;
}

int cmd_evaluate(const Args& a, std::ostream& out) {
  if (a.runs.empty() && a.similarity.empty()) throw UsageError("evaluate needs --run or --similarity");
  std::vector<RQResult> all;
  auto embedder = make_embedder(a.embedder, a.models, {});
  for (const auto& d : a.runs) {
    const LoadedRun run = load_run(d);
    std::vector<RQResult> results;
    for (std::size_t k = 1; k <= run.config.research_questions.size(); ++k) {
      const int rq = static_cast<int>(k);
      const std::string orig = read_file(findings_artifact(d, rq, FindingsSource::original, "revised"));
      const std::string sim = read_file(findings_artifact(d, rq, FindingsSource::simulated, "revised"));
      results.push_back(score_rq(run.config, rq, orig, sim, *embedder));
    }
    write_file_durable(fs::path(d) / "analysis" / "similarity.csv", similarity_csv(results));
    all.insert(all.end(), results.begin(), results.end());
  }
  for (const auto& f : a.similarity) {
    const auto rows = parse_similarity_csv(read_file(f));
    all.insert(all.end(), rows.begin(), rows.end());
  }
  for (const auto& line : similarity_digest(all)) out << line << "\n";
  return kExitOk;
}

int cmd_leakage(const Args& a, std::ostream& out) {
  const auto variance = variance_mode_from_name(a.variance);
  if (!variance) throw UsageError("--variance must be welch or pooled");
  const Registry registry = Registry::load(a.models);
  const CutoffInfo cutoff = find_cutoff(registry.cutoffs(), a.model);
  const auto studies = load_study_dir(a.studies);
  std::vector<std::pair<std::string, Date>> dates;
  for (const auto& s : studies) dates.emplace_back(s.study_id, s.publication_date);
  const TemporalSplit split = temporal_split(dates, cutoff.knowledge_cutoff);

  LeakageReport report;
  std::map<std::string, double> study_scores;
  if (a.method == "temporal") {
    if (a.scores.empty()) throw UsageError("--method temporal needs --scores (a similarity CSV)");
    std::map<std::string, std::vector<double>> per_rq;
    for (const auto& r : parse_similarity_csv(read_file(a.scores))) per_rq[r.study_id].push_back(r.similarity);
    for (const auto& [id, v] : per_rq) study_scores[id] = mean(v);
    report = method1_test(a.model, per_rq, split, *variance);
  } else if (a.method == "continuation") {
    if (!a.scores.empty()) {
      study_scores = read_study_scores(a.scores);
    } else if (!a.excerpts.empty()) {
      auto backend = make_chat_backend(a.provider, a.scripted, a.models, {});
      auto embedder = make_embedder(a.embedder, a.models, {});
      for (const auto& s : studies) {
        const fs::path base = fs::path(a.excerpts) / s.study_id;
        const std::string excerpt = strip_numerals(read_file(base.string() + ".excerpt.txt"));
        const std::string findings = read_file(base.string() + ".findings.txt");
        const auto texts = continuation_probe(excerpt, backend.handle, kContinuationRuns, "continuation/" + s.study_id);
        study_scores[s.study_id] = method2_score(texts, findings, *embedder).average;
      }
    } else {
      throw UsageError("--method continuation needs --scores or --excerpts");
    }
    report = method2_test(a.model, study_scores, split, *variance);
  } else {
    throw UsageError("--method must be temporal or continuation");
  }

  const fs::path dir = a.out.empty() ? fs::path("analysis") : fs::path(a.out);
  write_file_durable(dir / ("leakage_" + a.model + ".json"), report.to_json().dump(2) + "\n");
  write_file_durable(dir / ("leakage_" + a.model + "_" + a.method + ".csv"), leakage_csv(report, study_scores));
  out << "model: " << a.model << "\n"
      << "method: " << a.method << "\n"
      << "exposed mean: " << format_real(report.exposed_mean, 3) << "\n"
      << "controlled mean: " << format_real(report.controlled_mean, 3) << "\n"
      << "t: " << format_real(report.t_test.t_statistic, 3) << "\n"
      << "df: " << format_real(report.t_test.degrees_of_freedom, 2) << "\n"
      << "p: " << format_real(report.t_test.p_value, 3) << "\n";
  for (const auto& [id, s] : report.verbatim_flags) out << "verbatim: " << id << " " << format_real(s, 2) << "\n";
  return kExitOk;
}

int cmd_report(const Args& a, std::ostream& out) {
  if (a.runs.empty() && a.similarity.empty()) throw UsageError("report needs --run or --similarity");
  AnalysisOptions options;
  if (!a.original_ranks.empty()) options.original_ranks = load_original_ranks(a.original_ranks);
  for (const auto& d : a.runs) {
    const LoadedRun run = load_run(d);
    for (const auto& line : analyze_run(run, options).digest) out << line << "\n";
  }
  if (!a.similarity.empty()) {
    std::vector<RQResult> all;
    for (const auto& f : a.similarity) {
      const auto rows = parse_similarity_csv(read_file(f));
      all.insert(all.end(), rows.begin(), rows.end());
    }
    for (const auto& line : similarity_digest(all)) out << line << "\n";
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Simulated replication of human-assistant interaction studies", "gidea"};
  app.require_subcommand(1);
  Args a;

  auto add_provider = [&](CLI::App* c) {
    c->add_option("--provider", a.provider, "Model id from the registry");
    c->add_option("--scripted", a.scripted, "Script file for the deterministic chat backend");
    c->add_option("--models", a.models, "Model registry JSON (default: GIDEA_MODELS or built-in)");
  };

  auto* validate = app.add_subcommand("validate", "Check a study config");
  validate->add_option("--config", a.config, "Study config JSON")->required();

  auto* personas = app.add_subcommand("personas", "Sample avatar profiles");
  personas->add_option("--personas", a.personas, "Profile distribution JSON");
  personas->add_option("--subjects", a.subjects, "Number of profiles");
  personas->add_option("--seed", a.seed, "Sampling seed");
  personas->add_option("--out", a.out, "Output file (default: stdout)");
  add_provider(personas);

  auto* simulate = app.add_subcommand("simulate", "Run a study simulation");
  simulate->add_option("--config", a.config, "Study config JSON")->required();
  simulate->add_option("--subjects", a.subjects, "Number of avatars");
  simulate->add_option("--seed", a.seed, "Run seed");
  simulate->add_option("--out", a.out, "Runs root (default: GIDEA_RUNS_DIR or ./runs)");
  simulate->add_option("--personas", a.personas, "Profile distribution or profile list JSON");
  simulate->add_option("--environment", a.environment, "Environment JSON (default: one-bedroom home)");
  simulate->add_option("--jobs", a.jobs, "Subjects simulated in parallel");
  simulate->add_option("--run-id", a.run_id, "Run id (default: derived from the inputs)");
  simulate->add_option("--start-time", a.start_time, "Logical start time of the first activity");
  simulate->add_flag("--trace-wire", a.trace_wire, "Log HTTP bodies (key redacted) to wire.jsonl");
  simulate->add_flag("--force", a.force, "Replace an existing run directory");
  add_provider(simulate);

  auto* summarize = app.add_subcommand("summarize", "Summarize and revise findings per research question");
  summarize->add_option("--run", a.runs, "Run directory")->required()->expected(1);
  summarize->add_option("--findings", a.findings, "Root of findings/<study_id>/rq<k>.original.txt");
  add_provider(summarize);

  auto* evaluate = app.add_subcommand("evaluate", "Score revised summaries and aggregate");
  evaluate->add_option("--run", a.runs, "Run directories");
  evaluate->add_option("--similarity", a.similarity, "Extra similarity CSVs to aggregate");
  evaluate->add_option("--embedder", a.embedder, "Embedder id, or hash for the bag-of-words embedder");
  evaluate->add_option("--models", a.models, "Model registry JSON");

  auto* leakage = app.add_subcommand("leakage", "Data-leakage validation");
  leakage->add_option("--model", a.model, "Model id with a knowledge cutoff")->required();
  leakage->add_option("--method", a.method, "temporal or continuation");
  leakage->add_option("--studies", a.studies, "Directory of study configs")->required();
  leakage->add_option("--scores", a.scores, "Similarity CSV (temporal) or study_id,score CSV (continuation)");
  leakage->add_option("--excerpts", a.excerpts, "Directory of <study_id>.excerpt.txt and .findings.txt");
  leakage->add_option("--variance", a.variance, "welch (default) or pooled");
  leakage->add_option("--out", a.out, "Output directory (default: ./analysis)");
  leakage->add_option("--embedder", a.embedder, "Embedder id, or hash");
  add_provider(leakage);

  auto* report = app.add_subcommand("report", "Behavioral metrics and digests");
  report->add_option("--run", a.runs, "Run directories");
  report->add_option("--similarity", a.similarity, "Similarity CSVs to summarize");
  report->add_option("--original-ranks", a.original_ranks, "Original rankings JSON {metric: {item: rank}}");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return kExitUsage;
  }

  try {
    if (validate->parsed()) return cmd_validate(a, out);
    if (personas->parsed()) return cmd_personas(a, out);
    if (simulate->parsed()) return cmd_simulate(a, out, err);
    if (summarize->parsed()) return cmd_summarize(a, out);
    if (evaluate->parsed()) return cmd_evaluate(a, out);
    if (leakage->parsed()) return cmd_leakage(a, out);
    if (report->parsed()) return cmd_report(a, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ProviderError& e) {
    err << "provider error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return kExitProvider;
  } catch (const IntegrityError& e) {
    err << "integrity error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace gidea::cli
