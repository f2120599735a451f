#pragma once

// Data-leakage checks: a temporal split around a model's knowledge cutoff
// compared with a two-sample t-test, and a continuation-writing probe that
// flags near-verbatim reproduction of published findings.

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gidea/config.hpp"
#include "gidea/metrics.hpp"
#include "gidea/provider.hpp"

namespace gidea {

inline constexpr double kVerbatimThreshold = 0.90;
inline constexpr int kContinuationRuns = 3;

inline constexpr const char* kContinuationSystem = "You are a helpful writing assistant.";
inline constexpr const char* kContinuationTemplate =
    "Please continue writing the following excerpt from a research paper. Continue the analysis in the same academic "
    "style and logical flow, maintaining consistency with the preceding content:\n\n[Study Data Excerpt]";

struct CutoffInfo {
  std::string model_id;
  Date knowledge_cutoff;
};

// Reads {"models": [{"model_id", "knowledge_cutoff"}]}.
std::vector<CutoffInfo> parse_cutoffs(const nlohmann::json& doc);
std::vector<CutoffInfo> load_cutoffs(const std::filesystem::path& path);
const CutoffInfo& find_cutoff(const std::vector<CutoffInfo>& cutoffs, const std::string& model_id);

struct TemporalSplit {
  std::vector<std::string> exposed;
  std::vector<std::string> controlled;
};

// Exposed: published in or before the cutoff month. Controlled: published
// after it. A cutoff is a month, so any date within it counts as exposed.
TemporalSplit temporal_split(const std::vector<std::pair<std::string, Date>>& studies, const Date& cutoff);

enum class LeakageMethod { temporal, continuation };
inline constexpr std::array<std::string_view, 2> kLeakageMethodNames{"temporal", "continuation"};
inline std::string to_string(LeakageMethod m) { return std::string(kLeakageMethodNames[static_cast<std::size_t>(m)]); }

struct LeakageReport {
  std::string model_id;
  LeakageMethod method = LeakageMethod::temporal;
  double exposed_mean = 0.0;
  double controlled_mean = 0.0;
  TTestResult t_test;
  // Studies whose score exceeds kVerbatimThreshold.
  std::vector<std::pair<std::string, double>> verbatim_flags;
  TemporalSplit split;
  double threshold = kVerbatimThreshold;

  nlohmann::json to_json() const;
};

// Flattens every score of each group and compares them. Welch by default;
// see README for why.
LeakageReport method1_test(const std::string& model_id, const std::map<std::string, std::vector<double>>& scores,
                           const TemporalSplit& split, VarianceMode variance = VarianceMode::welch);

// The same comparison over one continuation score per study, with verbatim
// flags for scores above the threshold.
LeakageReport method2_test(const std::string& model_id, const std::map<std::string, double>& scores,
                           const TemporalSplit& split, VarianceMode variance = VarianceMode::welch);

// Replaces each decimal literal ("12", "0.82", ".5", "1,024") with "[n]".
std::string strip_numerals(const std::string& text);

ChatRequest continuation_request(const std::string& excerpt, const std::string& tag = "continuation");

// `runs` stateless continuations in order. Throws PreconditionError when the
// excerpt is empty or runs < 1.
std::vector<std::string> continuation_probe(const std::string& excerpt, const ModelHandle& model,
                                            int runs = kContinuationRuns, const std::string& tag = "continuation");

struct Method2Score {
  double average = 0.0;
  bool verbatim = false;
  std::vector<double> per_run;
};

Method2Score method2_score(const std::vector<std::string>& continuations, const std::string& original_findings,
                           Embedder& embedder, const RetryPolicy& retry = {}, const Sleeper& sleep = thread_sleeper());

// Rows: study_id, group, score (one per study, mean of its scores).
std::string leakage_csv(const LeakageReport& report, const std::map<std::string, double>& study_scores);

}  // namespace gidea
