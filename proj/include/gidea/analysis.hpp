#pragma once

// Behavioral-log analysis of a finished run: one CSV per study metric under
// <run>/analysis/ plus a short text digest.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gidea/engine.hpp"
#include "gidea/evalpipe.hpp"
#include "gidea/metrics.hpp"
#include "gidea/trace.hpp"

namespace gidea {

struct AnalysisOptions {
  // metric_id -> item -> rank from the original study, compared against the
  // simulated ranking when present.
  std::map<std::string, std::map<std::string, int>> original_ranks;
};

struct AnalysisOutput {
  std::vector<std::filesystem::path> files;
  std::vector<std::string> digest;
};

// Reads {"metric_id": {"item": rank, ...}, ...}.
std::map<std::string, std::map<std::string, int>> load_original_ranks(const std::filesystem::path& path);

// Transcript turns of every subject, in subject order.
std::map<std::string, std::vector<Turn>> run_transcripts(const LoadedRun& run);

// Every rating under `metric_id` (or "metric_id/category") found in the
// run's interviews and probe replies, as (category or "", value).
std::vector<std::pair<std::string, int>> collect_ratings(const LoadedRun& run, const MetricSpec& metric);

// Category a probe belongs to for a rate metric: the first metric category
// named in the activity text (case-insensitive), else "other".
std::string activity_category(const Probe& p, const std::vector<std::string>& categories);

AnalysisOutput analyze_run(const LoadedRun& run, const AnalysisOptions& options = {});

// Lines "overall mean: x.xx", then one per theme and per mode.
std::vector<std::string> similarity_digest(const std::vector<RQResult>& results);

}  // namespace gidea
