#pragma once

// Semantic-similarity replication: per-RQ summaries of the original findings
// and of the simulated logs, a generalizing revision pass, embeddings and
// cosine scoring, then grouping by study, theme and mode.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gidea/config.hpp"
#include "gidea/provider.hpp"
#include "gidea/trace.hpp"

namespace gidea {

inline constexpr const char* kSummaryTemplate =
    "I am studying smart assistant behavior. Please read the synthesized activities and responses from participants in "
    "an HCI study and extract information related to the following research questions: [Research Questions]\n\n"
    "Please structure your output with clear headings.\n\n[Activities and Conversations]";

inline constexpr const char* kRevisionTemplate =
    "Here is the content of a file:\n\n[Summary]\n\nKeep the meaning of the content as is, but revise it to be more "
    "general points, ignoring unnecessary detailed descriptions or examples.\n\nMake sure to keep the original meaning "
    "and context intact.";

// System message ahead of the summary and revision templates.
inline constexpr const char* kAnalysisSystem = "You summarize qualitative study data for researchers.";

// Summaries and revisions are run at temperature 0.
inline constexpr double kAnalysisTemperature = 0.0;

enum class FindingsSource { original, simulated };
inline constexpr std::array<std::string_view, 2> kFindingsSourceNames{"original", "simulated"};
inline std::string to_string(FindingsSource s) { return std::string(kFindingsSourceNames[static_cast<std::size_t>(s)]); }

struct FindingsDoc {
  std::string study_id;
  // 1-based.
  int rq_index = 1;
  FindingsSource source = FindingsSource::original;
  std::string raw_text;
  std::optional<std::string> summary;
  // Only set once summary is.
  std::optional<std::string> revised_summary;
};

struct RQResult {
  std::string study_id;
  int rq_index = 1;
  double similarity = 0.0;
  Theme theme = Theme::personalization;
  Mode mode = Mode::woz;
};

enum class GroupBy { study, theme, mode, all };
inline constexpr std::array<std::string_view, 4> kGroupByNames{"study", "theme", "mode", "all"};
inline std::string to_string(GroupBy g) { return std::string(kGroupByNames[static_cast<std::size_t>(g)]); }

// Research questions rendered into the summary template, one per line.
std::string render_research_questions(const std::vector<std::string>& rqs);

ChatRequest summary_request(const FindingsDoc& doc, const std::vector<std::string>& rqs);
ChatRequest revision_request(const std::string& summary, const std::string& tag = "revise");

// Each call is a fresh single-message conversation. Stores and returns the
// summary. Throws PreconditionError when raw_text is empty.
std::string summarize_for_rq(FindingsDoc& doc, const std::vector<std::string>& rqs, const ModelHandle& model);

// Throws PreconditionError when the summary is empty.
std::string revise_summary(const std::string& summary, const ModelHandle& model, const std::string& tag = "revise");

// Runs summarize then revise on the doc and stores both.
void summarize_and_revise(FindingsDoc& doc, const std::vector<std::string>& rqs, const ModelHandle& model);

double text_similarity(const std::string& a, const std::string& b, Embedder& embedder, const RetryPolicy& retry = {},
                       const Sleeper& sleep = thread_sleeper());

// Cosine over the embeddings of the two revised texts; symmetric in them.
RQResult score_rq(const StudyConfig& study, int rq_index, const std::string& original_revised,
                  const std::string& simulated_revised, Embedder& embedder, const RetryPolicy& retry = {},
                  const Sleeper& sleep = thread_sleeper());

// Mean similarity per group key (study id, theme name, mode name or "all").
// Throws PreconditionError when results is empty.
std::map<std::string, double> aggregate(const std::vector<RQResult>& results, GroupBy group_by);

// Columns: study_id, rq_index, theme, mode, similarity.
std::string similarity_csv(const std::vector<RQResult>& results);
std::vector<RQResult> parse_similarity_csv(const std::string& text);

// Plain-text rendering of a run's schedule, conversations and interviews,
// used as the simulated source for every RQ.
std::string simulated_log_text(const LoadedRun& run);

// Reads findings/<study_id>/rq<k>.original.txt for every RQ of the study.
// Throws IoError naming the first missing file.
std::vector<FindingsDoc> load_original_findings(const std::filesystem::path& findings_root, const StudyConfig& study);

// Summary artifacts under <run>/analysis/findings/.
std::filesystem::path findings_artifact(const std::filesystem::path& run_dir, int rq_index, FindingsSource source,
                                        const std::string& stage);

}  // namespace gidea
