#pragma once

// The simulation loop: schedule generation, activity enrichment,
// assistant/avatar interaction rounds, environment updates and interviews.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gidea/config.hpp"
#include "gidea/context.hpp"
#include "gidea/environment.hpp"
#include "gidea/provider.hpp"
#include "gidea/timestamp.hpp"
#include "gidea/trace.hpp"

namespace gidea {

// Regeneration attempts after the first malformed output.
inline constexpr int kFormatRetries = 2;
// Transcript turns shown in a prompt's conversation history.
inline constexpr std::size_t kHistoryTurns = 12;
// Schedule entries shown as previous activities.
inline constexpr std::size_t kPreviousActivities = 3;
inline constexpr const char* kDefaultStartTime = "2025-02-06 08:00:00 am";

struct ScheduleEntry {
  Timestamp start_time;
  Timestamp end_time;
  std::string activity;
  std::string reasoning;

  nlohmann::json to_json() const;
  bool operator==(const ScheduleEntry& o) const {
    return start_time.seconds == o.start_time.seconds && end_time.seconds == o.end_time.seconds &&
           start_time.text == o.start_time.text && end_time.text == o.end_time.text && activity == o.activity &&
           reasoning == o.reasoning;
  }
};

struct EnrichedActivity {
  Timestamp time_stamp;
  std::string expanded;

  nlohmann::json to_json() const;
};

enum class Speaker { assistant, avatar };
enum class Decision { accept, reject, ignore, none };

inline constexpr std::array<std::string_view, 2> kSpeakerNames{"assistant", "avatar"};
inline constexpr std::array<std::string_view, 4> kDecisionNames{"accept", "reject", "ignore", "none"};

inline std::string to_string(Speaker s) { return std::string(kSpeakerNames[static_cast<std::size_t>(s)]); }
inline std::string to_string(Decision d) { return std::string(kDecisionNames[static_cast<std::size_t>(d)]); }

struct Turn {
  std::int64_t seq = 0;
  int round = 0;
  Speaker speaker = Speaker::assistant;
  std::string text;
  Decision decision = Decision::none;
  // "metric_id" or "metric_id/category" -> rating.
  std::map<std::string, int> ratings;
  std::vector<DeviceAction> actions;
  // Logical time of the turn (start of the current activity).
  std::string at;
  // Current activity text when the turn happened.
  std::string activity;

  nlohmann::json to_json() const;
  static Turn from_json(const nlohmann::json& j);
};

struct SimulationState {
  int round_index = 0;
  std::int64_t clock = 0;
  EnvironmentState environment;
  MemoryState memory;
  std::vector<Turn> transcript;
  Phase phase = Phase::simulation;
  std::vector<ScheduleEntry> schedule;
  std::vector<EnrichedActivity> enriched;
  // Interview answers given so far, by phase key.
  std::map<std::string, nlohmann::json> interviews;

  std::int64_t next_seq() const { return transcript.empty() ? 1 : transcript.back().seq + 1; }
};

// Machine-readable block a reply may end with.
struct Trailer {
  std::optional<Decision> decision;
  std::map<std::string, int> ratings;
  std::vector<DeviceAction> actions;
  std::vector<std::string> notes;
  bool end = false;
  // The reply with trailer lines removed and whitespace trimmed.
  std::string text;
};

// Recognized lines (keyword case-insensitive, anywhere in the reply):
//   DECISION: accept|reject|ignore
//   RATING[metric_id]: n   or   RATING[metric_id/category]: n
//   ACTION: device|action|value   (value optional)
//   NOTE: private text
//   END
// Throws FormatError for a recognized keyword with a malformed value.
Trailer parse_trailer(const std::string& reply);

// Strips markdown code fences and trims to the first balanced JSON object.
// Returns nullopt when no object is found.
std::optional<std::string> repair_json_output(const std::string& raw);

// Removes every occurrence of the given strings (longest first), masking
// with "[redacted]" where that cannot reintroduce a match.
std::string redact_all(std::string text, const std::vector<std::string>& secrets);

struct Subject {
  const StudyConfig* study = nullptr;
  const AvatarProfile* profile = nullptr;
  const EnvironmentConfig* env = nullptr;
};

enum class PromptRole { assistant, avatar };

struct PromptContext {
  PromptRole role = PromptRole::avatar;
  Phase phase = Phase::simulation;
  Subject subject;
  // Interview question being asked (interview phases only).
  const InterviewQuestion* question = nullptr;
  // Assistant reflection prompt (post-interview, assistant only).
  bool reflection = false;
};

// Strings the avatar must never see: research questions, assistant role and
// metric rubrics.
std::vector<std::string> protected_strings(const StudyConfig& study);

// Ordered messages for one model call; pure in its inputs and honoring the
// knowledge-isolation contract.
std::vector<ChatMessage> build_prompt(const PromptContext& ctx, const SimulationState& state, const StudyConfig& study);

ChatRequest schedule_request(const Subject& subject, const SimulationState& state, const std::string& tag);
ChatRequest enrichment_request(const Subject& subject, const SimulationState& state, const ScheduleEntry& entry,
                               const std::string& tag);

// Receives every trace record a simulation step produces. The engine never
// writes files itself; run_study binds this to the subject's streams.
struct TraceSink {
  std::function<void(const std::string& stream, EventKind kind, nlohmann::json payload)> emit;

  void operator()(const std::string& stream, EventKind kind, nlohmann::json payload) const {
    if (emit) emit(stream, kind, std::move(payload));
  }
};

struct Models {
  ModelHandle assistant;
  ModelHandle avatar;
};

struct ActivityResult {
  ScheduleEntry entry;
  // Set when the emitted start time overlapped the previous activity.
  std::optional<ScheduleEntry> clamped_from;
};

// Asks for the next schedule entry, repairs and retries malformed output,
// clamps continuity violations, appends to state.schedule and
// memory.activity_history, and advances the clock.
ActivityResult generate_next_activity(const Subject& subject, SimulationState& state, const ModelHandle& model,
                                      const TraceSink& trace = {}, const std::string& start_time = kDefaultStartTime);

EnrichedActivity enrich_activity(const Subject& subject, SimulationState& state, const ScheduleEntry& entry,
                                 const ModelHandle& model, const TraceSink& trace = {});

// One assistant/avatar exchange under the study's interaction policy.
void run_interaction_round(const Subject& subject, SimulationState& state, const Models& models,
                           const TraceSink& trace = {});

struct InterviewAnswer {
  std::string question;
  std::string answer;
  std::map<std::string, int> ratings;

  nlohmann::json to_json() const;
};

std::vector<InterviewAnswer> run_interview(Phase phase, const Subject& subject, SimulationState& state,
                                           const Models& models, const TraceSink& trace = {});

// The assistant's reflection on the research questions (post-interview).
std::string run_assistant_reflection(const Subject& subject, SimulationState& state, const Models& models,
                                     const TraceSink& trace = {});

// Runs every policy phase for one avatar. Throws on the first unrecoverable
// ProviderError or FormatError; state holds whatever was completed.
void run_subject(const Subject& subject, SimulationState& state, const Models& models, const TraceSink& trace = {},
                 const std::string& start_time = kDefaultStartTime);

struct RunOptions {
  std::uint64_t seed = 0;
  std::filesystem::path runs_root = "runs";
  // Derived from the inputs when empty.
  std::string run_id;
  bool force = false;
  int jobs = 1;
  std::string start_time = kDefaultStartTime;
  // Extra provenance recorded in the manifest (e.g. the embedder identity).
  std::map<std::string, nlohmann::json> extra_providers;
};

struct RunOutcome {
  std::filesystem::path dir;
  std::string run_id;
  // subject_id -> "complete" | "partial".
  std::map<std::string, std::string> status;
  // True when every subject stopped on a ProviderError.
  bool all_provider_failures = false;
};

// Builds a deterministic run id: <study_id>-s<seed>-<first 8 hex of input hash>.
std::string derive_run_id(const StudyConfig& study, const std::vector<AvatarProfile>& profiles,
                          const EnvironmentConfig& env, std::uint64_t seed);

// The whole workflow for every profile. Subjects whose provider fails are
// recorded as partial; the others continue.
RunOutcome run_study(const StudyConfig& study, const std::vector<AvatarProfile>& profiles, const EnvironmentConfig& env,
                     const Models& models, const RunOptions& options);

}  // namespace gidea
