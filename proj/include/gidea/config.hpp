#pragma once

// Interaction knowledge: the machine-readable description of a study that
// parameterizes a simulation run.

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace gidea {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

namespace detail {

template <typename E, std::size_t N>
std::optional<E> enum_from_name(std::string_view name, const std::array<std::string_view, N>& names) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == name) return static_cast<E>(i);
  }
  return std::nullopt;
}

}  // namespace detail

enum class Theme { personalization, proactivity, interruptibility, user_control };
enum class Mode { woz, storyboard, interview };
enum class TurnMode { single_turn, multi_turn };
enum class Phase { pre_interview, mid_interview, simulation, post_interview };
enum class Initiation { assistant_proactive, avatar_initiated, scripted };
enum class MetricKind { likert, ranking, rate, distribution, trait_rating, availability };

inline constexpr std::array<std::string_view, 4> kThemeNames{"personalization", "proactivity", "interruptibility",
                                                             "user_control"};
inline constexpr std::array<std::string_view, 3> kModeNames{"woz", "storyboard", "interview"};
inline constexpr std::array<std::string_view, 2> kTurnModeNames{"single_turn", "multi_turn"};
inline constexpr std::array<std::string_view, 4> kPhaseNames{"pre_interview", "mid_interview", "simulation",
                                                             "post_interview"};
inline constexpr std::array<std::string_view, 3> kInitiationNames{"assistant_proactive", "avatar_initiated",
                                                                  "scripted"};
inline constexpr std::array<std::string_view, 6> kMetricKindNames{"likert", "ranking",      "rate",
                                                                  "distribution", "trait_rating", "availability"};

inline std::string to_string(Theme v) { return std::string(kThemeNames[static_cast<std::size_t>(v)]); }
inline std::string to_string(Mode v) { return std::string(kModeNames[static_cast<std::size_t>(v)]); }
inline std::string to_string(TurnMode v) { return std::string(kTurnModeNames[static_cast<std::size_t>(v)]); }
inline std::string to_string(Phase v) { return std::string(kPhaseNames[static_cast<std::size_t>(v)]); }
inline std::string to_string(Initiation v) { return std::string(kInitiationNames[static_cast<std::size_t>(v)]); }
inline std::string to_string(MetricKind v) { return std::string(kMetricKindNames[static_cast<std::size_t>(v)]); }

// Key used in StudyConfig::interviews for an interview phase ("pre", "mid", "post").
std::optional<std::string> interview_key(Phase phase);

struct Date {
  int year = 1970;
  int month = 1;
  int day = 1;

  // Strict YYYY-MM-DD. Returns nullopt for malformed or impossible dates.
  static std::optional<Date> parse(std::string_view text);
  std::string str() const;

  auto operator<=>(const Date&) const = default;
};

struct ScenarioSpec {
  std::string scenario_id;
  std::string narrative;
  std::optional<std::string> trigger_hint;

  bool operator==(const ScenarioSpec&) const = default;
};

struct InterviewQuestion {
  std::string text;
  // Metrics whose ratings the answer must carry.
  std::vector<std::string> metric_ids;

  bool operator==(const InterviewQuestion&) const = default;
};

struct InteractionPolicy {
  TurnMode turn_mode = TurnMode::single_turn;
  int max_rounds = 1;
  int max_turns_per_round = 2;
  std::vector<Phase> phases{Phase::simulation};
  Initiation initiation = Initiation::assistant_proactive;
  // Metrics the avatar rates in every reply to an assistant turn during the
  // simulation phase (e.g. momentary availability).
  std::vector<std::string> probe_metrics;

  bool has_phase(Phase p) const;
  bool operator==(const InteractionPolicy&) const = default;
};

struct MetricSpec {
  std::string metric_id;
  MetricKind kind = MetricKind::likert;
  std::optional<int> scale_min;
  std::optional<int> scale_max;
  std::vector<std::string> categories;
  // Assistant-facing description of what the metric measures.
  std::string rubric;

  bool uses_scale() const;
  bool needs_categories() const;
  // Inclusive bounds a single rating value must fall in.
  std::pair<int, int> rating_bounds() const;
  // Rating keys an answer must provide: "id" or "id/category".
  std::vector<std::string> rating_keys() const;

  bool operator==(const MetricSpec&) const = default;
};

struct StudyConfig {
  int schema_version = kSchemaVersion;
  std::string study_id;
  std::string title;
  Theme theme = Theme::personalization;
  Mode mode = Mode::woz;
  Date publication_date;
  std::string objective;
  std::vector<std::string> research_questions;
  std::vector<ScenarioSpec> scenarios;
  std::map<std::string, std::vector<InterviewQuestion>> interviews;
  std::string assistant_role;
  std::string avatar_role;
  InteractionPolicy policy;
  std::vector<MetricSpec> metrics;

  const MetricSpec* find_metric(std::string_view id) const;
  const std::vector<InterviewQuestion>& questions(Phase phase) const;

  bool operator==(const StudyConfig&) const = default;
};

// Every invariant violation as "field: rule". Empty iff the config is valid.
std::vector<std::string> validate_config(const StudyConfig& cfg);

// Strict conversion: unknown keys and type mismatches raise SchemaError,
// and the result must pass validate_config.
StudyConfig config_from_json(const Json& doc);
Json config_to_json(const StudyConfig& cfg);

StudyConfig parse_config(std::string_view text);
StudyConfig load_config(const std::filesystem::path& path);

// Every violation in a config document as "field: rule". A structural error
// (bad JSON, unknown key, wrong type) is reported alone since nothing after it
// can be checked.
std::vector<std::string> config_violations(std::string_view text);

// Compact, key-sorted serialization; the bytes hashed into run manifests.
std::string canonical_config_bytes(const StudyConfig& cfg);

}  // namespace gidea
