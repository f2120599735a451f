#pragma once

// Avatar profiles: demographic attributes, TIPI personality scores and the
// background narrative generated from them.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gidea/provider.hpp"
#include "gidea/rng.hpp"

namespace gidea {

inline constexpr std::array<std::string_view, 5> kTraitNames{"extraversion", "agreeableness", "conscientiousness",
                                                             "emotional_stability", "openness"};
inline constexpr std::array<std::string_view, 5> kTraitLabels{"Extraversion", "Agreeableness", "Conscientiousness",
                                                              "Emotional Stability", "Openness"};
inline constexpr double kTipiMin = 1.0;
inline constexpr double kTipiMax = 7.0;
inline constexpr double kTipiStep = 0.5;

struct TipiScores {
  // Indexed like kTraitNames.
  std::array<double, 5> values{4, 4, 4, 4, 4};

  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  bool valid() const;
  // "Extraversion: 4, Agreeableness: 6, ..."
  std::string describe() const;

  bool operator==(const TipiScores&) const = default;
};

struct AvatarProfile {
  std::string subject_id;
  int age = 0;
  std::string gender;
  std::string household_type;
  std::map<std::string, std::string> attributes;
  TipiScores tipi;
  std::string narrative;

  bool operator==(const AvatarProfile&) const = default;
};

// Shortest decimal rendering of a score: 4 -> "4", 4.5 -> "4.5".
std::string format_score(double v);

// One line per profile field, in a fixed order, narrative first when present.
std::string describe_profile(const AvatarProfile& p);

nlohmann::json profile_to_json(const AvatarProfile& p);
AvatarProfile profile_from_json(const nlohmann::json& j);
nlohmann::json profiles_to_json(const std::vector<AvatarProfile>& ps);
std::vector<AvatarProfile> profiles_from_json(const nlohmann::json& j);

// Draws one value for a profile field. JSON forms:
//   "label" or 4                         point mass
//   {"categorical": [["a", 0.3], ...]}   weighted labels (weights sum to 1)
//   {"range": [lo, hi], "step": s}       uniform over lo, lo+s, ..., <= hi
struct Sampler {
  enum class Kind { categorical, range };

  Kind kind = Kind::categorical;
  std::vector<std::pair<std::string, double>> choices;
  double lo = 0;
  double hi = 0;
  double step = 1;

  static Sampler point(std::string label);
  static Sampler uniform_range(double lo, double hi, double step);
  static Sampler from_json(const nlohmann::json& j, const std::string& path, double default_step);
  nlohmann::json to_json() const;

  std::string draw_label(SplitMix64& rng) const;
  double draw_number(SplitMix64& rng) const;
  // Every value this sampler can produce (range grid or category labels).
  std::vector<std::string> support() const;
  std::vector<std::string> violations(const std::string& path) const;
};

struct ProfileDistribution {
  Sampler age = Sampler::point("30");
  Sampler gender = Sampler::point("unspecified");
  Sampler household_type = Sampler::point("single-person household");
  std::map<std::string, Sampler> attributes;
  // Indexed like kTraitNames; omitted traits default to the full TIPI grid.
  std::array<Sampler, 5> tipi{Sampler::uniform_range(kTipiMin, kTipiMax, kTipiStep),
                              Sampler::uniform_range(kTipiMin, kTipiMax, kTipiStep),
                              Sampler::uniform_range(kTipiMin, kTipiMax, kTipiStep),
                              Sampler::uniform_range(kTipiMin, kTipiMax, kTipiStep),
                              Sampler::uniform_range(kTipiMin, kTipiMax, kTipiStep)};

  static ProfileDistribution from_json(const nlohmann::json& j);
  static ProfileDistribution load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  std::vector<std::string> violations() const;
};

// Exactly n profiles "S1".."Sn" with empty narratives; a pure function of
// (dist, n, seed). Throws DistributionError when dist is invalid.
std::vector<AvatarProfile> sample_profiles(const ProfileDistribution& dist, int n, std::uint64_t seed);

// The chat request generate_narrative sends for a profile.
ChatRequest narrative_request(const AvatarProfile& profile);

// Asks the model for a background narrative grounded in the profile.
std::string generate_narrative(const AvatarProfile& profile, const ModelHandle& model);

}  // namespace gidea
