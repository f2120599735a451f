#pragma once

// Numeric primitives behind the analyses: cosine similarity, compensated
// means, medians, Student t-tests and the behavioral-log counters.

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gidea/engine.hpp"
#include "gidea/provider.hpp"

namespace gidea {

double cosine_similarity(std::span<const double> a, std::span<const double> b);
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

// Neumaier-compensated arithmetic mean. Throws PreconditionError when empty.
double mean(std::span<const double> xs);
// Mean of the middle two on even counts. Throws PreconditionError when empty.
double median(std::vector<double> xs);
// Sample variance (n - 1 denominator) around `m`.
double sample_variance(std::span<const double> xs, double m);

// Regularized incomplete beta I_x(a, b), evaluated with the modified Lentz
// continued fraction. Relative accuracy is about 1e-14 for the arguments the
// t-tests use.
double incomplete_beta(double a, double b, double x);
// CDF of Student's t distribution with `df` degrees of freedom (df > 0).
double student_t_cdf(double t, double df);
// P(|T| >= |t|).
double two_tailed_p(double t, double df);

enum class TestKind { paired, two_sample_pooled, two_sample_welch };
enum class VarianceMode { pooled, welch };

inline constexpr std::array<std::string_view, 3> kTestKindNames{"paired", "two_sample_pooled", "two_sample_welch"};
inline constexpr std::array<std::string_view, 2> kVarianceModeNames{"pooled", "welch"};

inline std::string to_string(TestKind k) { return std::string(kTestKindNames[static_cast<std::size_t>(k)]); }
inline std::string to_string(VarianceMode m) { return std::string(kVarianceModeNames[static_cast<std::size_t>(m)]); }
std::optional<VarianceMode> variance_mode_from_name(std::string_view name);

struct TTestResult {
  double t_statistic = 0.0;
  double degrees_of_freedom = 0.0;
  double p_value = 1.0;
  TestKind kind = TestKind::paired;
  // Always "two": every test reports a two-tailed p.
  std::string tails = "two";

  nlohmann::json to_json() const;
};

// Student's paired test on xs - ys. Throws DegenerateSampleError when the
// differences have zero variance, PreconditionError on length mismatch or n < 2.
TTestResult paired_t_test(std::span<const double> xs, std::span<const double> ys);

// Pooled-variance Student test, or Welch's unequal-variance test.
// Throws DegenerateSampleError when the relevant variance is zero.
TTestResult two_sample_t_test(std::span<const double> xs, std::span<const double> ys,
                              VarianceMode mode = VarianceMode::pooled);

// One assistant turn and what the avatar did with it. An assistant turn not
// answered within its round counts as ignored.
struct Probe {
  const Turn* prompt = nullptr;
  const Turn* reply = nullptr;
  Decision outcome = Decision::ignore;
  // Hour of day (0-23) of the turn's logical time, or -1 when unknown.
  int hour = -1;
};

// Every assistant turn that opens an exchange is a probe; its outcome is the
// decision in the avatar's next turn of the same round, else ignore.
// Assistant turns after a decision in the same round are skipped.
std::vector<Probe> extract_probes(const std::vector<Turn>& turns);

struct CategoryRate {
  std::string category;
  int numerator = 0;
  int denominator = 0;

  double rate() const { return static_cast<double>(numerator) / denominator; }
};

using Categorizer = std::function<std::string(const Probe&)>;
using Bucketizer = std::function<int(const Probe&)>;

// Accept decisions over probes per category, sorted by category. Categories
// without probes do not appear.
std::vector<CategoryRate> rate_by_category(const std::vector<Turn>& turns, const Categorizer& categorize);

struct BucketCounts {
  int answered = 0;
  int unanswered = 0;
  // Mean of the availability ratings attached to replies in this bucket.
  std::optional<double> mean_availability;
  int availability_count = 0;
};

// Answered means an accept decision. When `availability_key` is given, the
// replies' ratings under that key are averaged per bucket.
std::map<int, BucketCounts> distribution_by_bucket(const std::vector<Turn>& turns, const Bucketizer& bucket,
                                                   const std::optional<std::string>& availability_key = std::nullopt);

int hour_bucket(const Probe& p);

std::map<std::string, double> median_by_category(const std::vector<std::pair<std::string, int>>& ratings);

// |rank_a - rank_b| per item, in item order. Throws PreconditionError when
// the two rankings cover different items.
std::vector<std::pair<std::string, int>> rank_compare(const std::map<std::string, int>& ranks_a,
                                                      const std::map<std::string, int>& ranks_b);

// Competition ranking by ascending score (1 = smallest): ties share a rank
// and the next distinct score skips ahead (1 2 2 4).
std::map<std::string, int> rank_by_score(const std::map<std::string, double>& scores);

// Fixed-point text with `digits` decimals, used for every CSV real.
std::string format_real(double v, int digits = 6);
// RFC 4180 CSV with a header row; fields quoted only when needed.
std::string to_csv(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows);

}  // namespace gidea
