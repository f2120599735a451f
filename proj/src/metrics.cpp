#include "gidea/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "gidea/errors.hpp"
#include "gidea/timestamp.hpp"

namespace gidea {

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("vectors differ in dimension: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw ZeroVectorError("cosine similarity of a zero vector");
  const double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, -1.0, 1.0);
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  return cosine_similarity(std::span<const double>(a.values), std::span<const double>(b.values));
}

double mean(std::span<const double> xs) {
  if (xs.empty()) throw PreconditionError("mean of an empty sample");
  double sum = 0.0;
  double comp = 0.0;
  for (double x : xs) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      comp += (sum - t) + x;
    } else {
      comp += (x - t) + sum;
    }
    sum = t;
  }
  return (sum + comp) / static_cast<double>(xs.size());
}

double median(std::vector<double> xs) {
  if (xs.empty()) throw PreconditionError("median of an empty sample");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  if (n % 2 == 1) return xs[n / 2];
  return (xs[n / 2 - 1] + xs[n / 2]) / 2.0;
}

double sample_variance(std::span<const double> xs, double m) {
  if (xs.size() < 2) throw PreconditionError("variance needs at least two values");
  std::vector<double> sq;
  sq.reserve(xs.size());
  for (double x : xs) sq.push_back((x - m) * (x - m));
  return mean(sq) * static_cast<double>(xs.size()) / static_cast<double>(xs.size() - 1);
}

namespace {

double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw PreconditionError("incomplete beta continued fraction did not converge");
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw PreconditionError("incomplete beta needs a, b > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw PreconditionError("incomplete beta needs x in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double two_tailed_p(double t, double df) {
  if (!(df > 0.0)) throw PreconditionError("degrees of freedom must be positive");
  if (std::isinf(t)) return 0.0;
  const double p = incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
  return std::clamp(p, 0.0, 1.0);
}

double student_t_cdf(double t, double df) {
  const double tail = two_tailed_p(t, df) / 2.0;
  return t >= 0.0 ? 1.0 - tail : tail;
}

std::optional<VarianceMode> variance_mode_from_name(std::string_view name) {
  return detail::enum_from_name<VarianceMode>(name, kVarianceModeNames);
}

nlohmann::json TTestResult::to_json() const {
  return {{"t_statistic", t_statistic},
          {"degrees_of_freedom", degrees_of_freedom},
          {"p_value", p_value},
          {"kind", to_string(kind)},
          {"tails", tails}};
}

TTestResult paired_t_test(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw PreconditionError("paired samples differ in length");
  if (xs.size() < 2) throw PreconditionError("paired t-test needs at least two pairs");
  std::vector<double> diff;
  diff.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) diff.push_back(xs[i] - ys[i]);
  const double m = mean(diff);
  const double var = sample_variance(diff, m);
  if (!(var > 0.0)) throw DegenerateSampleError("differences have zero variance");
  const double n = static_cast<double>(diff.size());
  TTestResult r;
  r.kind = TestKind::paired;
  r.t_statistic = m / std::sqrt(var / n);
  r.degrees_of_freedom = n - 1.0;
  r.p_value = two_tailed_p(r.t_statistic, r.degrees_of_freedom);
  return r;
}

TTestResult two_sample_t_test(std::span<const double> xs, std::span<const double> ys, VarianceMode mode) {
  if (xs.size() < 2 || ys.size() < 2) throw PreconditionError("two-sample t-test needs at least two values per group");
  const double n1 = static_cast<double>(xs.size());
  const double n2 = static_cast<double>(ys.size());
  const double m1 = mean(xs);
  const double m2 = mean(ys);
  const double v1 = sample_variance(xs, m1);
  const double v2 = sample_variance(ys, m2);
  TTestResult r;
  if (mode == VarianceMode::pooled) {
    const double pooled = ((n1 - 1.0) * v1 + (n2 - 1.0) * v2) / (n1 + n2 - 2.0);
    if (!(pooled > 0.0)) throw DegenerateSampleError("pooled variance is zero");
    r.kind = TestKind::two_sample_pooled;
    r.t_statistic = (m1 - m2) / std::sqrt(pooled * (1.0 / n1 + 1.0 / n2));
    r.degrees_of_freedom = n1 + n2 - 2.0;
  } else {
    const double s1 = v1 / n1;
    const double s2 = v2 / n2;
    if (!(s1 + s2 > 0.0)) throw DegenerateSampleError("both groups have zero variance");
    r.kind = TestKind::two_sample_welch;
    r.t_statistic = (m1 - m2) / std::sqrt(s1 + s2);
    r.degrees_of_freedom = (s1 + s2) * (s1 + s2) / (s1 * s1 / (n1 - 1.0) + s2 * s2 / (n2 - 1.0));
  }
  r.p_value = two_tailed_p(r.t_statistic, r.degrees_of_freedom);
  return r;
}

std::vector<Probe> extract_probes(const std::vector<Turn>& turns) {
  std::vector<Probe> out;
  int decided_round = 0;
  for (std::size_t i = 0; i < turns.size(); ++i) {
    if (turns[i].speaker == Speaker::avatar && turns[i].decision != Decision::none) decided_round = turns[i].round;
    // Assistant follow-ups after the avatar has decided are not new probes.
    if (turns[i].speaker != Speaker::assistant || turns[i].round == decided_round) continue;
    Probe p;
    p.prompt = &turns[i];
    if (i + 1 < turns.size() && turns[i + 1].speaker == Speaker::avatar && turns[i + 1].round == turns[i].round &&
        turns[i + 1].decision != Decision::none) {
      p.reply = &turns[i + 1];
      p.outcome = turns[i + 1].decision;
    }
    if (auto ts = Timestamp::parse(turns[i].at)) {
      const std::int64_t day = 86400;
      p.hour = static_cast<int>(((ts->seconds % day) + day) % day / 3600);
    }
    out.push_back(p);
  }
  return out;
}

std::vector<CategoryRate> rate_by_category(const std::vector<Turn>& turns, const Categorizer& categorize) {
  std::map<std::string, CategoryRate> acc;
  for (const auto& p : extract_probes(turns)) {
    const std::string c = categorize(p);
    auto& r = acc[c];
    r.category = c;
    ++r.denominator;
    if (p.outcome == Decision::accept) ++r.numerator;
  }
  std::vector<CategoryRate> out;
  for (auto& [_, r] : acc) out.push_back(r);
  return out;
}

int hour_bucket(const Probe& p) { return p.hour; }

std::map<int, BucketCounts> distribution_by_bucket(const std::vector<Turn>& turns, const Bucketizer& bucket,
                                                   const std::optional<std::string>& availability_key) {
  std::map<int, BucketCounts> out;
  std::map<int, std::vector<double>> availability;
  for (const auto& p : extract_probes(turns)) {
    const int b = bucket(p);
    auto& c = out[b];
    if (p.outcome == Decision::accept) {
      ++c.answered;
    } else {
      ++c.unanswered;
    }
    if (availability_key && p.reply) {
      auto it = p.reply->ratings.find(*availability_key);
      if (it != p.reply->ratings.end()) availability[b].push_back(it->second);
    }
  }
  for (auto& [b, values] : availability) {
    out[b].mean_availability = mean(values);
    out[b].availability_count = static_cast<int>(values.size());
  }
  return out;
}

std::map<std::string, double> median_by_category(const std::vector<std::pair<std::string, int>>& ratings) {
  std::map<std::string, std::vector<double>> groups;
  for (const auto& [c, v] : ratings) groups[c].push_back(v);
  std::map<std::string, double> out;
  for (auto& [c, values] : groups) out[c] = median(std::move(values));
  return out;
}

std::vector<std::pair<std::string, int>> rank_compare(const std::map<std::string, int>& ranks_a,
                                                      const std::map<std::string, int>& ranks_b) {
  if (ranks_a.size() != ranks_b.size()) throw PreconditionError("rankings cover different items");
  std::vector<std::pair<std::string, int>> out;
  for (const auto& [item, ra] : ranks_a) {
    auto it = ranks_b.find(item);
    if (it == ranks_b.end()) throw PreconditionError("item '" + item + "' is missing from the second ranking");
    out.emplace_back(item, std::abs(ra - it->second));
  }
  return out;
}

std::map<std::string, int> rank_by_score(const std::map<std::string, double>& scores) {
  std::map<std::string, int> out;
  for (const auto& [item, s] : scores) {
    int rank = 1;
    for (const auto& [_, other] : scores) {
      if (other < s) ++rank;
    }
    out[item] = rank;
  }
  return out;
}

std::string format_real(double v, int digits) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  std::string s = buf;
  if (s.rfind("-0.", 0) == 0 && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

namespace {

std::string csv_field(const std::string& f) {
  if (f.find_first_of(",\"\r\n") == std::string::npos) return f;
  std::string out = "\"";
  for (char c : f) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void csv_row(std::string& out, const std::vector<std::string>& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out += ',';
    out += csv_field(row[i]);
  }
  out += '\n';
}

}  // namespace

std::string to_csv(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::string out;
  csv_row(out, header);
  for (const auto& r : rows) csv_row(out, r);
  return out;
}

}  // namespace gidea
