#include "gidea/analysis.hpp"

#include <algorithm>
#include <cstdio>

#include "gidea/errors.hpp"
#include "gidea/metrics.hpp"

namespace gidea {

namespace fs = std::filesystem;

namespace {

struct RatingRecord {
  std::string subject;
  // "pre", "mid", "post" or "simulation".
  std::string phase;
  std::string category;
  int value = 0;
};

std::string lower(std::string s) {
  for (auto& c : s) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return s;
}

// Empty when `key` is not a rating of `metric`, else the category ("" for
// uncategorized metrics).
std::optional<std::string> rating_category(const MetricSpec& metric, const std::string& key) {
  if (key == metric.metric_id) return std::string();
  if (key.rfind(metric.metric_id + "/", 0) == 0) return key.substr(metric.metric_id.size() + 1);
  return std::nullopt;
}

std::vector<RatingRecord> rating_records(const LoadedRun& run, const MetricSpec& metric,
                                         const std::map<std::string, std::vector<Turn>>& transcripts) {
  std::vector<RatingRecord> out;
  for (const auto& [subject, _] : run.manifest.subjects) {
    auto iv = run.interviews.find(subject);
    if (iv != run.interviews.end()) {
      for (const char* phase : {"pre", "mid", "post"}) {
        if (!iv->second.contains(phase)) continue;
        for (const auto& answer : iv->second[phase]) {
          if (!answer.contains("ratings")) continue;
          for (const auto& [key, v] : answer["ratings"].items()) {
            if (auto c = rating_category(metric, key)) out.push_back({subject, phase, *c, v.get<int>()});
          }
        }
      }
    }
    auto tr = transcripts.find(subject);
    if (tr == transcripts.end()) continue;
    for (const auto& t : tr->second) {
      if (t.speaker != Speaker::avatar) continue;
      for (const auto& [key, v] : t.ratings) {
        if (auto c = rating_category(metric, key)) out.push_back({subject, "simulation", *c, v});
      }
    }
  }
  return out;
}

fs::path write_analysis(const LoadedRun& run, const std::string& name, const std::string& bytes) {
  const fs::path p = run.dir / "analysis" / name;
  write_file_durable(p, bytes);
  return p;
}

std::string category_label(const std::string& c) { return c.empty() ? "all" : c; }

void scale_metric(const LoadedRun& run, const MetricSpec& metric, const std::vector<RatingRecord>& records,
                  AnalysisOutput& out) {
  std::map<std::string, std::vector<double>> groups;
  for (const auto& r : records) groups[r.category].push_back(r.value);
  std::vector<std::vector<std::string>> rows;
  for (const auto& [c, values] : groups) {
    rows.push_back({category_label(c), std::to_string(values.size()), format_real(mean(values), 4),
                    format_real(median(values), 1)});
  }
  out.files.push_back(write_analysis(run, "metric_" + metric.metric_id + ".csv",
                                     to_csv({"category", "n", "mean", "median"}, rows)));
  out.digest.push_back("metric " + metric.metric_id + ": " + std::to_string(records.size()) + " ratings in " +
                       std::to_string(groups.size()) + " categories");

  // Pre/post comparison for subjects rated in both interviews.
  std::map<std::string, std::map<std::string, std::map<std::string, double>>> by_phase;
  for (const auto& r : records) {
    if (r.phase == "pre" || r.phase == "post") by_phase[r.category][r.subject][r.phase] = r.value;
  }
  std::vector<std::vector<std::string>> test_rows;
  for (const auto& [c, subjects] : by_phase) {
    std::vector<double> pre;
    std::vector<double> post;
    for (const auto& [_, phases] : subjects) {
      if (phases.count("pre") && phases.count("post")) {
        pre.push_back(phases.at("pre"));
        post.push_back(phases.at("post"));
      }
    }
    if (pre.size() < 2) continue;
    try {
      const auto t = paired_t_test(post, pre);
      test_rows.push_back({category_label(c), std::to_string(pre.size()), format_real(t.t_statistic, 4),
                           format_real(t.degrees_of_freedom, 0), format_real(t.p_value, 4)});
    } catch (const DegenerateSampleError&) {
      test_rows.push_back({category_label(c), std::to_string(pre.size()), "", "", "degenerate"});
    }
  }
  if (!test_rows.empty()) {
    out.files.push_back(write_analysis(run, "metric_" + metric.metric_id + "_prepost.csv",
                                       to_csv({"category", "n", "t", "df", "p"}, test_rows)));
  }
}

void ranking_metric(const LoadedRun& run, const MetricSpec& metric, const std::vector<RatingRecord>& records,
                    const AnalysisOptions& options, AnalysisOutput& out) {
  std::map<std::string, std::vector<double>> groups;
  for (const auto& r : records) {
    if (!r.category.empty()) groups[r.category].push_back(r.value);
  }
  std::map<std::string, double> mean_rank;
  for (const auto& [c, v] : groups) mean_rank[c] = mean(v);
  const auto ranks = rank_by_score(mean_rank);
  std::vector<std::string> header{"item", "mean_rank", "rank"};
  std::vector<std::vector<std::string>> rows;
  auto orig = options.original_ranks.find(metric.metric_id);
  std::map<std::string, int> deltas;
  if (orig != options.original_ranks.end() && !ranks.empty()) {
    header.insert(header.end(), {"original_rank", "delta_rank"});
    for (const auto& [item, d] : rank_compare(ranks, orig->second)) deltas[item] = d;
  }
  int moved = 0;
  for (const auto& [item, r] : ranks) {
    std::vector<std::string> row{item, format_real(mean_rank[item], 4), std::to_string(r)};
    if (!deltas.empty()) {
      row.push_back(std::to_string(orig->second.at(item)));
      row.push_back(std::to_string(deltas[item]));
      if (deltas[item] >= 2) ++moved;
    }
    rows.push_back(std::move(row));
  }
  out.files.push_back(write_analysis(run, "metric_" + metric.metric_id + ".csv", to_csv(header, rows)));
  std::string line = "metric " + metric.metric_id + ": " + std::to_string(ranks.size()) + " ranked items";
  if (!deltas.empty()) line += ", " + std::to_string(moved) + " differ by 2 or more from the original";
  out.digest.push_back(line);
}

void rate_metric(const LoadedRun& run, const MetricSpec& metric,
                 const std::map<std::string, std::vector<Turn>>& transcripts, AnalysisOutput& out) {
  std::vector<Turn> all;
  for (const auto& [_, turns] : transcripts) all.insert(all.end(), turns.begin(), turns.end());
  const auto rates = rate_by_category(all, [&](const Probe& p) { return activity_category(p, metric.categories); });
  std::vector<std::vector<std::string>> rows;
  int num = 0;
  int den = 0;
  for (const auto& r : rates) {
    rows.push_back({r.category, std::to_string(r.numerator), std::to_string(r.denominator), format_real(r.rate(), 4)});
    num += r.numerator;
    den += r.denominator;
  }
  out.files.push_back(write_analysis(run, "metric_" + metric.metric_id + ".csv",
                                     to_csv({"category", "accepted", "probes", "rate"}, rows)));
  out.digest.push_back("metric " + metric.metric_id + ": " + std::to_string(num) + "/" + std::to_string(den) +
                       " probes accepted" + (den ? " (" + format_real(static_cast<double>(num) / den, 2) + ")" : ""));
}

void distribution_metric(const LoadedRun& run, const MetricSpec& metric,
                         const std::map<std::string, std::vector<Turn>>& transcripts, AnalysisOutput& out) {
  std::optional<std::string> availability_key;
  for (const auto& id : run.config.policy.probe_metrics) {
    const MetricSpec* m = run.config.find_metric(id);
    if (m && m->kind == MetricKind::availability && m->categories.empty()) {
      availability_key = id;
      break;
    }
  }
  std::vector<Turn> all;
  for (const auto& [_, turns] : transcripts) all.insert(all.end(), turns.begin(), turns.end());
  const auto buckets = distribution_by_bucket(all, hour_bucket, availability_key);
  std::vector<std::vector<std::string>> rows;
  for (const auto& [hour, c] : buckets) {
    rows.push_back({hour < 0 ? "unknown" : std::to_string(hour), std::to_string(c.answered), std::to_string(c.unanswered),
                    c.mean_availability ? format_real(*c.mean_availability, 4) : "",
                    std::to_string(c.availability_count)});
  }
  out.files.push_back(write_analysis(
      run, "metric_" + metric.metric_id + ".csv",
      to_csv({"hour", "answered", "unanswered", "mean_availability", "availability_n"}, rows)));
  out.digest.push_back("metric " + metric.metric_id + ": " + std::to_string(buckets.size()) + " hourly buckets");
}

}  // namespace

std::map<std::string, std::map<std::string, int>> load_original_ranks(const fs::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  try {
    return doc.get<std::map<std::string, std::map<std::string, int>>>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("original_ranks", std::string("expected {metric: {item: rank}}: ") + e.what());
  }
}

std::map<std::string, std::vector<Turn>> run_transcripts(const LoadedRun& run) {
  std::map<std::string, std::vector<Turn>> out;
  for (const auto& [subject, _] : run.manifest.subjects) {
    auto& turns = out[subject];
    for (const auto& e : run.stream(subject, "transcript")) turns.push_back(Turn::from_json(e.payload));
  }
  return out;
}

std::vector<std::pair<std::string, int>> collect_ratings(const LoadedRun& run, const MetricSpec& metric) {
  std::vector<std::pair<std::string, int>> out;
  for (const auto& r : rating_records(run, metric, run_transcripts(run))) out.emplace_back(r.category, r.value);
  return out;
}

std::string activity_category(const Probe& p, const std::vector<std::string>& categories) {
  if (categories.empty()) return "all";
  const std::string activity = p.prompt ? lower(p.prompt->activity) : std::string();
  for (const auto& c : categories) {
    if (!c.empty() && activity.find(lower(c)) != std::string::npos) return c;
  }
  return "other";
}

AnalysisOutput analyze_run(const LoadedRun& run, const AnalysisOptions& options) {
  AnalysisOutput out;
  const auto transcripts = run_transcripts(run);
  int complete = 0;
  for (const auto& [_, info] : run.manifest.subjects) {
    if (info.value("status", "") == "complete") ++complete;
  }
  out.digest.push_back("run " + run.manifest.run_id + ": " + std::to_string(run.manifest.subjects.size()) +
                       " subjects, " + std::to_string(complete) + " complete");

  std::vector<Turn> all;
  for (const auto& [_, turns] : transcripts) all.insert(all.end(), turns.begin(), turns.end());
  const auto probes = extract_probes(all);
  std::map<std::string, int> outcomes;
  for (const auto& p : probes) ++outcomes[to_string(p.outcome)];
  std::vector<std::vector<std::string>> rows;
  for (const auto& [k, v] : outcomes) rows.push_back({k, std::to_string(v)});
  out.files.push_back(write_analysis(run, "decisions.csv", to_csv({"decision", "count"}, rows)));
  out.digest.push_back("probes: " + std::to_string(probes.size()) + " (accept " + std::to_string(outcomes["accept"]) +
                       ", reject " + std::to_string(outcomes["reject"]) + ", ignore " +
                       std::to_string(outcomes["ignore"]) + ")");

  for (const auto& metric : run.config.metrics) {
    switch (metric.kind) {
      case MetricKind::likert:
      case MetricKind::trait_rating:
      case MetricKind::availability:
        scale_metric(run, metric, rating_records(run, metric, transcripts), out);
        break;
      case MetricKind::ranking:
        ranking_metric(run, metric, rating_records(run, metric, transcripts), options, out);
        break;
      case MetricKind::rate:
        rate_metric(run, metric, transcripts, out);
        break;
      case MetricKind::distribution:
        distribution_metric(run, metric, transcripts, out);
        break;
    }
  }
  return out;
}

std::vector<std::string> similarity_digest(const std::vector<RQResult>& results) {
  std::vector<std::string> out;
  out.push_back("overall mean: " + format_real(aggregate(results, GroupBy::all).at("all"), 2));
  for (const auto& [k, v] : aggregate(results, GroupBy::theme)) out.push_back("theme " + k + ": " + format_real(v, 2));
  for (const auto& [k, v] : aggregate(results, GroupBy::mode)) out.push_back("mode " + k + ": " + format_real(v, 2));
  return out;
}

}  // namespace gidea
