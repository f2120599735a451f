#include "gidea/leakage.hpp"

#include <algorithm>
#include <cctype>

#include "gidea/errors.hpp"
#include "gidea/evalpipe.hpp"
#include "gidea/trace.hpp"

namespace gidea {

namespace {

// Accepts YYYY-MM (read as the first of the month) or YYYY-MM-DD.
std::optional<Date> parse_month_or_date(const std::string& s) {
  if (auto d = Date::parse(s)) return d;
  return Date::parse(s + "-01");
}

bool same_or_earlier_month(const Date& d, const Date& cutoff) {
  return d.year < cutoff.year || (d.year == cutoff.year && d.month <= cutoff.month);
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

}  // namespace

std::vector<CutoffInfo> parse_cutoffs(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("models") || !doc["models"].is_array()) {
    throw SchemaError("models", "expected an object with a \"models\" array");
  }
  std::vector<CutoffInfo> out;
  for (const auto& m : doc["models"]) {
    if (!m.is_object() || !m.contains("model_id") || !m["model_id"].is_string() || !m.contains("knowledge_cutoff") ||
        !m["knowledge_cutoff"].is_string()) {
      throw SchemaError("models[]", "each model needs string model_id and knowledge_cutoff");
    }
    const auto date = parse_month_or_date(m["knowledge_cutoff"].get<std::string>());
    if (!date) throw SchemaError("models[].knowledge_cutoff", "not a YYYY-MM or YYYY-MM-DD date");
    out.push_back({m["model_id"].get<std::string>(), *date});
  }
  return out;
}

std::vector<CutoffInfo> load_cutoffs(const std::filesystem::path& path) {
  try {
    return parse_cutoffs(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

const CutoffInfo& find_cutoff(const std::vector<CutoffInfo>& cutoffs, const std::string& model_id) {
  for (const auto& c : cutoffs) {
    if (c.model_id == model_id) return c;
  }
  throw PreconditionError("no knowledge cutoff recorded for model '" + model_id + "'");
}

TemporalSplit temporal_split(const std::vector<std::pair<std::string, Date>>& studies, const Date& cutoff) {
  TemporalSplit s;
  for (const auto& [id, date] : studies) {
    (same_or_earlier_month(date, cutoff) ? s.exposed : s.controlled).push_back(id);
  }
  return s;
}

nlohmann::json LeakageReport::to_json() const {
  nlohmann::json flags = nlohmann::json::array();
  for (const auto& [id, score] : verbatim_flags) flags.push_back({{"study_id", id}, {"score", score}});
  return {{"model_id", model_id},
          {"method", to_string(method)},
          {"exposed_mean", exposed_mean},
          {"controlled_mean", controlled_mean},
          {"t_test", t_test.to_json()},
          {"verbatim_threshold", threshold},
          {"verbatim_flags", flags},
          {"exposed", split.exposed},
          {"controlled", split.controlled}};
}

namespace {

std::vector<double> gather(const std::map<std::string, std::vector<double>>& scores,
                           const std::vector<std::string>& ids) {
  std::vector<double> out;
  for (const auto& id : ids) {
    auto it = scores.find(id);
    if (it == scores.end()) throw PreconditionError("no scores for study " + id);
    out.insert(out.end(), it->second.begin(), it->second.end());
  }
  return out;
}

}  // namespace

LeakageReport method1_test(const std::string& model_id, const std::map<std::string, std::vector<double>>& scores,
                           const TemporalSplit& split, VarianceMode variance) {
  const auto exposed = gather(scores, split.exposed);
  const auto controlled = gather(scores, split.controlled);
  if (exposed.size() < 2 || controlled.size() < 2) {
    throw PreconditionError("each group needs at least two scores (exposed " + std::to_string(exposed.size()) +
                            ", controlled " + std::to_string(controlled.size()) + ")");
  }
  LeakageReport r;
  r.model_id = model_id;
  r.method = LeakageMethod::temporal;
  r.split = split;
  r.exposed_mean = mean(exposed);
  r.controlled_mean = mean(controlled);
  r.t_test = two_sample_t_test(exposed, controlled, variance);
  return r;
}

LeakageReport method2_test(const std::string& model_id, const std::map<std::string, double>& scores,
                           const TemporalSplit& split, VarianceMode variance) {
  std::map<std::string, std::vector<double>> lists;
  for (const auto& [id, s] : scores) lists[id] = {s};
  LeakageReport r = method1_test(model_id, lists, split, variance);
  r.method = LeakageMethod::continuation;
  for (const auto& [id, s] : scores) {
    if (s > kVerbatimThreshold) r.verbatim_flags.emplace_back(id, s);
  }
  return r;
}

std::string strip_numerals(const std::string& text) {
  std::string out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const bool boundary = i == 0 || !is_word_char(text[i - 1]);
    const bool starts_int = is_digit(text[i]);
    const bool starts_frac = text[i] == '.' && i + 1 < n && is_digit(text[i + 1]) && (i == 0 || !is_digit(text[i - 1]));
    if (!boundary || !(starts_int || starts_frac)) {
      out += text[i++];
      continue;
    }
    std::size_t j = i;
    if (starts_int) {
      while (j < n && is_digit(text[j])) ++j;
      // Thousands groups: ",ddd" not followed by another digit.
      while (j + 3 < n && text[j] == ',' && is_digit(text[j + 1]) && is_digit(text[j + 2]) && is_digit(text[j + 3]) &&
             (j + 4 >= n || !is_digit(text[j + 4]))) {
        j += 4;
      }
    }
    if (j + 1 < n && text[j] == '.' && is_digit(text[j + 1])) {
      ++j;
      while (j < n && is_digit(text[j])) ++j;
    }
    if (j < n && is_word_char(text[j])) {
      // Part of a token such as "3rd" or "2x": leave it alone.
      out.append(text, i, j - i);
    } else {
      out += "[n]";
    }
    i = j;
  }
  return out;
}

ChatRequest continuation_request(const std::string& excerpt, const std::string& tag) {
  std::string prompt = kContinuationTemplate;
  const std::string slot = "[Study Data Excerpt]";
  prompt.replace(prompt.find(slot), slot.size(), excerpt);
  ChatRequest req;
  req.temperature = kSimulationTemperature;
  req.request_tag = tag;
  req.messages = {{ChatRole::system, kContinuationSystem}, {ChatRole::user, prompt}};
  return req;
}

std::vector<std::string> continuation_probe(const std::string& excerpt, const ModelHandle& model, int runs,
                                            const std::string& tag) {
  if (excerpt.find_first_not_of(" \t\r\n") == std::string::npos) throw PreconditionError("excerpt is empty");
  if (runs < 1) throw PreconditionError("continuation probe needs at least one run");
  std::vector<std::string> out;
  for (int r = 1; r <= runs; ++r) {
    out.push_back(model.call(continuation_request(excerpt, tag + "/run" + std::to_string(r))).text);
  }
  return out;
}

Method2Score method2_score(const std::vector<std::string>& continuations, const std::string& original_findings,
                           Embedder& embedder, const RetryPolicy& retry, const Sleeper& sleep) {
  if (continuations.empty()) throw PreconditionError("method 2 needs at least one continuation");
  std::vector<std::string> texts{original_findings};
  texts.insert(texts.end(), continuations.begin(), continuations.end());
  const auto vecs = embed(embedder, texts, retry, sleep);
  Method2Score s;
  for (std::size_t i = 1; i < vecs.size(); ++i) s.per_run.push_back(cosine_similarity(vecs[0], vecs[i]));
  s.average = mean(s.per_run);
  s.verbatim = *std::max_element(s.per_run.begin(), s.per_run.end()) > kVerbatimThreshold;
  return s;
}

std::string leakage_csv(const LeakageReport& report, const std::map<std::string, double>& study_scores) {
  std::vector<std::vector<std::string>> rows;
  auto add = [&](const std::vector<std::string>& ids, const char* group) {
    for (const auto& id : ids) {
      auto it = study_scores.find(id);
      rows.push_back({id, group, it == study_scores.end() ? "" : format_real(it->second, 4)});
    }
  };
  add(report.split.exposed, "exposed");
  add(report.split.controlled, "controlled");
  rows.push_back({"exposed_mean", "", format_real(report.exposed_mean, 4)});
  rows.push_back({"controlled_mean", "", format_real(report.controlled_mean, 4)});
  rows.push_back({"p_value", to_string(report.t_test.kind), format_real(report.t_test.p_value, 4)});
  return to_csv({"study_id", "group", "score"}, rows);
}

}  // namespace gidea
