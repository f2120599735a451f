#include "gidea/config.hpp"

#include <algorithm>
#include <chrono>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "gidea/errors.hpp"
#include "json_fields.hpp"

namespace gidea {

using detail::FieldReader;

std::optional<std::string> interview_key(Phase phase) {
  switch (phase) {
    case Phase::pre_interview:
      return "pre";
    case Phase::mid_interview:
      return "mid";
    case Phase::post_interview:
      return "post";
    case Phase::simulation:
      break;
  }
  return std::nullopt;
}

std::optional<Date> Date::parse(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  auto field = [&](std::size_t pos, std::size_t len, int& out) {
    for (std::size_t i = pos; i < pos + len; ++i) {
      if (text[i] < '0' || text[i] > '9') return false;
    }
    return std::from_chars(text.data() + pos, text.data() + pos + len, out).ec == std::errc{};
  };
  Date d;
  if (!field(0, 4, d.year) || !field(5, 2, d.month) || !field(8, 2, d.day)) return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year{d.year}, std::chrono::month{static_cast<unsigned>(d.month)},
                                        std::chrono::day{static_cast<unsigned>(d.day)}};
  if (!ymd.ok()) return std::nullopt;
  return d;
}

std::string Date::str() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", year, month, day);
  return buf;
}

bool InteractionPolicy::has_phase(Phase p) const { return std::find(phases.begin(), phases.end(), p) != phases.end(); }

bool MetricSpec::uses_scale() const {
  return kind == MetricKind::likert || kind == MetricKind::trait_rating || kind == MetricKind::availability;
}

bool MetricSpec::needs_categories() const {
  return kind == MetricKind::rate || kind == MetricKind::distribution || kind == MetricKind::ranking;
}

std::pair<int, int> MetricSpec::rating_bounds() const {
  if (kind == MetricKind::ranking) return {1, static_cast<int>(categories.size())};
  return {scale_min.value_or(0), scale_max.value_or(0)};
}

std::vector<std::string> MetricSpec::rating_keys() const {
  if (categories.empty()) return {metric_id};
  std::vector<std::string> keys;
  keys.reserve(categories.size());
  for (const auto& c : categories) keys.push_back(metric_id + "/" + c);
  return keys;
}

const MetricSpec* StudyConfig::find_metric(std::string_view id) const {
  for (const auto& m : metrics) {
    if (m.metric_id == id) return &m;
  }
  return nullptr;
}

const std::vector<InterviewQuestion>& StudyConfig::questions(Phase phase) const {
  static const std::vector<InterviewQuestion> kNone;
  auto key = interview_key(phase);
  if (!key) return kNone;
  auto it = interviews.find(*key);
  return it == interviews.end() ? kNone : it->second;
}

std::vector<std::string> validate_config(const StudyConfig& cfg) {
  std::vector<std::string> out;
  auto violation = [&](const std::string& field, const std::string& rule) { out.push_back(field + ": " + rule); };

  if (cfg.schema_version != kSchemaVersion) {
    violation("schema_version", "unsupported version " + std::to_string(cfg.schema_version));
  }
  if (cfg.study_id.empty()) violation("study_id", "must be non-empty");
  if (!Date::parse(cfg.publication_date.str())) violation("publication_date", "not a valid calendar date");

  if (cfg.research_questions.empty()) violation("research_questions", "must contain at least one question");
  for (std::size_t i = 0; i < cfg.research_questions.size(); ++i) {
    if (cfg.research_questions[i].empty()) {
      violation("research_questions[" + std::to_string(i) + "]", "must be non-empty");
    }
  }

  std::set<std::string> scenario_ids;
  for (std::size_t i = 0; i < cfg.scenarios.size(); ++i) {
    const auto& s = cfg.scenarios[i];
    const std::string path = "scenarios[" + std::to_string(i) + "]";
    if (s.narrative.empty()) violation(path + ".narrative", "must be non-empty");
    if (!scenario_ids.insert(s.scenario_id).second) violation(path + ".scenario_id", "duplicate id " + s.scenario_id);
  }

  for (const auto& [key, list] : cfg.interviews) {
    if (key != "pre" && key != "mid" && key != "post") violation("interviews." + key, "unknown interview phase");
  }

  const auto& p = cfg.policy;
  if (p.max_rounds < 1) violation("policy.max_rounds", "must be >= 1");
  if (p.max_turns_per_round < 1) violation("policy.max_turns_per_round", "must be >= 1");
  const auto sim_count = std::count(p.phases.begin(), p.phases.end(), Phase::simulation);
  if (sim_count != 1) violation("policy.phases", "simulation phase must appear exactly once");
  std::set<Phase> seen_phases;
  for (Phase ph : p.phases) {
    if (ph != Phase::simulation && !seen_phases.insert(ph).second) {
      violation("policy.phases", "duplicate phase " + to_string(ph));
    }
  }
  for (Phase ph : seen_phases) {
    auto key = interview_key(ph);
    if (key && cfg.questions(ph).empty()) {
      violation("interviews." + *key, "phase " + to_string(ph) + " is listed in policy.phases but has no questions");
    }
  }
  if (p.initiation == Initiation::scripted && cfg.scenarios.empty()) {
    violation("policy.initiation", "scripted initiation requires at least one scenario");
  }

  std::set<std::string> metric_ids;
  for (std::size_t i = 0; i < cfg.metrics.size(); ++i) {
    const auto& m = cfg.metrics[i];
    const std::string path = "metrics[" + std::to_string(i) + "]";
    if (m.metric_id.empty()) violation(path + ".metric_id", "must be non-empty");
    if (!metric_ids.insert(m.metric_id).second) violation(path + ".metric_id", "duplicate id " + m.metric_id);
    if (m.uses_scale()) {
      if (!m.scale_min || !m.scale_max) {
        violation(path + ".scale_min", "scale bounds required for " + to_string(m.kind));
      } else if (*m.scale_min >= *m.scale_max) {
        violation(path + ".scale_min", "scale_min must be < scale_max");
      }
    }
    if (m.needs_categories() && m.categories.empty()) {
      violation(path + ".categories", "must be non-empty for " + to_string(m.kind));
    }
  }

  for (std::size_t i = 0; i < p.probe_metrics.size(); ++i) {
    const std::string& id = p.probe_metrics[i];
    const MetricSpec* m = cfg.find_metric(id);
    const std::string path = "policy.probe_metrics[" + std::to_string(i) + "]";
    if (!m) {
      violation(path, "unknown metric " + id);
    } else if (m->kind == MetricKind::rate || m->kind == MetricKind::distribution) {
      violation(path, "metric " + id + " is computed from logs, not rated");
    }
  }

  for (const auto& [key, list] : cfg.interviews) {
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string path = "interviews." + key + "[" + std::to_string(i) + "]";
      if (list[i].text.empty()) violation(path, "question text must be non-empty");
      for (const auto& id : list[i].metric_ids) {
        const MetricSpec* m = cfg.find_metric(id);
        if (!m) {
          violation(path + ".metrics", "unknown metric " + id);
        } else if (m->kind == MetricKind::rate || m->kind == MetricKind::distribution) {
          violation(path + ".metrics", "metric " + id + " is computed from logs, not rated");
        }
      }
    }
  }
  return out;
}

namespace {

template <typename E, std::size_t N>
E enum_field(FieldReader& r, const std::string& key, const std::array<std::string_view, N>& names) {
  const std::string s = r.string(key);
  auto v = detail::enum_from_name<E>(s, names);
  if (!v) throw SchemaError(r.child(key), "invalid value '" + s + "'");
  return *v;
}

std::optional<int> optional_int(FieldReader& r, const std::string& key) {
  const auto* v = r.optional(key);
  if (!v) return std::nullopt;
  return static_cast<int>(FieldReader::as_integer(*v, r.child(key)));
}

InterviewQuestion question_from_json(const Json& j, const std::string& path) {
  if (j.is_string()) return {j.get<std::string>(), {}};
  FieldReader r(j, path);
  InterviewQuestion q;
  q.text = r.string("text");
  if (r.has("metrics")) q.metric_ids = r.strings("metrics");
  r.finish();
  return q;
}

}  // namespace

namespace {

StudyConfig config_structure_from_json(const Json& doc) {
  FieldReader r(doc, "");
  StudyConfig c;
  c.schema_version = static_cast<int>(r.integer("schema_version"));
  if (c.schema_version != kSchemaVersion) {
    throw SchemaError("schema_version", "unsupported version " + std::to_string(c.schema_version));
  }
  c.study_id = r.string("study_id");
  c.title = r.string_or("title", "");
  c.theme = enum_field<Theme>(r, "theme", kThemeNames);
  c.mode = enum_field<Mode>(r, "mode", kModeNames);
  {
    const std::string s = r.string("publication_date");
    auto d = Date::parse(s);
    if (!d) throw SchemaError("publication_date", "not a valid YYYY-MM-DD date: '" + s + "'");
    c.publication_date = *d;
  }
  c.objective = r.string("objective");
  c.research_questions = r.strings("research_questions");

  if (const auto* sc = r.optional("scenarios")) {
    if (!sc->is_array()) throw SchemaError("scenarios", "expected an array");
    for (std::size_t i = 0; i < sc->size(); ++i) {
      FieldReader s((*sc)[i], "scenarios[" + std::to_string(i) + "]");
      ScenarioSpec spec;
      spec.scenario_id = s.string("scenario_id");
      spec.narrative = s.string("narrative");
      if (const auto* t = s.optional("trigger_hint")) spec.trigger_hint = FieldReader::as_string(*t, s.child("trigger_hint"));
      s.finish();
      c.scenarios.push_back(std::move(spec));
    }
  }

  if (const auto* iv = r.optional("interviews")) {
    if (!iv->is_object()) throw SchemaError("interviews", "expected an object");
    for (auto it = iv->begin(); it != iv->end(); ++it) {
      const std::string path = "interviews." + it.key();
      if (it.key() != "pre" && it.key() != "mid" && it.key() != "post") {
        throw SchemaError(path, "unknown interview phase (expected pre, mid or post)");
      }
      if (!it->is_array()) throw SchemaError(path, "expected an array of questions");
      std::vector<InterviewQuestion> qs;
      for (std::size_t i = 0; i < it->size(); ++i) qs.push_back(question_from_json((*it)[i], path + "[" + std::to_string(i) + "]"));
      c.interviews[it.key()] = std::move(qs);
    }
  }

  c.assistant_role = r.string("assistant_role");
  c.avatar_role = r.string("avatar_role");

  {
    FieldReader p(r.required("policy"), "policy");
    c.policy.turn_mode = enum_field<TurnMode>(p, "turn_mode", kTurnModeNames);
    c.policy.max_rounds = static_cast<int>(p.integer("max_rounds"));
    c.policy.max_turns_per_round = static_cast<int>(p.integer("max_turns_per_round"));
    const auto& phases = p.required("phases");
    if (!phases.is_array()) throw SchemaError("policy.phases", "expected an array");
    c.policy.phases.clear();
    for (std::size_t i = 0; i < phases.size(); ++i) {
      const std::string path = "policy.phases[" + std::to_string(i) + "]";
      auto ph = detail::enum_from_name<Phase>(FieldReader::as_string(phases[i], path), kPhaseNames);
      if (!ph) throw SchemaError(path, "invalid phase '" + phases[i].get<std::string>() + "'");
      c.policy.phases.push_back(*ph);
    }
    c.policy.initiation = enum_field<Initiation>(p, "initiation", kInitiationNames);
    if (p.has("probe_metrics")) c.policy.probe_metrics = p.strings("probe_metrics");
    p.finish();
  }

  if (const auto* ms = r.optional("metrics")) {
    if (!ms->is_array()) throw SchemaError("metrics", "expected an array");
    for (std::size_t i = 0; i < ms->size(); ++i) {
      FieldReader m((*ms)[i], "metrics[" + std::to_string(i) + "]");
      MetricSpec spec;
      spec.metric_id = m.string("metric_id");
      spec.kind = enum_field<MetricKind>(m, "kind", kMetricKindNames);
      spec.scale_min = optional_int(m, "scale_min");
      spec.scale_max = optional_int(m, "scale_max");
      if (m.has("categories")) spec.categories = m.strings("categories");
      spec.rubric = m.string_or("rubric", "");
      m.finish();
      c.metrics.push_back(std::move(spec));
    }
  }
  r.finish();
  return c;
}

}  // namespace

StudyConfig config_from_json(const Json& doc) {
  StudyConfig c = config_structure_from_json(doc);
  auto violations = validate_config(c);
  if (!violations.empty()) {
    const auto& first = violations.front();
    const auto colon = first.find(": ");
    throw SchemaError(first.substr(0, colon), first.substr(colon + 2));
  }
  return c;
}

Json config_to_json(const StudyConfig& c) {
  Json j;
  j["schema_version"] = c.schema_version;
  j["study_id"] = c.study_id;
  j["title"] = c.title;
  j["theme"] = to_string(c.theme);
  j["mode"] = to_string(c.mode);
  j["publication_date"] = c.publication_date.str();
  j["objective"] = c.objective;
  j["research_questions"] = c.research_questions;
  j["scenarios"] = Json::array();
  for (const auto& s : c.scenarios) {
    Json sj{{"scenario_id", s.scenario_id}, {"narrative", s.narrative}};
    if (s.trigger_hint) sj["trigger_hint"] = *s.trigger_hint;
    j["scenarios"].push_back(std::move(sj));
  }
  j["interviews"] = Json::object();
  for (const auto& [key, qs] : c.interviews) {
    Json arr = Json::array();
    for (const auto& q : qs) {
      if (q.metric_ids.empty()) {
        arr.push_back(q.text);
      } else {
        arr.push_back(Json{{"text", q.text}, {"metrics", q.metric_ids}});
      }
    }
    j["interviews"][key] = std::move(arr);
  }
  j["assistant_role"] = c.assistant_role;
  j["avatar_role"] = c.avatar_role;
  Json phases = Json::array();
  for (Phase p : c.policy.phases) phases.push_back(to_string(p));
  j["policy"] = Json{{"turn_mode", to_string(c.policy.turn_mode)},
                     {"max_rounds", c.policy.max_rounds},
                     {"max_turns_per_round", c.policy.max_turns_per_round},
                     {"phases", phases},
                     {"initiation", to_string(c.policy.initiation)}};
  if (!c.policy.probe_metrics.empty()) j["policy"]["probe_metrics"] = c.policy.probe_metrics;
  j["metrics"] = Json::array();
  for (const auto& m : c.metrics) {
    Json mj{{"metric_id", m.metric_id}, {"kind", to_string(m.kind)}};
    if (m.scale_min) mj["scale_min"] = *m.scale_min;
    if (m.scale_max) mj["scale_max"] = *m.scale_max;
    if (!m.categories.empty()) mj["categories"] = m.categories;
    if (!m.rubric.empty()) mj["rubric"] = m.rubric;
    j["metrics"].push_back(std::move(mj));
  }
  return j;
}

StudyConfig parse_config(std::string_view text) {
  Json doc;
  try {
    doc = Json::parse(text.begin(), text.end());
  } catch (const Json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
  return config_from_json(doc);
}

std::vector<std::string> config_violations(std::string_view text) {
  Json doc;
  try {
    doc = Json::parse(text.begin(), text.end());
  } catch (const Json::parse_error& e) {
    return {std::string("json: malformed JSON: ") + e.what()};
  }
  try {
    return validate_config(config_structure_from_json(doc));
  } catch (const SchemaError& e) {
    return {e.what()};
  }
}

StudyConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string canonical_config_bytes(const StudyConfig& cfg) { return config_to_json(cfg).dump(); }

}  // namespace gidea
