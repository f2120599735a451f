#pragma once

// Shared helpers for the unit and acceptance suites: fixture paths, scratch
// directories, programmatic study configs and a scripted responder that
// produces well-formed model output for any request the engine makes.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gidea/config.hpp"
#include "gidea/engine.hpp"
#include "gidea/provider.hpp"
#include "gidea/scripted.hpp"
#include "gidea/timestamp.hpp"

namespace gidea::testing {

namespace fs = std::filesystem;

inline fs::path source_dir() { return fs::path(GIDEA_SOURCE_DIR); }
inline fs::path fixture(const std::string& rel) { return source_dir() / "fixtures" / rel; }

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("gidea-" + tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

// Every regular file under `root` as relative path -> bytes.
inline std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = slurp(e.path());
  }
  return out;
}

inline ModelHandle quiet_handle(ChatProvider& p) {
  ModelHandle h;
  h.provider = &p;
  h.sleep = no_sleep();
  return h;
}

// A small valid study: one scenario, pre and post interviews, a likert probe
// metric and a rated post question.
inline StudyConfig small_study() {
  StudyConfig c;
  c.study_id = "T1";
  c.title = "Test study";
  c.theme = Theme::user_control;
  c.mode = Mode::woz;
  c.publication_date = *Date::parse("2024-05-20");
  c.objective = "Check how a helper in the home is received.";
  c.research_questions = {"When should the helper speak up unprompted?", "How do residents judge its offers?"};
  c.scenarios = {{"tv", "The television is on and nobody is watching.", std::string("Shall I switch the TV off?")}};
  c.interviews["pre"] = {{"How do you control your devices today?", {}}};
  c.interviews["post"] = {{"How helpful was the assistant overall?", {"overall"}}, {"Anything else?", {}}};
  c.assistant_role = "You are a proactive home assistant in a study.";
  c.avatar_role = "You are a study participant living at home.";
  c.policy.turn_mode = TurnMode::multi_turn;
  c.policy.max_rounds = 2;
  c.policy.max_turns_per_round = 4;
  c.policy.phases = {Phase::pre_interview, Phase::simulation, Phase::post_interview};
  c.policy.initiation = Initiation::assistant_proactive;
  c.policy.probe_metrics = {"helpful"};
  MetricSpec helpful;
  helpful.metric_id = "helpful";
  helpful.kind = MetricKind::likert;
  helpful.scale_min = 1;
  helpful.scale_max = 5;
  helpful.rubric = "How useful the offer was at that moment.";
  MetricSpec overall = helpful;
  overall.metric_id = "overall";
  overall.rubric = "Overall impression after the session.";
  c.metrics = {helpful, overall};
  return c;
}

inline std::string schedule_json(const std::string& start, const std::string& end, const std::string& activity) {
  nlohmann::json j{{"Start_time", start}, {"End_time", end}, {"Activity", activity}, {"Reasoning", "routine"}};
  return j.dump();
}

// Answers every engine request with well-formed output derived from the
// request tag. Deterministic for a given seed; records every request.
class Responder : public ChatProvider {
 public:
  struct Options {
    std::uint64_t seed = 1;
    // Probability that a schedule entry starts before the previous one ends.
    double overlap_probability = 0.0;
    // Appended to each avatar reply as a NOTE line when non-empty.
    std::string avatar_note;
    std::string assistant_note;
  };

  Responder(const StudyConfig* study, Options options) : study_(study), options_(options), rng_(options.seed) {}

  ChatResponse complete(const ChatRequest& req) override {
    std::lock_guard<std::mutex> lock(mu_);
    requests_.push_back(req);
    ChatResponse r;
    r.text = answer(req.request_tag);
    return r;
  }
  const ProviderIdentity& identity() const override { return identity_; }

  const std::vector<ChatRequest>& requests() const { return requests_; }
  // Schedule entries emitted with a start before the previous emitted end.
  int overlaps_emitted() const { return overlaps_; }

 private:
  static bool has(const std::string& tag, const std::string& part) { return tag.find(part) != std::string::npos; }

  std::string ratings_for(const std::vector<std::string>& metric_ids) {
    std::string out;
    for (const auto& id : metric_ids) {
      const MetricSpec* m = study_->find_metric(id);
      if (!m) continue;
      const auto [lo, hi] = m->rating_bounds();
      for (const auto& key : m->rating_keys()) {
        std::uniform_int_distribution<int> d(lo, hi);
        out += "\nRATING[" + key + "]: " + std::to_string(d(rng_));
      }
    }
    return out;
  }

  std::string answer(const std::string& tag) {
    if (has(tag, "narrative/")) return "A resident who keeps a steady routine.";
    if (has(tag, "/schedule/")) {
      std::uniform_int_distribution<int> dur(10, 90);
      std::int64_t start = last_end_ == 0 ? Timestamp::parse(kDefaultStartTime)->seconds : last_end_ + 60 * 5;
      if (last_end_ != 0 && std::bernoulli_distribution(options_.overlap_probability)(rng_)) {
        start = last_end_ - 60 * std::uniform_int_distribution<int>(1, 30)(rng_);
        ++overlaps_;
      }
      const std::int64_t end = start + 60 * dur(rng_);
      last_end_ = std::max(last_end_, end);
      return schedule_json(Timestamp::format(start), Timestamp::format(end), "tidy the main room");
    }
    if (has(tag, "/enrich/")) {
      nlohmann::json j{{"time_stamp", Timestamp::format(last_end_ == 0 ? 0 : last_end_)},
                       {"Expanded Activity", "Moves around the room putting things away."}};
      return j.dump();
    }
    if (has(tag, "/interview/") && has(tag, "reflection")) return "The participant preferred fewer interruptions.";
    if (has(tag, "/interview/")) {
      // S1/interview/<key>/q<i>
      const auto q = tag.rfind("/q");
      const auto k0 = tag.find("/interview/") + 11;
      const std::string key = tag.substr(k0, q - k0);
      const int idx = std::stoi(tag.substr(q + 2)) - 1;
      std::vector<std::string> metrics;
      auto it = study_->interviews.find(key);
      if (it != study_->interviews.end() && idx < static_cast<int>(it->second.size())) {
        metrics = it->second[static_cast<std::size_t>(idx)].metric_ids;
      }
      return "It was fine most of the time." + ratings_for(metrics);
    }
    if (has(tag, "/assistant/")) {
      std::string text = "Would you like me to switch off the TV?";
      if (!options_.assistant_note.empty()) text += "\nNOTE: " + options_.assistant_note;
      return text;
    }
    if (has(tag, "/avatar/")) {
      // Replies to the assistant carry a decision; avatar openers do not.
      const bool opener = tag.size() >= 3 && tag.compare(tag.size() - 3, 3, "/t1") == 0 &&
                          study_->policy.initiation == Initiation::avatar_initiated;
      std::string text = "Sure, that works for me.";
      if (!opener) {
        const int d = std::uniform_int_distribution<int>(0, 2)(rng_);
        if (d == 2) return "DECISION: ignore";
        text += d == 0 ? "\nDECISION: accept" : "\nDECISION: reject";
        text += ratings_for(study_->policy.probe_metrics);
      }
      if (!options_.avatar_note.empty()) text += "\nNOTE: " + options_.avatar_note;
      if (!opener) text += "\nEND";
      return text;
    }
    return "ok";
  }

  const StudyConfig* study_;
  Options options_;
  std::mt19937_64 rng_;
  ProviderIdentity identity_ = ScriptedChatProvider::default_identity();
  std::mutex mu_;
  std::vector<ChatRequest> requests_;
  std::int64_t last_end_ = 0;
  int overlaps_ = 0;
};

}  // namespace gidea::testing
