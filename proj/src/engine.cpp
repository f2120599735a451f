#include "gidea/engine.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

#include "gidea/digest.hpp"
#include "gidea/errors.hpp"
#include "gidea/rng.hpp"

namespace gidea {

namespace fs = std::filesystem;

nlohmann::json ScheduleEntry::to_json() const {
  return {{"start_time", start_time.str()},
          {"end_time", end_time.str()},
          {"activity", activity},
          {"reasoning", reasoning}};
}

nlohmann::json EnrichedActivity::to_json() const {
  return {{"time_stamp", time_stamp.str()}, {"expanded_activity", expanded}};
}

nlohmann::json Turn::to_json() const {
  nlohmann::json acts = nlohmann::json::array();
  for (const auto& a : actions) acts.push_back(action_to_json(a));
  return {{"seq", seq},
          {"round", round},
          {"speaker", to_string(speaker)},
          {"text", text},
          {"decision", to_string(decision)},
          {"ratings", ratings},
          {"actions", acts},
          {"at", at},
          {"activity", activity}};
}

Turn Turn::from_json(const nlohmann::json& j) {
  Turn t;
  try {
    t.seq = j.at("seq").get<std::int64_t>();
    t.round = j.at("round").get<int>();
    const auto sp = detail::enum_from_name<Speaker>(j.at("speaker").get<std::string>(), kSpeakerNames);
    const auto de = detail::enum_from_name<Decision>(j.at("decision").get<std::string>(), kDecisionNames);
    if (!sp || !de) throw ParseError("turn has an invalid speaker or decision");
    t.speaker = *sp;
    t.decision = *de;
    t.text = j.at("text").get<std::string>();
    t.ratings = j.at("ratings").get<std::map<std::string, int>>();
    for (const auto& a : j.at("actions")) {
      DeviceAction act{a.at("device").get<std::string>(), a.at("action").get<std::string>(), std::nullopt};
      if (a.contains("value")) act.value = a["value"].get<std::string>();
      t.actions.push_back(std::move(act));
    }
    t.at = j.value("at", "");
    t.activity = j.value("activity", "");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed turn: ") + e.what());
  }
  return t;
}

nlohmann::json InterviewAnswer::to_json() const {
  return {{"question", question}, {"answer", answer}, {"ratings", ratings}};
}

namespace {

nlohmann::json messages_json(const std::vector<ChatMessage>& msgs) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& m : msgs) out.push_back({{"role", to_string(m.role)}, {"text", m.text}});
  return out;
}

// Runs one model call and records prompt, response and failures.
ChatResponse traced_call(const ModelHandle& model, ChatRequest req, const TraceSink& trace, const std::string& role) {
  if (model.provider && req.model_id.empty()) req.model_id = model.provider->identity().model_id;
  trace("events", EventKind::prompt,
        {{"tag", req.request_tag}, {"role", role}, {"fingerprint", req.fingerprint()}, {"messages", messages_json(req.messages)}});
  ChatResponse r;
  try {
    r = model.call(req);
  } catch (const ProviderError& e) {
    trace("events", EventKind::error,
          {{"tag", req.request_tag},
           {"error", "provider"},
           {"provider_kind", to_string(e.kind())},
           {"http_status", e.http_status()},
           {"attempts", e.attempts()},
           {"message", e.what()}});
    throw;
  }
  trace("events", EventKind::chat,
        {{"tag", req.request_tag},
         {"role", role},
         {"text", r.text},
         {"finish_reason", to_string(r.finish_reason)},
         {"attempts", r.attempts},
         {"retries", r.attempts - 1},
         {"usage", {{"prompt", r.usage.prompt}, {"completion", r.usage.completion}}}});
  if (r.finish_reason == FinishReason::refusal) {
    trace("events", EventKind::error, {{"tag", req.request_tag}, {"error", "refusal"}});
    throw ProviderError(ProviderErrorKind::refusal, "model refused request " + req.request_tag);
  }
  return r;
}

// Calls the model until `parse` accepts the output, regenerating up to
// kFormatRetries times. Each rejection is traced.
template <typename T, typename Parse>
T call_with_format_retries(const ModelHandle& model, const ChatRequest& req, const TraceSink& trace,
                           const std::string& role, Parse&& parse) {
  std::string last;
  for (int attempt = 0; attempt <= kFormatRetries; ++attempt) {
    const ChatResponse r = traced_call(model, req, trace, role);
    try {
      return parse(r.text);
    } catch (const FormatError& e) {
      last = e.what();
      trace("events", EventKind::error,
            {{"tag", req.request_tag}, {"error", "format"}, {"attempt", attempt + 1}, {"message", last}});
    }
  }
  throw FormatError(req.request_tag + ": " + last + " (after " + std::to_string(kFormatRetries) + " retries)");
}

nlohmann::json parse_json_object(const std::string& raw) {
  auto repaired = repair_json_output(raw);
  if (!repaired) throw FormatError("no JSON object in output");
  try {
    return nlohmann::json::parse(*repaired);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("invalid JSON: ") + e.what());
  }
}

std::string string_key(const nlohmann::json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) throw FormatError(std::string("missing string key \"") + key + "\"");
  return it->get<std::string>();
}

Timestamp timestamp_key(const nlohmann::json& obj, const char* key) {
  const std::string s = string_key(obj, key);
  auto t = Timestamp::parse(s);
  if (!t) throw FormatError(std::string("\"") + key + "\" is not a 12-hour timestamp: '" + s + "'");
  return *t;
}

// Keys accepted in a rating map and their bounds.
void validate_ratings(const StudyConfig& study, const std::map<std::string, int>& ratings,
                      const std::vector<std::string>& required_metrics) {
  for (const auto& [key, value] : ratings) {
    const auto slash = key.find('/');
    const std::string id = key.substr(0, slash);
    const MetricSpec* m = study.find_metric(id);
    if (!m) throw FormatError("rating for unknown metric '" + key + "'");
    const auto keys = m->rating_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) throw FormatError("rating key '" + key + "' is not valid");
    const auto [lo, hi] = m->rating_bounds();
    if (value < lo || value > hi) {
      throw FormatError("rating " + key + " = " + std::to_string(value) + " outside [" + std::to_string(lo) + ", " +
                        std::to_string(hi) + "]");
    }
  }
  for (const auto& id : required_metrics) {
    const MetricSpec* m = study.find_metric(id);
    if (!m) continue;
    for (const auto& key : m->rating_keys()) {
      if (!ratings.count(key)) throw FormatError("missing rating " + key);
    }
  }
}

std::string subject_id(const Subject& s) { return s.profile ? s.profile->subject_id : std::string("subject"); }

// Applies each action on its own so one invalid action does not discard the
// rest. Invalid actions are traced and dropped.
std::vector<DeviceAction> apply_valid_actions(const Subject& subject, SimulationState& state,
                                              const std::vector<DeviceAction>& actions, const std::string& tag,
                                              const TraceSink& trace) {
  std::vector<DeviceAction> applied;
  for (const auto& a : actions) {
    try {
      state.environment = apply_actions(*subject.env, state.environment, {a});
      DeviceAction canonical = a;
      canonical.device = subject.env->find_device(a.device)->name;
      applied.push_back(std::move(canonical));
    } catch (const Error& e) {
      trace("events", EventKind::error, {{"tag", tag}, {"error", "action"}, {"action", action_to_json(a)}, {"message", e.what()}});
    }
  }
  return applied;
}

nlohmann::json state_changes(const EnvironmentState& before, const EnvironmentState& after) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [device, attrs] : after.devices) {
    const auto& old = before.devices.at(device);
    for (const auto& [k, v] : attrs) {
      auto it = old.find(k);
      if (it == old.end() || it->second != v) out[device][k] = {it == old.end() ? nlohmann::json() : it->second, v};
    }
  }
  return out;
}

}  // namespace

ActivityResult generate_next_activity(const Subject& subject, SimulationState& state, const ModelHandle& model,
                                      const TraceSink& trace, const std::string& start_time) {
  if (state.schedule.empty() && state.clock == 0) {
    auto t = Timestamp::parse(start_time);
    if (!t) throw PreconditionError("start time '" + start_time + "' is not a 12-hour timestamp");
    state.clock = t->seconds;
  }
  const std::string tag = subject_id(subject) + "/schedule/r" + std::to_string(state.round_index + 1);
  const ChatRequest req = schedule_request(subject, state, tag);
  ScheduleEntry entry = call_with_format_retries<ScheduleEntry>(model, req, trace, "avatar", [](const std::string& raw) {
    const nlohmann::json obj = parse_json_object(raw);
    if (!obj.is_object()) throw FormatError("output is not a JSON object");
    ScheduleEntry e;
    e.start_time = timestamp_key(obj, "Start_time");
    e.end_time = timestamp_key(obj, "End_time");
    e.activity = string_key(obj, "Activity");
    e.reasoning = string_key(obj, "Reasoning");
    if (e.activity.empty()) throw FormatError("\"Activity\" is empty");
    if (!(e.start_time < e.end_time)) throw FormatError("End_time is not after Start_time");
    return e;
  });

  ActivityResult result;
  if (!state.schedule.empty() && entry.start_time < state.schedule.back().end_time) {
    result.clamped_from = entry;
    const std::int64_t duration = entry.end_time.seconds - entry.start_time.seconds;
    entry.start_time = Timestamp::from_seconds(state.schedule.back().end_time.seconds);
    entry.end_time = Timestamp::from_seconds(entry.start_time.seconds + duration);
  }
  result.entry = entry;
  state.schedule.push_back(entry);
  state.memory.activity_history.push_back(state.schedule.size() - 1);
  state.clock = entry.start_time.seconds;
  state.environment.clock = state.clock;

  nlohmann::json payload = entry.to_json();
  payload["index"] = state.schedule.size() - 1;
  payload["round"] = state.round_index + 1;
  if (result.clamped_from) {
    payload["clamped"] = {{"original_start_time", result.clamped_from->start_time.str()},
                          {"original_end_time", result.clamped_from->end_time.str()}};
  }
  trace("schedule", EventKind::schedule, payload);
  return result;
}

EnrichedActivity enrich_activity(const Subject& subject, SimulationState& state, const ScheduleEntry& entry,
                                 const ModelHandle& model, const TraceSink& trace) {
  const std::string tag = subject_id(subject) + "/enrich/r" + std::to_string(state.round_index + 1);
  const ChatRequest req = enrichment_request(subject, state, entry, tag);
  EnrichedActivity out =
      call_with_format_retries<EnrichedActivity>(model, req, trace, "simulator", [](const std::string& raw) {
        const nlohmann::json obj = parse_json_object(raw);
        if (!obj.is_object()) throw FormatError("output is not a JSON object");
        for (auto it = obj.begin(); it != obj.end(); ++it) {
          if (it.key() != "time_stamp" && it.key() != "Expanded Activity") {
            throw FormatError("unexpected key \"" + it.key() + "\"");
          }
        }
        EnrichedActivity e;
        e.time_stamp = timestamp_key(obj, "time_stamp");
        e.expanded = string_key(obj, "Expanded Activity");
        if (e.expanded.empty()) throw FormatError("\"Expanded Activity\" is empty");
        return e;
      });
  state.enriched.push_back(out);
  nlohmann::json payload = out.to_json();
  payload["index"] = state.enriched.size() - 1;
  payload["round"] = state.round_index + 1;
  trace("enriched", EventKind::enrichment, payload);
  return out;
}

namespace {

Turn make_turn(const SimulationState& state, Speaker speaker, std::string text) {
  Turn t;
  t.seq = state.next_seq();
  t.round = state.round_index + 1;
  t.speaker = speaker;
  t.text = std::move(text);
  if (!state.schedule.empty()) {
    t.at = state.schedule.back().start_time.str();
    t.activity = state.schedule.back().activity;
  }
  return t;
}

void record_turn(SimulationState& state, Turn turn, const TraceSink& trace) {
  state.memory.append_shared(turn.seq);
  trace("transcript", EventKind::turn, turn.to_json());
  state.transcript.push_back(std::move(turn));
}

// Scenario the scripted opener uses this round.
const ScenarioSpec& scripted_scenario(const StudyConfig& study, const SimulationState& state) {
  return study.scenarios[static_cast<std::size_t>(state.round_index) % study.scenarios.size()];
}

}  // namespace

void run_interaction_round(const Subject& subject, SimulationState& state, const Models& models,
                           const TraceSink& trace) {
  const StudyConfig& study = *subject.study;
  const InteractionPolicy& policy = study.policy;
  if (state.phase != Phase::simulation) throw PreconditionError("interaction rounds run only in the simulation phase");
  if (state.round_index >= policy.max_rounds) throw PreconditionError("all rounds have been run");

  const std::string sid = subject_id(subject);
  const int round = state.round_index + 1;
  const EnvironmentState before = state.environment;
  std::vector<DeviceAction> round_actions;
  Speaker speaker = policy.initiation == Initiation::avatar_initiated ? Speaker::avatar : Speaker::assistant;
  int turns = 0;
  bool closed = false;

  while (!closed && turns < policy.max_turns_per_round) {
    const std::string tag = sid + "/r" + std::to_string(round) + "/" + to_string(speaker) + "/t" + std::to_string(turns + 1);
    if (speaker == Speaker::assistant) {
      Trailer tr;
      if (turns == 0 && policy.initiation == Initiation::scripted) {
        const ScenarioSpec& sc = scripted_scenario(study, state);
        tr.text = sc.trigger_hint.value_or(sc.narrative);
      } else {
        PromptContext ctx{PromptRole::assistant, Phase::simulation, subject, nullptr, false};
        ChatRequest req;
        req.temperature = kSimulationTemperature;
        req.request_tag = tag;
        req.messages = build_prompt(ctx, state, study);
        tr = call_with_format_retries<Trailer>(models.assistant, req, trace, "assistant", [](const std::string& raw) {
          Trailer t = parse_trailer(raw);
          if (t.text.empty()) throw FormatError("assistant reply is empty");
          return t;
        });
      }
      Turn t = make_turn(state, Speaker::assistant, tr.text);
      t.actions = apply_valid_actions(subject, state, tr.actions, tag, trace);
      round_actions.insert(round_actions.end(), t.actions.begin(), t.actions.end());
      for (auto& n : tr.notes) state.memory.role_notes["assistant"].push_back(n);
      record_turn(state, std::move(t), trace);
      closed = tr.end;
    } else {
      const bool replying = !state.transcript.empty() && state.transcript.back().round == round &&
                            state.transcript.back().speaker == Speaker::assistant;
      PromptContext ctx{PromptRole::avatar, Phase::simulation, subject, nullptr, false};
      ChatRequest req;
      req.temperature = kSimulationTemperature;
      req.request_tag = tag;
      req.messages = build_prompt(ctx, state, study);
      Trailer tr = call_with_format_retries<Trailer>(models.avatar, req, trace, "avatar", [&](const std::string& raw) {
        Trailer t = parse_trailer(raw);
        if (replying) {
          if (!t.decision) throw FormatError("reply has no DECISION line");
          if (*t.decision != Decision::ignore) validate_ratings(study, t.ratings, policy.probe_metrics);
        } else {
          validate_ratings(study, t.ratings, {});
        }
        if (t.text.empty() && (!t.decision || *t.decision != Decision::ignore)) throw FormatError("avatar reply is empty");
        return t;
      });
      if (tr.decision && *tr.decision == Decision::ignore) {
        // The avatar does not answer: the round closes without an avatar turn.
        trace("events", EventKind::turn, {{"tag", tag}, {"ignored", true}, {"round", round}, {"text", tr.text}});
        closed = true;
        break;
      }
      Turn t = make_turn(state, Speaker::avatar, tr.text);
      t.decision = tr.decision.value_or(Decision::none);
      t.ratings = tr.ratings;
      t.actions = apply_valid_actions(subject, state, tr.actions, tag, trace);
      round_actions.insert(round_actions.end(), t.actions.begin(), t.actions.end());
      for (auto& n : tr.notes) state.memory.role_notes["avatar"].push_back(n);
      record_turn(state, std::move(t), trace);
      closed = tr.end;
    }
    ++turns;
    speaker = speaker == Speaker::assistant ? Speaker::avatar : Speaker::assistant;
    if (policy.turn_mode == TurnMode::single_turn && turns >= 2) break;
  }

  nlohmann::json acts = nlohmann::json::array();
  for (const auto& a : round_actions) acts.push_back(action_to_json(a));
  trace("env_states", EventKind::state_diff,
        {{"round", round},
         {"at", state.schedule.empty() ? std::string() : state.schedule.back().start_time.str()},
         {"actions", acts},
         {"changes", state_changes(before, state.environment)},
         {"state", state.environment.to_json()}});
  ++state.round_index;
}

std::vector<InterviewAnswer> run_interview(Phase phase, const Subject& subject, SimulationState& state,
                                           const Models& models, const TraceSink& trace) {
  const StudyConfig& study = *subject.study;
  const auto key = interview_key(phase);
  if (!key) throw PreconditionError(to_string(phase) + " is not an interview phase");
  if (!study.policy.has_phase(phase)) throw PreconditionError(to_string(phase) + " is not in the study's phases");
  const auto& questions = study.questions(phase);
  if (questions.empty()) throw PreconditionError("no questions for " + to_string(phase));

  const Phase saved = state.phase;
  state.phase = phase;
  std::vector<InterviewAnswer> out;
  for (std::size_t i = 0; i < questions.size(); ++i) {
    const InterviewQuestion& q = questions[i];
    PromptContext ctx{PromptRole::avatar, phase, subject, &q, false};
    ChatRequest req;
    req.temperature = kSimulationTemperature;
    req.request_tag = subject_id(subject) + "/interview/" + *key + "/q" + std::to_string(i + 1);
    req.messages = build_prompt(ctx, state, study);
    Trailer tr = call_with_format_retries<Trailer>(models.avatar, req, trace, "avatar", [&](const std::string& raw) {
      Trailer t = parse_trailer(raw);
      if (t.text.empty()) throw FormatError("interview answer is empty");
      validate_ratings(study, t.ratings, q.metric_ids);
      return t;
    });
    InterviewAnswer a{q.text, tr.text, tr.ratings};
    nlohmann::json payload = a.to_json();
    payload["phase"] = *key;
    payload["index"] = i + 1;
    trace("events", EventKind::interview, payload);
    out.push_back(std::move(a));
  }
  nlohmann::json list = nlohmann::json::array();
  for (const auto& a : out) list.push_back(a.to_json());
  state.interviews[*key] = list;
  state.phase = saved;
  return out;
}

std::string run_assistant_reflection(const Subject& subject, SimulationState& state, const Models& models,
                                     const TraceSink& trace) {
  const StudyConfig& study = *subject.study;
  PromptContext ctx{PromptRole::assistant, Phase::post_interview, subject, nullptr, true};
  ChatRequest req;
  req.temperature = kSimulationTemperature;
  req.request_tag = subject_id(subject) + "/interview/post/reflection";
  req.messages = build_prompt(ctx, state, study);
  const std::string text =
      call_with_format_retries<std::string>(models.assistant, req, trace, "assistant", [](const std::string& raw) {
        Trailer t = parse_trailer(raw);
        if (t.text.empty()) throw FormatError("reflection is empty");
        return t.text;
      });
  state.interviews["assistant_reflection"] = text;
  trace("events", EventKind::interview, {{"phase", "post"}, {"role", "assistant"}, {"reflection", text}});
  return text;
}

void run_subject(const Subject& subject, SimulationState& state, const Models& models, const TraceSink& trace,
                 const std::string& start_time) {
  const StudyConfig& study = *subject.study;
  const auto& policy = study.policy;
  if (state.environment.devices.empty()) state.environment = init_environment(*subject.env);
  const int mid_round = (policy.max_rounds + 1) / 2;
  for (Phase phase : policy.phases) {
    switch (phase) {
      case Phase::pre_interview:
        run_interview(phase, subject, state, models, trace);
        break;
      case Phase::mid_interview:
        break;
      case Phase::simulation:
        state.phase = Phase::simulation;
        while (state.round_index < policy.max_rounds) {
          const ActivityResult act = generate_next_activity(subject, state, models.avatar, trace, start_time);
          enrich_activity(subject, state, act.entry, models.avatar, trace);
          run_interaction_round(subject, state, models, trace);
          if (policy.has_phase(Phase::mid_interview) && state.round_index == mid_round) {
            run_interview(Phase::mid_interview, subject, state, models, trace);
          }
        }
        break;
      case Phase::post_interview:
        run_interview(phase, subject, state, models, trace);
        run_assistant_reflection(subject, state, models, trace);
        break;
    }
  }
}

std::string derive_run_id(const StudyConfig& study, const std::vector<AvatarProfile>& profiles,
                          const EnvironmentConfig& env, std::uint64_t seed) {
  const std::string material = canonical_config_bytes(study) + "\n" + profiles_to_json(profiles).dump() + "\n" +
                               environment_to_json(env).dump() + "\n" + std::to_string(seed);
  return study.study_id + "-s" + std::to_string(seed) + "-" + sha256_hex(material).substr(0, 8);
}

RunOutcome run_study(const StudyConfig& study, const std::vector<AvatarProfile>& profiles, const EnvironmentConfig& env,
                     const Models& models, const RunOptions& options) {
  if (const auto bad = validate_config(study); !bad.empty()) throw SchemaError("config", bad.front());
  if (const auto bad = validate_environment(env); !bad.empty()) throw SchemaError("environment", bad.front());
  if (profiles.empty()) throw PreconditionError("run_study needs at least one profile");
  std::set<std::string> ids;
  for (const auto& p : profiles) {
    if (!ids.insert(p.subject_id).second) throw PreconditionError("duplicate subject id " + p.subject_id);
  }
  if (!Timestamp::parse(options.start_time)) throw PreconditionError("start time is not a 12-hour timestamp");

  RunOutcome outcome;
  outcome.run_id = options.run_id.empty() ? derive_run_id(study, profiles, env, options.seed) : options.run_id;
  outcome.dir = options.runs_root / outcome.run_id;
  if (fs::exists(outcome.dir)) {
    if (!options.force) throw IoError("run directory " + outcome.dir.string() + " already exists (use --force)");
    fs::remove_all(outcome.dir);
  }
  fs::create_directories(outcome.dir);

  const std::string config_bytes = canonical_config_bytes(study);
  write_file_durable(outcome.dir / "config.json", config_bytes);
  write_file_durable(outcome.dir / "environment.json", environment_to_json(env).dump(2) + "\n");

  std::vector<AvatarProfile> finished = profiles;
  std::vector<nlohmann::json> subject_info(profiles.size());
  std::vector<bool> provider_failed(profiles.size(), false);
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr fatal;

  auto worker = [&] {
    for (std::size_t i = next++; i < profiles.size(); i = next++) {
      try {
        AvatarProfile& profile = finished[i];
        const fs::path sdir = outcome.dir / profile.subject_id;
        std::map<std::string, EventStream> streams;
        for (const auto name : kSubjectStreams) {
          streams.emplace(std::string(name), EventStream(sdir / (std::string(name) + ".jsonl")));
        }
        TraceSink sink{[&streams](const std::string& stream, EventKind kind, nlohmann::json payload) {
          streams.at(stream).emit(kind, std::move(payload));
        }};
        SimulationState state;
        nlohmann::json info{{"status", "complete"}};
        try {
          if (profile.narrative.empty()) {
            profile.narrative = traced_call(models.avatar, narrative_request(profile), sink, "narrator").text;
          }
          const Subject subject{&study, &profile, &env};
          run_subject(subject, state, models, sink, options.start_time);
        } catch (const ProviderError& e) {
          info = {{"status", "partial"},
                  {"error", {{"type", "provider"}, {"provider_kind", to_string(e.kind())}, {"message", e.what()}}}};
          provider_failed[i] = true;
        } catch (const FormatError& e) {
          info = {{"status", "partial"}, {"error", {{"type", "format"}, {"message", e.what()}}}};
        }
        info["rounds_completed"] = state.round_index;
        write_file_durable(sdir / "interviews.json", nlohmann::json(state.interviews).dump(2) + "\n");
        nlohmann::json counts = nlohmann::json::object();
        for (const auto& [name, s] : streams) counts[name] = s.last_seq();
        info["streams"] = counts;
        subject_info[i] = info;
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!fatal) fatal = std::current_exception();
        next = profiles.size();
      }
    }
  };

  const int jobs = std::max(1, std::min<int>(options.jobs, static_cast<int>(profiles.size())));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (fatal) std::rethrow_exception(fatal);

  write_file_durable(outcome.dir / "profiles.json", profiles_to_json(finished).dump(2) + "\n");

  RunManifest m;
  m.run_id = outcome.run_id;
  m.study_id = study.study_id;
  m.config_hash = sha256_hex(config_bytes);
  m.seed = options.seed;
  if (models.assistant.provider) m.providers["assistant"] = models.assistant.provider->identity().to_json();
  if (models.avatar.provider) m.providers["avatar"] = models.avatar.provider->identity().to_json();
  for (const auto& [k, v] : options.extra_providers) m.providers[k] = v;
  m.rng_algorithm = SplitMix64::kAlgorithmId;
  outcome.all_provider_failures = true;
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    m.subjects[profiles[i].subject_id] = subject_info[i];
    outcome.status[profiles[i].subject_id] = subject_info[i]["status"].get<std::string>();
    if (!provider_failed[i]) outcome.all_provider_failures = false;
  }
  write_file_durable(outcome.dir / "manifest.json", m.to_json().dump(2) + "\n");
  return outcome;
}

}  // namespace gidea
