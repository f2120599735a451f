#include <doctest.h>

#include <random>
#include <set>

#include "gidea/context.hpp"
#include "gidea/engine.hpp"
#include "gidea/environment.hpp"
#include "gidea/errors.hpp"
#include "gidea/scripted.hpp"
#include "gidea/trace.hpp"
#include "support.hpp"

using namespace gidea;
using gidea::testing::fixture;
using gidea::testing::quiet_handle;
using gidea::testing::schedule_json;

namespace {

struct Bench {
  StudyConfig study = gidea::testing::small_study();
  AvatarProfile profile;
  EnvironmentConfig env = default_environment();
  SimulationState state;
  std::vector<std::tuple<std::string, EventKind, nlohmann::json>> events;
  TraceSink sink{[this](const std::string& s, EventKind k, nlohmann::json p) { events.emplace_back(s, k, std::move(p)); }};

  Bench() {
    profile.subject_id = "S1";
    profile.age = 34;
    profile.gender = "female";
    profile.household_type = "single-person household";
    profile.narrative = "Mina works shifts at a bakery and likes quiet mornings.";
    state.environment = init_environment(env);
  }
  Subject subject() const { return {&study, &profile, &env}; }
  int count(EventKind k) const {
    int n = 0;
    for (const auto& e : events) n += std::get<1>(e) == k;
    return n;
  }
};

ScriptEntry entry(const std::string& pattern, const std::string& response, int times = 1) {
  ScriptEntry e;
  e.pattern = pattern;
  e.response = response;
  e.times = times;
  return e;
}

std::string all_text(const std::vector<ChatMessage>& ms) {
  std::string s;
  for (const auto& m : ms) s += m.text + "\n";
  return s;
}

}  // namespace

TEST_SUITE("engine") {
  TEST_CASE("schedule entry parses from the documented output format") {
    Bench b;
    ScriptedChatProvider p({entry("*", R"({"Start_time": "2025-02-06 12:10:00 pm", "Activity": "walk to the living room",
      "End_time": "2025-02-06 12:30:00 pm", "Reasoning": "I want to relax after lunch."})")});
    const auto r = generate_next_activity(b.subject(), b.state, quiet_handle(p), b.sink);
    CHECK(r.entry.start_time.str() == "2025-02-06 12:10:00 pm");
    CHECK(r.entry.end_time.str() == "2025-02-06 12:30:00 pm");
    CHECK(r.entry.activity == "walk to the living room");
    CHECK(r.entry.reasoning == "I want to relax after lunch.");
    CHECK_FALSE(r.clamped_from);
    CHECK(b.state.memory.activity_history.size() == 1);
    CHECK(b.state.clock == r.entry.start_time.seconds);
  }

  TEST_CASE("fenced JSON is repaired to the same entry") {
    const std::string clean = schedule_json("2025-02-06 09:00:00 am", "2025-02-06 09:30:00 am", "read");
    Bench a, b;
    ScriptedChatProvider pa({entry("*", clean)});
    ScriptedChatProvider pb({entry("*", "Here you go:\n```json\n" + clean + "\n```\nEnjoy!")});
    const auto ra = generate_next_activity(a.subject(), a.state, quiet_handle(pa));
    const auto rb = generate_next_activity(b.subject(), b.state, quiet_handle(pb));
    CHECK(ra.entry == rb.entry);
  }

  TEST_CASE("repair trims to the first balanced object") {
    CHECK(*repair_json_output("noise {\"a\": \"}\", \"b\": {\"c\": 1}} tail {\"x\": 2}") ==
          "{\"a\": \"}\", \"b\": {\"c\": 1}}");
    CHECK_FALSE(repair_json_output("no json here"));
  }

  TEST_CASE("overlapping start is clamped to the previous end and traced") {
    Bench b;
    const std::string overlap = schedule_json("2025-02-06 09:15:00 am", "2025-02-06 09:45:00 am", "call");
    ScriptedChatProvider p({entry("*", schedule_json("2025-02-06 09:00:00 am", "2025-02-06 09:30:00 am", "read")),
                            entry("*", overlap, 0)});
    generate_next_activity(b.subject(), b.state, quiet_handle(p), b.sink);
    const auto r = generate_next_activity(b.subject(), b.state, quiet_handle(p), b.sink);
    REQUIRE(r.clamped_from);
    CHECK(r.clamped_from->start_time.str() == "2025-02-06 09:15:00 am");
    CHECK(r.entry.start_time.str() == "2025-02-06 09:30:00 am");
    CHECK(r.entry.end_time.str() == "2025-02-06 10:00:00 am");
    const auto& payload = std::get<2>(b.events.back());
    CHECK(payload["clamped"]["original_start_time"] == "2025-02-06 09:15:00 am");
  }

  TEST_CASE("malformed output is retried then raises FormatError") {
    Bench b;
    ScriptedChatProvider p({entry("*", "not json", 0)});
    CHECK_THROWS_AS(generate_next_activity(b.subject(), b.state, quiet_handle(p), b.sink), FormatError);
    CHECK(p.calls().size() == static_cast<std::size_t>(1 + kFormatRetries));
    Bench c;
    ScriptedChatProvider q({entry("*", "not json"), entry("*", schedule_json("2025-02-06 09:00:00 am",
                                                                             "2025-02-06 09:10:00 am", "x"))});
    CHECK_NOTHROW(generate_next_activity(c.subject(), c.state, quiet_handle(q)));
  }

  TEST_CASE("end before start is a format error") {
    Bench b;
    ScriptedChatProvider p({entry("*", schedule_json("2025-02-06 09:00:00 am", "2025-02-06 08:00:00 am", "x"), 0)});
    CHECK_THROWS_AS(generate_next_activity(b.subject(), b.state, quiet_handle(p)), FormatError);
  }

  TEST_CASE("enrichment needs exactly its two keys") {
    Bench b;
    ScheduleEntry e;
    e.start_time = *Timestamp::parse("2025-02-06 09:00:00 am");
    e.end_time = *Timestamp::parse("2025-02-06 09:30:00 am");
    e.activity = "read";
    ScriptedChatProvider ok({entry("*", R"({"time_stamp": "2025-02-06 09:00:00 am", "Expanded Activity": "Opens a novel."})")});
    CHECK(enrich_activity(b.subject(), b.state, e, quiet_handle(ok)).expanded == "Opens a novel.");
    ScriptedChatProvider missing({entry("*", R"({"time_stamp": "2025-02-06 09:00:00 am"})", 0)});
    CHECK_THROWS_AS(enrich_activity(b.subject(), b.state, e, quiet_handle(missing)), FormatError);
    ScriptedChatProvider extra({entry("*", R"({"time_stamp": "2025-02-06 09:00:00 am", "Expanded Activity": "x", "mood": "ok"})", 0)});
    CHECK_THROWS_AS(enrich_activity(b.subject(), b.state, e, quiet_handle(extra)), FormatError);
  }

  TEST_CASE("enrichment prompt includes profile, activities, environment and scenarios") {
    Bench b;
    ScheduleEntry e;
    e.start_time = *Timestamp::parse("2025-02-06 09:00:00 am");
    e.end_time = *Timestamp::parse("2025-02-06 09:30:00 am");
    e.activity = "water the plants";
    const std::string text = all_text(enrichment_request(b.subject(), b.state, e, "t").messages);
    CHECK(text.find(b.profile.narrative) != std::string::npos);
    CHECK(text.find("water the plants") != std::string::npos);
    CHECK(text.find("ceiling light") != std::string::npos);
    CHECK(text.find(b.study.scenarios[0].narrative) != std::string::npos);
  }

  TEST_CASE("avatar prompt holds persona and role but no research questions") {
    const StudyConfig study = load_config(fixture("studies/cs9.json"));
    Bench b;
    b.study = study;
    const PromptContext ctx{PromptRole::avatar, Phase::simulation, b.subject(), nullptr, false};
    const std::string text = all_text(build_prompt(ctx, b.state, b.study));
    CHECK(text.find(b.profile.narrative) != std::string::npos);
    CHECK(text.find(study.avatar_role) != std::string::npos);
    for (const auto& s : protected_strings(study)) CHECK(text.find(s) == std::string::npos);
  }

  TEST_CASE("assistant prompt holds the study metadata and activity reasoning") {
    Bench b;
    b.state.schedule.push_back({*Timestamp::parse("2025-02-06 08:00:00 am"), *Timestamp::parse("2025-02-06 08:30:00 am"),
                                "make coffee", "needs caffeine"});
    b.state.schedule.push_back({*Timestamp::parse("2025-02-06 08:30:00 am"), *Timestamp::parse("2025-02-06 09:00:00 am"),
                                "watch the news", "wants the headlines"});
    const PromptContext ctx{PromptRole::assistant, Phase::simulation, b.subject(), nullptr, false};
    const auto messages = build_prompt(ctx, b.state, b.study);
    const std::string text = all_text(messages);
    CHECK(text.find(b.study.objective) != std::string::npos);
    for (const auto& rq : b.study.research_questions) CHECK(text.find(rq) != std::string::npos);
    CHECK(text.find(b.study.scenarios[0].narrative) != std::string::npos);
    CHECK(text.find("make coffee") != std::string::npos);
    CHECK(text.find("wants the headlines") != std::string::npos);
    CHECK(build_prompt(ctx, b.state, b.study) == messages);
  }

  TEST_CASE("avatar notes never reach the assistant and vice versa") {
    Bench b;
    b.state.memory.role_notes["avatar"] = {"secretly tired of the assistant"};
    b.state.memory.role_notes["assistant"] = {"user ignores offers before nine"};
    const PromptContext as{PromptRole::assistant, Phase::simulation, b.subject(), nullptr, false};
    const PromptContext av{PromptRole::avatar, Phase::simulation, b.subject(), nullptr, false};
    const std::string a = all_text(build_prompt(as, b.state, b.study));
    const std::string v = all_text(build_prompt(av, b.state, b.study));
    CHECK(a.find("secretly tired") == std::string::npos);
    CHECK(a.find("user ignores offers") != std::string::npos);
    CHECK(v.find("secretly tired") != std::string::npos);
    CHECK(v.find("user ignores offers") == std::string::npos);
  }

  TEST_CASE("an accepted offer adds two turns with the decision") {
    Bench b;
    ScriptedChatProvider assistant({entry("*", "Shall I turn off the TV?")});
    ScriptedChatProvider avatar({entry("*", "Yes please.\nDECISION: accept\nRATING[helpful]: 4\nEND")});
    run_interaction_round(b.subject(), b.state, {quiet_handle(assistant), quiet_handle(avatar)}, b.sink);
    REQUIRE(b.state.transcript.size() == 2);
    CHECK(b.state.transcript[0].speaker == Speaker::assistant);
    CHECK(b.state.transcript[1].decision == Decision::accept);
    CHECK(b.state.transcript[1].ratings.at("helpful") == 4);
    CHECK(b.state.round_index == 1);
    CHECK(b.state.memory.shared_history == std::vector<std::int64_t>{1, 2});
  }

  TEST_CASE("ignore closes the round after the assistant turn") {
    Bench b;
    ScriptedChatProvider assistant({entry("*", "Shall I open the curtains?")});
    ScriptedChatProvider avatar({entry("*", "DECISION: ignore")});
    run_interaction_round(b.subject(), b.state, {quiet_handle(assistant), quiet_handle(avatar)}, b.sink);
    REQUIRE(b.state.transcript.size() == 1);
    CHECK(b.state.transcript[0].speaker == Speaker::assistant);
    CHECK(b.state.round_index == 1);
    CHECK(b.count(EventKind::state_diff) == 1);
  }

  TEST_CASE("a reply without a decision is a format error after retries") {
    Bench b;
    ScriptedChatProvider assistant({entry("*", "Shall I?")});
    ScriptedChatProvider avatar({entry("*", "Maybe later.", 0)});
    CHECK_THROWS_AS(run_interaction_round(b.subject(), b.state, {quiet_handle(assistant), quiet_handle(avatar)}),
                    FormatError);
  }

  TEST_CASE("an avatar action changes the environment state") {
    Bench b;
    ScriptedChatProvider assistant({entry("*", "It is dark in here. Light?")});
    ScriptedChatProvider avatar({entry("*", "Yes.\nACTION: ceiling light|turn on\nDECISION: accept\nRATING[helpful]: 5\nEND")});
    const EnvironmentState before = b.state.environment;
    run_interaction_round(b.subject(), b.state, {quiet_handle(assistant), quiet_handle(avatar)}, b.sink);
    CHECK(b.state.environment.devices.at("ceiling light").at("power") == "on");
    EnvironmentState expected = before;
    expected.devices["ceiling light"]["power"] = "on";
    expected.clock = b.state.environment.clock;
    CHECK(b.state.environment == expected);
    for (const auto& [stream, kind, payload] : b.events) {
      if (kind == EventKind::state_diff) CHECK(payload["changes"]["ceiling light"]["power"] == nlohmann::json{"off", "on"});
    }
  }

  TEST_CASE("invalid actions are dropped and traced, not applied") {
    Bench b;
    ScriptedChatProvider assistant({entry("*", "Done.\nACTION: jacuzzi|turn on\nACTION: fan|adjust brightness|3")});
    ScriptedChatProvider avatar({entry("*", "Fine.\nDECISION: accept\nRATING[helpful]: 3\nEND")});
    const EnvironmentState before = b.state.environment;
    run_interaction_round(b.subject(), b.state, {quiet_handle(assistant), quiet_handle(avatar)}, b.sink);
    CHECK(b.state.environment.devices == before.devices);
    CHECK(b.state.transcript[0].actions.empty());
  }

  TEST_CASE("turn count never exceeds the policy limit") {
    Bench b;
    b.study.policy.max_turns_per_round = 3;
    ScriptedChatProvider assistant({entry("*", "More?", 0)});
    ScriptedChatProvider avatar({entry("*", "Sure.\nDECISION: accept\nRATING[helpful]: 3", 0)});
    run_interaction_round(b.subject(), b.state, {quiet_handle(assistant), quiet_handle(avatar)});
    CHECK(b.state.transcript.size() == 3);
    b.study.policy.turn_mode = TurnMode::single_turn;
    b.study.policy.max_turns_per_round = 10;
    run_interaction_round(b.subject(), b.state, {quiet_handle(assistant), quiet_handle(avatar)});
    CHECK(b.state.transcript.size() == 5);
  }

  TEST_CASE("scripted initiation opens with the scenario hint without a model call") {
    Bench b;
    b.study.policy.initiation = Initiation::scripted;
    ScriptedChatProvider assistant({});
    ScriptedChatProvider avatar({entry("*", "OK.\nDECISION: reject\nRATING[helpful]: 2\nEND")});
    run_interaction_round(b.subject(), b.state, {quiet_handle(assistant), quiet_handle(avatar)});
    CHECK(b.state.transcript[0].text == "Shall I switch the TV off?");
    CHECK(assistant.calls().empty());
  }

  TEST_CASE("rounds outside the simulation phase are refused") {
    Bench b;
    b.state.phase = Phase::post_interview;
    ScriptedChatProvider p({});
    CHECK_THROWS_AS(run_interaction_round(b.subject(), b.state, {quiet_handle(p), quiet_handle(p)}), PreconditionError);
  }

  TEST_CASE("apply_actions basics") {
    const EnvironmentConfig cfg = default_environment();
    const EnvironmentState s = init_environment(cfg);
    CHECK(apply_actions(cfg, s, {}) == s);
    const auto on = apply_actions(cfg, s, {{"fan", "turn on", std::nullopt}});
    CHECK(on.devices.at("fan").at("power") == "on");
    CHECK(apply_actions(cfg, on, {{"fan", "turn off", std::nullopt}}) == s);
    CHECK_THROWS_AS(apply_actions(cfg, s, {{"floor sweeper", "adjust brightness", std::string("3")}}),
                    UnsupportedActionError);
    CHECK_THROWS_AS(apply_actions(cfg, s, {{"vacuum", "turn on", std::nullopt}}), UnknownDeviceError);
  }

  TEST_CASE("apply_actions changes exactly the named attributes") {
    const EnvironmentConfig cfg = default_environment();
    std::mt19937 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
      EnvironmentState s = init_environment(cfg);
      std::vector<DeviceAction> actions;
      std::set<std::pair<std::string, std::string>> touched;
      EnvironmentState expected = s;
      const int n = std::uniform_int_distribution<int>(0, 6)(rng);
      for (int i = 0; i < n; ++i) {
        const auto& d = cfg.devices[std::uniform_int_distribution<std::size_t>(0, cfg.devices.size() - 1)(rng)];
        const auto& act = d.actions[std::uniform_int_distribution<std::size_t>(0, d.actions.size() - 1)(rng)];
        DeviceAction a{d.name, act, std::nullopt};
        std::pair<std::string, nlohmann::json> effect;
        try {
          effect = action_effect(expected.devices.at(d.name), a);
        } catch (const UnsupportedActionError&) {
          a.value = std::to_string(std::uniform_int_distribution<int>(1, 9)(rng));
          effect = action_effect(expected.devices.at(d.name), a);
        }
        const auto& [attr, value] = effect;
        expected.devices[d.name][attr] = value;
        touched.insert({d.name, attr});
        actions.push_back(a);
      }
      const EnvironmentState after = apply_actions(cfg, s, actions);
      CHECK(after == expected);
      for (const auto& [device, attrs] : after.devices) {
        for (const auto& [k, v] : attrs) {
          if (!touched.count({device, k})) CHECK(v == s.devices.at(device).at(k));
        }
      }
    }
  }

  TEST_CASE("interview answers come back in order with validated ratings") {
    Bench b;
    ScriptedChatProvider avatar({entry("*/q1", "Very helpful.\nRATING[overall]: 5"), entry("*/q2", "No.")});
    ScriptedChatProvider unused({});
    const auto answers = run_interview(Phase::post_interview, b.subject(), b.state,
                                       {quiet_handle(unused), quiet_handle(avatar)}, b.sink);
    REQUIRE(answers.size() == 2);
    CHECK(answers[0].question == "How helpful was the assistant overall?");
    CHECK(answers[0].ratings.at("overall") == 5);
    CHECK(answers[1].answer == "No.");
  }

  TEST_CASE("out-of-range interview rating is retried then fails") {
    Bench b;
    b.study.metrics[1].scale_max = 5;
    ScriptedChatProvider avatar({entry("*", "Great.\nRATING[overall]: 7", 0)});
    ScriptedChatProvider unused({});
    CHECK_THROWS_AS(run_interview(Phase::post_interview, b.subject(), b.state, {quiet_handle(unused), quiet_handle(avatar)}),
                    FormatError);
    CHECK(avatar.calls().size() == static_cast<std::size_t>(1 + kFormatRetries));
  }

  TEST_CASE("trait rating block yields one key per trait") {
    const StudyConfig cs1 = load_config(fixture("studies/cs1.json"));
    Bench b;
    b.study = cs1;
    std::string reply = "I picture a calm helper.";
    for (auto t : kTraitNames) reply += "\nRATING[assistant_tipi/" + std::string(t) + "]: 5";
    ScriptedChatProvider avatar({entry("*/q1", reply), entry("*/q2", "Friendly and calm.")});
    ScriptedChatProvider unused({});
    const auto answers = run_interview(Phase::post_interview, b.subject(), b.state, {quiet_handle(unused), quiet_handle(avatar)});
    CHECK(answers[0].ratings.size() == 5);
  }

  TEST_CASE("trailer parsing") {
    const Trailer t = parse_trailer("Sure thing.\ndecision: Accept\nRATING[a/b]: 3\nACTION: TV | turn off\nNOTE: hidden\nEND");
    REQUIRE(t.decision);
    CHECK(*t.decision == Decision::accept);
    CHECK(t.ratings.at("a/b") == 3);
    REQUIRE(t.actions.size() == 1);
    CHECK(t.actions[0].device == "TV");
    CHECK(t.actions[0].action == "turn off");
    CHECK(t.notes == std::vector<std::string>{"hidden"});
    CHECK(t.end);
    CHECK(t.text == "Sure thing.");
    CHECK_THROWS_AS(parse_trailer("DECISION: maybe"), FormatError);
    CHECK_THROWS_AS(parse_trailer("RATING[x]: lots"), FormatError);
    CHECK_THROWS_AS(parse_trailer("ACTION: onlydevice"), FormatError);
  }

  TEST_CASE("end-to-end scripted run of the voice assistant study") {
    gidea::testing::TempDir tmp("engine");
    const StudyConfig study = load_config(fixture("studies/cs9.json"));
    auto profiles = sample_profiles(ProfileDistribution::load(fixture("personas/cs9.json")), 2, 7);
    ScriptedChatProvider p(ScriptedChatProvider::load_script(fixture("scripts/cs9_scripted.json")));
    RunOptions o;
    o.seed = 7;
    o.runs_root = tmp.path();
    const RunOutcome out = run_study(study, profiles, default_environment(), {quiet_handle(p), quiet_handle(p)}, o);
    CHECK(out.status.size() == 2);
    CHECK(out.status.at("S1") == "complete");
    CHECK(out.status.at("S2") == "complete");
    const LoadedRun run = load_run(out.dir);
    CHECK(run.manifest.subjects.size() == 2);
    CHECK(run.manifest.subjects.at("S1")["status"] == "complete");
    CHECK(run.stream("S1", "schedule").size() == 3);
    // Third activity overlaps the second in the script and is clamped.
    CHECK(run.stream("S1", "schedule")[2].payload.contains("clamped"));

    o.runs_root = tmp.path() / "again";
    ScriptedChatProvider p2(ScriptedChatProvider::load_script(fixture("scripts/cs9_scripted.json")));
    const RunOutcome again = run_study(study, profiles, default_environment(), {quiet_handle(p2), quiet_handle(p2)}, o);
    CHECK(gidea::testing::tree_bytes(out.dir) == gidea::testing::tree_bytes(again.dir));
  }

  TEST_CASE("a subject whose script runs out is partial while the other completes") {
    gidea::testing::TempDir tmp("partial");
    const StudyConfig study = load_config(fixture("studies/cs9.json"));
    auto profiles = sample_profiles(ProfileDistribution::load(fixture("personas/cs9.json")), 2, 7);
    auto entries = ScriptedChatProvider::load_script(fixture("scripts/cs9_scripted.json"));
    // S2 runs out of round-three schedule answers.
    for (auto& e : entries) {
      if (e.pattern == "*/schedule/r3") e.pattern = "S1/schedule/r3";
    }
    ScriptedChatProvider p(entries);
    RunOptions o;
    o.seed = 7;
    o.runs_root = tmp.path();
    const RunOutcome out = run_study(study, profiles, default_environment(), {quiet_handle(p), quiet_handle(p)}, o);
    CHECK(out.status.at("S1") == "complete");
    CHECK(out.status.at("S2") == "partial");
    CHECK_FALSE(out.all_provider_failures);
    const LoadedRun run = load_run(out.dir);
    CHECK(run.manifest.subjects.at("S2")["rounds_completed"] == 2);
  }

  TEST_CASE("narrative retries are recorded in the trace") {
    gidea::testing::TempDir tmp("retry");
    const StudyConfig study = load_config(fixture("studies/cs9.json"));
    auto profiles = sample_profiles(ProfileDistribution::load(fixture("personas/cs9.json")), 1, 7);
    auto entries = ScriptedChatProvider::load_script(fixture("scripts/cs9_scripted.json"));
    ScriptEntry fail;
    fail.pattern = "narrative/*";
    fail.error = ProviderErrorKind::rate_limited;
    fail.http_status = 429;
    fail.times = 2;
    entries.insert(entries.begin(), fail);
    ScriptedChatProvider p(entries);
    RunOptions o;
    o.runs_root = tmp.path();
    const RunOutcome out = run_study(study, profiles, default_environment(), {quiet_handle(p), quiet_handle(p)}, o);
    const LoadedRun run = load_run(out.dir);
    bool found = false;
    for (const auto& e : run.stream("S1", "events")) {
      if (e.kind == EventKind::chat && e.payload["tag"] == "narrative/S1") {
        CHECK(e.payload["retries"] == 2);
        found = true;
      }
    }
    CHECK(found);
  }

  TEST_CASE("run ids are derived from the inputs") {
    const StudyConfig study = load_config(fixture("studies/cs9.json"));
    const auto profiles = sample_profiles(ProfileDistribution{}, 2, 1);
    const std::string id = derive_run_id(study, profiles, default_environment(), 7);
    CHECK(id.rfind("CS9-s7-", 0) == 0);
    CHECK(id.size() == std::string("CS9-s7-").size() + 8);
    CHECK(id == derive_run_id(study, profiles, default_environment(), 7));
    CHECK(id != derive_run_id(study, profiles, default_environment(), 8));
  }
}
