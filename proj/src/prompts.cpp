#include <algorithm>

#include "gidea/engine.hpp"

namespace gidea {

namespace {

const char* const kAvatarSystem =
    "You are simulating a participant in an HCI experiment, responding as the given persona. Your replies should "
    "align with the persona's background, preferences, and prior interactions. Stay in character, provide "
    "context-aware responses, and follow the specified output format";

std::string join(const std::vector<std::string>& items, const char* sep = ", ") {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

std::string profile_block(const AvatarProfile& p) {
  std::string out;
  out += "- Subject ID: " + p.subject_id + "\n";
  out += "- Age: " + std::to_string(p.age) + "\n";
  out += "- Gender: " + p.gender + "\n";
  out += "- Household type: " + p.household_type + "\n";
  for (const auto& [k, v] : p.attributes) {
    std::string label = k;
    std::replace(label.begin(), label.end(), '_', ' ');
    if (!label.empty() && label[0] >= 'a' && label[0] <= 'z') label[0] = static_cast<char>(label[0] - 'a' + 'A');
    out += "- " + label + ": " + v + "\n";
  }
  out += "- TIPI Scores: " + p.tipi.describe() + "\n";
  if (!p.narrative.empty()) out += "- Persona: " + p.narrative + "\n";
  return out;
}

std::string activity_block(const ScheduleEntry& e, const char* indent) {
  return std::string(indent) + "Event: " + e.activity + ",\n" + indent + "Reasoning: \"" + e.reasoning + "\",\n" +
         indent + "Duration: " + e.start_time.clock_str() + ", " + e.end_time.clock_str() + "\n";
}

// Up to kPreviousActivities entries before `upto` (exclusive), oldest first.
std::string previous_activities(const SimulationState& state, std::size_t upto, const char* indent) {
  const std::size_t first = upto > kPreviousActivities ? upto - kPreviousActivities : 0;
  std::string out;
  for (std::size_t i = first; i < upto && i < state.schedule.size(); ++i) out += activity_block(state.schedule[i], indent);
  return out.empty() ? std::string(indent) + "None.\n" : out;
}

std::string device_states(const EnvironmentState& env) {
  std::string out;
  for (const auto& [name, attrs] : env.devices) {
    std::vector<std::string> parts;
    for (const auto& [k, v] : attrs) parts.push_back(k + "=" + (v.is_string() ? v.get<std::string>() : v.dump()));
    out += "- " + name + ": " + join(parts) + "\n";
  }
  return out;
}

std::string history(const SimulationState& state) {
  const auto& t = state.transcript;
  const std::size_t first = t.size() > kHistoryTurns ? t.size() - kHistoryTurns : 0;
  std::string out;
  for (std::size_t i = first; i < t.size(); ++i) {
    out += (t[i].speaker == Speaker::assistant ? "Assistant Agent: \"" : "Avatar: \"") + t[i].text + "\"\n";
  }
  return out.empty() ? "None yet.\n" : out;
}

// The role's own notes; other roles' notes never reach this prompt.
std::string own_notes(const SimulationState& state, const char* role) {
  auto it = state.memory.role_notes.find(role);
  if (it == state.memory.role_notes.end() || it->second.empty()) return "";
  std::string out = "Your Private Notes:\n";
  for (const auto& n : it->second) out += "- " + n + "\n";
  return out + "\n";
}

std::string numbered(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += "(" + std::to_string(i + 1) + ") " + items[i] + "\n";
  return out;
}

std::string rating_instructions(const StudyConfig& study, const std::vector<std::string>& metric_ids) {
  std::string out;
  for (const auto& id : metric_ids) {
    const MetricSpec* m = study.find_metric(id);
    if (!m) continue;
    const auto [lo, hi] = m->rating_bounds();
    const char* what = m->kind == MetricKind::ranking ? "a rank" : "a whole number";
    for (const auto& key : m->rating_keys()) {
      out += "RATING[" + key + "]: " + what + " from " + std::to_string(lo) + " to " + std::to_string(hi) + "\n";
    }
  }
  return out;
}

bool last_is_avatar(const SimulationState& state) {
  return !state.transcript.empty() && state.transcript.back().speaker == Speaker::avatar &&
         state.transcript.back().round == state.round_index + 1;
}

std::string assistant_body(const PromptContext& ctx, const SimulationState& state, const StudyConfig& study) {
  const Subject& s = ctx.subject;
  std::string out;
  out += "Objective:\n" + study.objective + "\n\n";
  out += "Research Questions:\n" + numbered(study.research_questions) + "\n";
  if (!study.scenarios.empty()) {
    out += "Scenarios:\n";
    for (const auto& sc : study.scenarios) {
      out += "- " + sc.scenario_id + ": " + sc.narrative;
      if (sc.trigger_hint) out += " (Trigger: " + *sc.trigger_hint + ")";
      out += "\n";
    }
    out += "\n";
  }
  if (!study.metrics.empty()) {
    out += "Measures:\n";
    for (const auto& m : study.metrics) {
      out += "- " + m.metric_id + " (" + to_string(m.kind) + ")";
      if (!m.rubric.empty()) out += ": " + m.rubric;
      out += "\n";
    }
    out += "\n";
  }
  if (!state.schedule.empty()) {
    const std::size_t cur = state.schedule.size() - 1;
    out += "Previous and Current Activity:\nPrevious:\n" + previous_activities(state, cur, "  ");
    out += "Current:\n" + activity_block(state.schedule[cur], "  ") + "\n";
  }
  if (s.env) out += "Environment:\n" + s.env->describe();
  out += "Current Device States:\n" + device_states(state.environment) + "\n";
  out += "Conversation History:\n" + history(state) + "\n";
  out += own_notes(state, "assistant");

  if (ctx.reflection) {
    out += "Reflection Task:\nReflect on how you determined when and how to initiate conversations with the user. "
           "Be specific in your responses:\n" +
           numbered(study.research_questions);
    return out;
  }
  if (last_is_avatar(state)) {
    out += "Task:\nRespond to the user's latest message.\n";
  } else {
    out += "Task:\nBased on the user's current activity and the environment, speak to the user now.\n";
  }
  out += "\nOutput Format:\nWrite only what you say to the user. At the end you may add lines:\n"
         "ACTION: device|action|value for each device you operate\n"
         "NOTE: a private note for yourself\n"
         "END to close the conversation\n";
  return out;
}

std::string avatar_body(const PromptContext& ctx, const SimulationState& state, const StudyConfig& study) {
  const Subject& s = ctx.subject;
  std::string out;
  if (s.profile) out += "You are the subject described by the provided profile:\n" + profile_block(*s.profile) + "\n";
  out += "You are in the environment described by the provided profile:\n";
  if (s.env) out += s.env->describe();
  out += "Current Device States:\n" + device_states(state.environment) + "\n";
  out += "Your tasks are:\n" + study.avatar_role + "\n\n";
  const std::size_t cur = state.schedule.empty() ? 0 : state.schedule.size() - 1;
  out += "Previous Activities:\n" + previous_activities(state, cur, "  ") + "\n";
  if (!state.enriched.empty()) {
    out += "Detailed Current Activity Description:\n" + state.enriched.back().expanded + "\n\n";
  } else if (!state.schedule.empty()) {
    out += "Current Activity:\n" + activity_block(state.schedule.back(), "  ") + "\n";
  }
  out += "Conversation History:\n" + history(state) + "\n";
  out += own_notes(state, "avatar");

  if (ctx.question) {
    out += "Interview Question:\n" + ctx.question->text + "\n\n";
    out += "Answer in character, drawing on your experience during the study.";
    const std::string ratings = rating_instructions(study, ctx.question->metric_ids);
    if (!ratings.empty()) out += " After your answer, add one line per rating:\n" + ratings;
    out += "\n";
    return out;
  }
  const bool replying = !state.transcript.empty() && state.transcript.back().speaker == Speaker::assistant &&
                        state.transcript.back().round == state.round_index + 1;
  if (replying) {
    out += "Reply in character to the assistant's latest message. After your reply, add the line:\n"
           "DECISION: accept, reject or ignore\n";
    const std::string ratings = rating_instructions(study, study.policy.probe_metrics);
    if (!ratings.empty()) out += "and one line per rating:\n" + ratings;
  } else {
    out += "If you want the assistant's help with your current activity, say so in character.\n";
  }
  out += "You may also add lines:\nACTION: device|action|value for each device you operate\n"
         "NOTE: a private thought\nEND to finish the conversation\n";
  return out;
}

}  // namespace

std::vector<std::string> protected_strings(const StudyConfig& study) {
  std::vector<std::string> out = study.research_questions;
  out.push_back(study.assistant_role);
  for (const auto& m : study.metrics) out.push_back(m.rubric);
  out.erase(std::remove(out.begin(), out.end(), std::string()), out.end());
  return out;
}

namespace {

std::vector<std::string> avatar_notes(const SimulationState& state) {
  auto it = state.memory.role_notes.find("avatar");
  return it == state.memory.role_notes.end() ? std::vector<std::string>{} : it->second;
}

}  // namespace

std::vector<ChatMessage> build_prompt(const PromptContext& ctx, const SimulationState& state, const StudyConfig& study) {
  std::vector<ChatMessage> msgs;
  if (ctx.role == PromptRole::assistant) {
    const auto notes = avatar_notes(state);
    msgs.push_back({ChatRole::system, redact_all(study.assistant_role, notes)});
    msgs.push_back({ChatRole::user, redact_all(assistant_body(ctx, state, study), notes)});
  } else {
    const auto secret = protected_strings(study);
    msgs.push_back({ChatRole::system, redact_all(kAvatarSystem, secret)});
    msgs.push_back({ChatRole::user, redact_all(avatar_body(ctx, state, study), secret)});
  }
  return msgs;
}

ChatRequest schedule_request(const Subject& subject, const SimulationState& state, const std::string& tag) {
  const EnvironmentConfig& env = *subject.env;
  std::string body;
  body += profile_block(*subject.profile) + "\n";
  body += "You are doing your activities of daily life in a smart home environment based on the following "
          "instructions and information:\n\n";
  body += "Activity Generation Instructions:\n"
          "1. Generate the next sequential smart-home-based activity, choosing from the Actions, Objects, Modifiers "
          "and Locations.\n"
          "2. Ensure activities are logically connected from the previous activities.\n"
          "3. Be consistent with the Subject Persona Description.\n"
          "4. Start_time and End_time should be reasonable, and the duration should be continuous from the last "
          "known activity.\n"
          "5. Reasoning must reflect the user's personality and motivations.\n\n";
  body += "Locations:\n" + join(env.zones) + ".\n\n";
  body += "Actions:\n" + join(env.activity_actions) + ".\n\n";
  body += "Objects:\n" + join(env.objects) + ".\n\n";
  body += "Modifiers:\n" + join(env.modifiers) + ".\n\n";
  body += "Previous Activities:\n" + previous_activities(state, state.schedule.size(), "  ") + "\n";
  if (state.schedule.empty()) body += "The first activity starts at " + Timestamp::format(state.clock) + ".\n\n";
  body += "Output Requirements:\n"
          "- Output the next activity only.\n"
          "- The output format must be: {\"Start_time\": \"...\", \"Activity\": \"...\", \"End_time\": \"...\", "
          "\"Reasoning\": \"...\" }\n"
          "- Times should be in 12-hour format (e.g. \"2025-02-06 11:48:48 pm\").\n"
          "- Activities should be realistic and coherent.\n"
          "- Please output only valid JSON with no markdown formatting or additional characters.\n";
  ChatRequest req;
  req.temperature = kSimulationTemperature;
  req.request_tag = tag;
  req.messages = {{ChatRole::system, "You are the subject described by the provided profile."},
                  {ChatRole::user, body}};
  return req;
}

ChatRequest enrichment_request(const Subject& subject, const SimulationState& state, const ScheduleEntry& entry,
                               const std::string& tag) {
  const StudyConfig& study = *subject.study;
  std::string body;
  body += "The subject is described by the following components:\n\n";
  body += "Subject Profile:\n" + profile_block(*subject.profile) + "\n";
  body += "Current Activity:\n" + activity_block(entry, "  ") + "\n";
  const std::size_t cur = state.schedule.empty() ? 0 : state.schedule.size() - 1;
  body += "Previous Activities:\n" + previous_activities(state, cur, "  ") + "\n";
  body += "Environment Details:\n" + subject.env->describe() + "Interaction Modifiers: " +
          join(subject.env->modifiers) + "\n\n";
  body += "Interaction Knowledge & Example Scenarios:\n" + study.objective + "\n";
  for (const auto& sc : study.scenarios) body += "- " + sc.narrative + "\n";
  body += "\nExpanded Activity Description Requirements:\n"
          "1. Thoughts & Reactions: Capture the subject's inner thoughts, decision-making, and mood during the "
          "activity.\n"
          "2. Movement & Actions: Show how the subject physically engages with objects and the environment.\n"
          "3. Smart Home Environment: Naturally weave in interactions with the surroundings without explicitly "
          "describing the assistant's behavior.\n\n";
  body += "Output Requirements:\n"
          "- Output only one JSON object with the following keys exactly: \"time_stamp\" and \"Expanded Activity\".\n"
          "- Use 12-hour format (e.g., \"2025-02-06 11:48:48 pm\").\n"
          "- Output valid JSON with no extra text.\n";
  ChatRequest req;
  req.temperature = kSimulationTemperature;
  req.request_tag = tag;
  req.messages = {
      {ChatRole::system,
       "You are an advanced simulation engine that models and expands upon daily activities in a smart home "
       "environment. Your task is to generate a detailed sequence of micro-actions that occur during a scheduled "
       "activity. Each action should logically flow from the previous one, forming a realistic and dynamic "
       "interaction with the environment."},
      {ChatRole::user, redact_all(body, protected_strings(study))}};
  return req;
}

}  // namespace gidea
