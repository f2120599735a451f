#include "gidea/environment.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "gidea/errors.hpp"
#include "json_fields.hpp"

namespace gidea {

namespace {

std::string lowercase(std::string s) {
  for (auto& c : s) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return s;
}

std::string join(const std::vector<std::string>& items, const char* sep = ", ") {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

std::string snake(std::string s) {
  for (auto& c : s) {
    if (c == ' ' || c == '-') c = '_';
  }
  return s;
}

nlohmann::json value_json(const std::string& v) {
  if (!v.empty() && v.size() < 10 && std::all_of(v.begin(), v.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    return std::stoi(v);
  }
  if (v.size() > 1 && v.size() < 10 && v[0] == '-' &&
      std::all_of(v.begin() + 1, v.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    return std::stoi(v);
  }
  return v;
}

// Attribute an action writes and that attribute's default value.
std::pair<std::string, nlohmann::json> attribute_of(const std::string& action_lower) {
  if (action_lower == "turn on" || action_lower == "turn off" || action_lower == "toggle") return {"power", "off"};
  if (action_lower == "open" || action_lower == "close") return {"position", "closed"};
  if (action_lower == "start" || action_lower == "pause" || action_lower == "return to base" ||
      action_lower == "watch" || action_lower == "listen" || action_lower == "play") {
    return {"activity", "idle"};
  }
  if (action_lower == "press") return {"presses", 0};
  if (action_lower == "adjust") return {"level", 0};
  if (action_lower.rfind("adjust ", 0) == 0) return {snake(action_lower.substr(7)), 0};
  if (action_lower == "change color mode") return {"color_mode", "default"};
  return {"last_action", ""};
}

}  // namespace

bool DeviceSpec::supports(const std::string& action) const {
  const std::string a = lowercase(action);
  return std::any_of(actions.begin(), actions.end(), [&](const std::string& x) { return lowercase(x) == a; });
}

const DeviceSpec* EnvironmentConfig::find_device(const std::string& name) const {
  const std::string n = lowercase(name);
  for (const auto& d : devices) {
    if (lowercase(d.name) == n) return &d;
  }
  return nullptr;
}

std::string EnvironmentConfig::describe() const {
  std::string out = "Environmental Zones: " + join(zones) + "\n";
  out += "Devices and Supported Actions:\n";
  for (const auto& d : devices) out += "- " + d.name + " (" + d.zone + "): " + join(d.actions) + "\n";
  if (!sensing.empty()) out += "Sensing: " + join(sensing) + "\n";
  if (!command.empty()) out += "Command Modes: " + join(command) + "\n";
  if (!feedback.empty()) out += "Feedback Channels: " + join(feedback) + "\n";
  return out;
}

EnvironmentConfig default_environment() {
  EnvironmentConfig cfg;
  cfg.zones = {"main room", "bed area", "wardrobe area", "toilet"};
  const std::vector<std::string> light_actions{"turn on", "turn off", "adjust brightness", "adjust color temperature",
                                               "change color mode"};
  for (const char* name : {"ceiling light", "downlight (TV)", "downlight (sofa)", "ambient light strip", "floor lamp"}) {
    cfg.devices.push_back({name, "main room", "light", light_actions});
  }
  cfg.devices.push_back({"TV", "main room", "appliance", {"turn on", "turn off", "adjust volume", "adjust mode", "watch"}});
  cfg.devices.push_back(
      {"speaker", "main room", "appliance", {"turn on", "turn off", "adjust volume", "play", "listen", "pause"}});
  cfg.devices.push_back({"air conditioner", "main room", "appliance",
                         {"turn on", "turn off", "adjust temperature", "adjust mode", "adjust speed"}});
  cfg.devices.push_back({"fan", "main room", "appliance", {"turn on", "turn off", "adjust speed", "adjust mode"}});
  cfg.devices.push_back({"humidifier", "main room", "appliance", {"turn on", "turn off", "adjust level", "adjust mode"}});
  cfg.devices.push_back({"floor sweeper", "main room", "appliance", {"start", "pause", "return to base", "adjust mode"}});
  cfg.devices.push_back({"smart curtain", "main room", "appliance", {"open", "close", "adjust level"}});
  cfg.devices.push_back({"light switch panel", "main room", "control", {"press", "toggle"}});
  cfg.devices.push_back({"remote control", "main room", "control", {"press", "adjust"}});
  cfg.devices.push_back({"device buttons", "main room", "control", {"press", "toggle"}});
  cfg.sensing = {"user position", "posture", "movement", "gesture"};
  cfg.command = {"voice", "gesture", "physical button", "remote control"};
  cfg.feedback = {"visual display", "ambient changes", "voice confirmation"};
  cfg.activity_actions = {"General", "Physical(Fine-Grained)", "Digital(Interface-Level)", "Cleaning"};
  cfg.objects = {"Consumables", "Tools", "Furniture", "Appliance"};
  cfg.modifiers = {"Carefully"};
  return cfg;
}

std::vector<std::string> validate_environment(const EnvironmentConfig& cfg) {
  std::vector<std::string> out;
  const std::set<std::string> zones(cfg.zones.begin(), cfg.zones.end());
  std::set<std::string> names;
  for (std::size_t i = 0; i < cfg.devices.size(); ++i) {
    const auto& d = cfg.devices[i];
    const std::string path = "devices[" + std::to_string(i) + "]";
    if (d.name.empty()) out.push_back(path + ".name: must be non-empty");
    if (!names.insert(lowercase(d.name)).second) out.push_back(path + ".name: duplicate device '" + d.name + "'");
    if (!zones.count(d.zone)) out.push_back(path + ".zone: '" + d.zone + "' is not a configured zone");
    if (d.actions.empty()) out.push_back(path + ".actions: must be non-empty");
  }
  return out;
}

EnvironmentConfig environment_from_json(const nlohmann::json& j) {
  detail::FieldReader r(j, "environment");
  EnvironmentConfig cfg;
  cfg.zones = r.strings("zones");
  const auto& devs = r.required("devices");
  if (!devs.is_array()) throw SchemaError("environment.devices", "expected an array");
  for (std::size_t i = 0; i < devs.size(); ++i) {
    detail::FieldReader dr(devs[i], "environment.devices[" + std::to_string(i) + "]");
    DeviceSpec d;
    d.name = dr.string("name");
    d.zone = dr.string("zone");
    d.category = dr.string_or("category", "");
    d.actions = dr.strings("actions");
    dr.finish();
    cfg.devices.push_back(std::move(d));
  }
  if (const auto* c = r.optional("capabilities")) {
    detail::FieldReader cr(*c, r.child("capabilities"));
    if (cr.has("sensing")) cfg.sensing = cr.strings("sensing");
    if (cr.has("command")) cfg.command = cr.strings("command");
    if (cr.has("feedback")) cfg.feedback = cr.strings("feedback");
    cr.finish();
  }
  if (const auto* v = r.optional("activity_vocabulary")) {
    detail::FieldReader vr(*v, r.child("activity_vocabulary"));
    if (vr.has("actions")) cfg.activity_actions = vr.strings("actions");
    if (vr.has("objects")) cfg.objects = vr.strings("objects");
    if (vr.has("modifiers")) cfg.modifiers = vr.strings("modifiers");
    vr.finish();
  }
  r.finish();
  const auto bad = validate_environment(cfg);
  if (!bad.empty()) {
    const auto colon = bad.front().find(':');
    throw SchemaError("environment." + bad.front().substr(0, colon), bad.front().substr(colon + 2));
  }
  return cfg;
}

nlohmann::json environment_to_json(const EnvironmentConfig& cfg) {
  nlohmann::json devs = nlohmann::json::array();
  for (const auto& d : cfg.devices) {
    nlohmann::json dj{{"name", d.name}, {"zone", d.zone}, {"actions", d.actions}};
    if (!d.category.empty()) dj["category"] = d.category;
    devs.push_back(dj);
  }
  return {{"zones", cfg.zones},
          {"devices", devs},
          {"capabilities", {{"sensing", cfg.sensing}, {"command", cfg.command}, {"feedback", cfg.feedback}}},
          {"activity_vocabulary",
           {{"actions", cfg.activity_actions}, {"objects", cfg.objects}, {"modifiers", cfg.modifiers}}}};
}

EnvironmentConfig load_environment(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read environment " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return environment_from_json(nlohmann::json::parse(ss.str()));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("malformed environment " + path.string() + ": " + e.what());
  }
}

nlohmann::json action_to_json(const DeviceAction& a) {
  nlohmann::json j{{"device", a.device}, {"action", a.action}};
  if (a.value) j["value"] = *a.value;
  return j;
}

nlohmann::json EnvironmentState::to_json() const {
  nlohmann::json d = nlohmann::json::object();
  for (const auto& [name, attrs] : devices) d[name] = attrs;
  return {{"clock", clock}, {"devices", d}};
}

EnvironmentState init_environment(const EnvironmentConfig& cfg) {
  EnvironmentState s;
  for (const auto& d : cfg.devices) {
    auto& attrs = s.devices[d.name];
    attrs.emplace("power", "off");
    for (const auto& a : d.actions) {
      auto [attr, def] = attribute_of(lowercase(a));
      attrs.emplace(attr, def);
    }
  }
  return s;
}

std::pair<std::string, nlohmann::json> action_effect(const DeviceState& device_state,
                                                     const DeviceAction& action) {
  const std::string a = lowercase(action.action);
  auto [attr, def] = attribute_of(a);
  if (attr == "power") {
    if (a == "toggle") {
      auto it = device_state.find("power");
      const bool on = it != device_state.end() && it->second == "on";
      return {attr, on ? "off" : "on"};
    }
    return {attr, a == "turn on" ? "on" : "off"};
  }
  if (attr == "position") return {attr, a == "open" ? "open" : "closed"};
  if (attr == "activity") {
    if (a == "start") return {attr, "running"};
    if (a == "pause") return {attr, "paused"};
    if (a == "return to base") return {attr, "docked"};
    return {attr, a};
  }
  if (attr == "presses") {
    auto it = device_state.find("presses");
    const long long n = it != device_state.end() && it->second.is_number_integer() ? it->second.get<long long>() : 0;
    return {attr, n + 1};
  }
  if (attr == "last_action") return {attr, a};
  if (!action.value || action.value->empty()) {
    throw UnsupportedActionError("action '" + action.action + "' on '" + action.device + "' needs a value");
  }
  return {attr, value_json(*action.value)};
}

EnvironmentState apply_actions(const EnvironmentConfig& cfg, const EnvironmentState& env,
                               const std::vector<DeviceAction>& actions) {
  EnvironmentState next = env;
  for (const auto& act : actions) {
    const DeviceSpec* dev = cfg.find_device(act.device);
    if (dev == nullptr || !next.devices.count(dev->name)) throw UnknownDeviceError("unknown device '" + act.device + "'");
    if (!dev->supports(act.action)) {
      throw UnsupportedActionError("device '" + dev->name + "' does not support '" + act.action + "'");
    }
    auto& attrs = next.devices[dev->name];
    auto [attr, value] = action_effect(attrs, act);
    attrs[attr] = std::move(value);
  }
  return next;
}

void MemoryState::append_shared(std::int64_t seq) {
  if (!shared_history.empty() && seq <= shared_history.back()) {
    throw SequenceError("shared history seq " + std::to_string(seq) + " does not follow " +
                        std::to_string(shared_history.back()));
  }
  shared_history.push_back(seq);
}

}  // namespace gidea
