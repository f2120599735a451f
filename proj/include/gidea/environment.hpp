#pragma once

// Smart-home environment: the configured devices, their mutable state, and
// the role-scoped memory a simulation carries between rounds.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace gidea {

struct DeviceSpec {
  std::string name;
  std::string zone;
  // "light", "appliance" or "control"; informational.
  std::string category;
  std::vector<std::string> actions;

  bool supports(const std::string& action) const;
  bool operator==(const DeviceSpec&) const = default;
};

struct EnvironmentConfig {
  std::vector<std::string> zones;
  std::vector<DeviceSpec> devices;
  std::vector<std::string> sensing;
  std::vector<std::string> command;
  std::vector<std::string> feedback;
  // Vocabulary offered to the schedule generator.
  std::vector<std::string> activity_actions;
  std::vector<std::string> objects;
  std::vector<std::string> modifiers;

  // Case-insensitive lookup by device name.
  const DeviceSpec* find_device(const std::string& name) const;
  // Zones, devices with their actions, and capabilities as prompt text.
  std::string describe() const;

  bool operator==(const EnvironmentConfig&) const = default;
};

// The one-bedroom home with a furnished living area used when no
// environment file is given.
EnvironmentConfig default_environment();

std::vector<std::string> validate_environment(const EnvironmentConfig& cfg);
// Throws SchemaError on structural problems or the first violation.
EnvironmentConfig environment_from_json(const nlohmann::json& j);
nlohmann::json environment_to_json(const EnvironmentConfig& cfg);
EnvironmentConfig load_environment(const std::filesystem::path& path);

struct DeviceAction {
  std::string device;
  std::string action;
  std::optional<std::string> value;

  bool operator==(const DeviceAction&) const = default;
};

nlohmann::json action_to_json(const DeviceAction& a);

// Attribute -> value (string or integer) for one device.
using DeviceState = std::map<std::string, nlohmann::json>;

struct EnvironmentState {
  // device name -> attribute -> value.
  std::map<std::string, DeviceState> devices;
  // Simulation clock in seconds; 0 until the first activity.
  std::int64_t clock = 0;

  nlohmann::json to_json() const;
  bool operator==(const EnvironmentState&) const = default;
};

// Every configured device with its default attributes: power off on every
// device, levels 0, position closed, activity idle.
EnvironmentState init_environment(const EnvironmentConfig& cfg);

// The (attribute, new value) an action sets on a device in `state`.
// Throws UnsupportedActionError when the action needs a value and has none.
std::pair<std::string, nlohmann::json> action_effect(const DeviceState& device_state,
                                                     const DeviceAction& action);

// Applies actions in order. Throws UnknownDeviceError or UnsupportedActionError
// and leaves `env` untouched when any action is invalid.
EnvironmentState apply_actions(const EnvironmentConfig& cfg, const EnvironmentState& env,
                               const std::vector<DeviceAction>& actions);

struct MemoryState {
  // Transcript sequence numbers, strictly increasing.
  std::vector<std::int64_t> shared_history;
  // Indices into the run's schedule.
  std::vector<std::size_t> activity_history;
  // "assistant" / "avatar" -> private notes.
  std::map<std::string, std::vector<std::string>> role_notes;

  // Throws SequenceError unless seq exceeds the last appended value.
  void append_shared(std::int64_t seq);
};

}  // namespace gidea
