#pragma once

// Append-only JSON Lines event streams and the run directory they live in.

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "gidea/config.hpp"

namespace gidea {

enum class EventKind { schedule, enrichment, prompt, chat, turn, state_diff, interview, error, wire };

inline constexpr std::array<std::string_view, 9> kEventKindNames{
    "schedule", "enrichment", "prompt", "chat", "turn", "state_diff", "interview", "error", "wire"};

inline std::string to_string(EventKind k) { return std::string(kEventKindNames[static_cast<std::size_t>(k)]); }

struct TraceEvent {
  std::int64_t seq = 0;
  EventKind kind = EventKind::error;
  nlohmann::json payload;

  // One line, keys sorted, no trailing newline.
  std::string serialize() const;
  static TraceEvent parse(const std::string& line);

  bool operator==(const TraceEvent&) const = default;
};

// One JSONL file. Appends are flushed and fsynced before append() returns.
// Not thread-safe: each stream has exactly one writer.
class EventStream {
 public:
  // Opens (creating if needed) and recovers the last seq from existing lines.
  explicit EventStream(std::filesystem::path path);

  // Requires event.seq == last_seq() + 1, else SequenceError.
  std::int64_t append(const TraceEvent& event);
  // Assigns the next seq and appends.
  std::int64_t emit(EventKind kind, nlohmann::json payload);

  std::int64_t last_seq() const { return last_seq_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::int64_t last_seq_ = 0;
};

std::int64_t append_event(EventStream& stream, const TraceEvent& event);

// Writes a whole file atomically (temp file, fsync, rename).
void write_file_durable(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

inline constexpr const char* kEngineVersion = "gidea-engine/1.0.0";

struct RunManifest {
  std::string run_id;
  std::string study_id;
  std::string config_hash;
  std::uint64_t seed = 0;
  // role -> identity JSON (kind, model_id, base_url, api_key_env, cutoff).
  std::map<std::string, nlohmann::json> providers;
  std::string engine_version = kEngineVersion;
  std::string rng_algorithm;
  // subject_id -> {"status": ..., optional "error"}.
  std::map<std::string, nlohmann::json> subjects;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

// The per-subject streams every run has.
inline constexpr std::array<std::string_view, 5> kSubjectStreams{"schedule", "enriched", "transcript", "env_states",
                                                                 "events"};

struct LoadedRun {
  std::filesystem::path dir;
  RunManifest manifest;
  StudyConfig config;
  // "S1/transcript" -> events in seq order.
  std::map<std::string, std::vector<TraceEvent>> streams;
  // subject_id -> interviews.json content (absent when the file is missing).
  std::map<std::string, nlohmann::json> interviews;
  nlohmann::json profiles;

  const std::vector<TraceEvent>& stream(const std::string& subject, std::string_view name) const;
};

// Verifies the config hash and per-stream sequence integrity. Throws
// IntegrityError naming the stream and seq of the first problem.
LoadedRun load_run(const std::filesystem::path& run_dir);

}  // namespace gidea
