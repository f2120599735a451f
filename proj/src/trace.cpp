#include "gidea/trace.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gidea/digest.hpp"
#include "gidea/errors.hpp"

namespace gidea {

namespace fs = std::filesystem;

std::string TraceEvent::serialize() const {
  return nlohmann::json{{"kind", to_string(kind)}, {"payload", payload}, {"seq", seq}}.dump();
}

TraceEvent TraceEvent::parse(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  if (!j.is_object() || j.size() != 3 || !j.contains("seq") || !j["seq"].is_number_integer() || !j.contains("kind") ||
      !j["kind"].is_string() || !j.contains("payload")) {
    throw ParseError("not a trace event");
  }
  const auto kind = detail::enum_from_name<EventKind>(j["kind"].get<std::string>(), kEventKindNames);
  if (!kind) throw ParseError("unknown event kind '" + j["kind"].get<std::string>() + "'");
  return {j["seq"].get<std::int64_t>(), *kind, j["payload"]};
}

namespace {

void write_all(int fd, const std::string& bytes, const fs::path& path) {
  std::size_t off = 0;
  while (off < bytes.size()) {
    const ssize_t n = ::write(fd, bytes.data() + off, bytes.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError("write " + path.string() + ": " + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

}  // namespace

EventStream::EventStream(fs::path path) : path_(std::move(path)) {
  if (fs::exists(path_)) {
    const auto lines = read_lines(path_);
    if (!lines.empty()) {
      try {
        last_seq_ = TraceEvent::parse(lines.back()).seq;
      } catch (const std::exception& e) {
        throw IoError("corrupt stream " + path_.string() + ": " + e.what());
      }
    }
  } else {
    if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
    std::ofstream touch(path_, std::ios::binary);
    if (!touch) throw IoError("cannot create " + path_.string());
  }
}

std::int64_t EventStream::append(const TraceEvent& event) {
  if (event.seq != last_seq_ + 1) {
    throw SequenceError(path_.string() + ": expected seq " + std::to_string(last_seq_ + 1) + ", got " +
                        std::to_string(event.seq));
  }
  const std::string line = event.serialize() + "\n";
  const int fd = ::open(path_.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (fd < 0) throw IoError("open " + path_.string() + ": " + std::strerror(errno));
  try {
    write_all(fd, line, path_);
    if (::fsync(fd) != 0) throw IoError("fsync " + path_.string() + ": " + std::strerror(errno));
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);
  last_seq_ = event.seq;
  return last_seq_;
}

std::int64_t EventStream::emit(EventKind kind, nlohmann::json payload) {
  return append({last_seq_ + 1, kind, std::move(payload)});
}

std::int64_t append_event(EventStream& stream, const TraceEvent& event) { return stream.append(event); }

void write_file_durable(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw IoError("open " + tmp.string() + ": " + std::strerror(errno));
  try {
    write_all(fd, bytes, tmp);
    if (::fsync(fd) != 0) throw IoError("fsync " + tmp.string() + ": " + std::strerror(errno));
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("rename " + tmp.string() + ": " + ec.message());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json RunManifest::to_json() const {
  return {{"run_id", run_id},
          {"study_id", study_id},
          {"config_hash", config_hash},
          {"seed", seed},
          {"providers", providers},
          {"engine_version", engine_version},
          {"rng_algorithm", rng_algorithm},
          {"subjects", subjects}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  RunManifest m;
  try {
    m.run_id = j.at("run_id").get<std::string>();
    m.study_id = j.at("study_id").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.providers = j.at("providers").get<std::map<std::string, nlohmann::json>>();
    m.engine_version = j.at("engine_version").get<std::string>();
    m.rng_algorithm = j.at("rng_algorithm").get<std::string>();
    m.subjects = j.at("subjects").get<std::map<std::string, nlohmann::json>>();
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError("manifest.json", 0, std::string("malformed manifest: ") + e.what());
  }
  return m;
}

const std::vector<TraceEvent>& LoadedRun::stream(const std::string& subject, std::string_view name) const {
  const auto it = streams.find(subject + "/" + std::string(name));
  if (it == streams.end()) throw PreconditionError("run has no stream " + subject + "/" + std::string(name));
  return it->second;
}

namespace {

std::vector<TraceEvent> load_stream(const fs::path& path, const std::string& name) {
  if (!fs::exists(path)) throw IntegrityError(name, 0, "stream file is missing");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError(name, 0, "stream file is unreadable");
  std::vector<TraceEvent> out;
  std::string line;
  while (std::getline(in, line)) {
    const std::int64_t expected = static_cast<std::int64_t>(out.size()) + 1;
    if (line.empty()) throw IntegrityError(name, expected, "blank line");
    TraceEvent e;
    try {
      e = TraceEvent::parse(line);
    } catch (const std::exception& ex) {
      throw IntegrityError(name, expected, std::string("unparseable event: ") + ex.what());
    }
    if (e.seq != expected) {
      throw IntegrityError(name, expected, "expected seq " + std::to_string(expected) + ", found " + std::to_string(e.seq));
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace

LoadedRun load_run(const fs::path& run_dir) {
  if (!fs::is_directory(run_dir)) throw IoError("run directory " + run_dir.string() + " does not exist");
  LoadedRun run;
  run.dir = run_dir;
  nlohmann::json manifest_doc;
  try {
    manifest_doc = nlohmann::json::parse(read_file(run_dir / "manifest.json"));
  } catch (const nlohmann::json::parse_error& e) {
    throw IntegrityError("manifest.json", 0, std::string("unparseable: ") + e.what());
  } catch (const IoError& e) {
    throw IntegrityError("manifest.json", 0, e.what());
  }
  run.manifest = RunManifest::from_json(manifest_doc);

  std::string config_bytes;
  try {
    config_bytes = read_file(run_dir / "config.json");
  } catch (const IoError& e) {
    throw IntegrityError("config.json", 0, e.what());
  }
  if (sha256_hex(config_bytes) != run.manifest.config_hash) {
    throw IntegrityError("config.json", 0, "content hash does not match the manifest");
  }
  try {
    run.config = parse_config(config_bytes);
  } catch (const Error& e) {
    throw IntegrityError("config.json", 0, e.what());
  }
  if (fs::exists(run_dir / "profiles.json")) run.profiles = nlohmann::json::parse(read_file(run_dir / "profiles.json"));

  for (const auto& [subject, info] : run.manifest.subjects) {
    for (const auto name : kSubjectStreams) {
      const std::string key = subject + "/" + std::string(name);
      auto events = load_stream(run_dir / subject / (std::string(name) + ".jsonl"), key);
      if (info.contains("streams") && info["streams"].contains(std::string(name))) {
        const auto recorded = info["streams"][std::string(name)].get<std::int64_t>();
        const auto found = static_cast<std::int64_t>(events.size());
        if (found != recorded) {
          throw IntegrityError(key, std::min(found, recorded) + 1,
                               "manifest records " + std::to_string(recorded) + " events, found " + std::to_string(found));
        }
      }
      run.streams[key] = std::move(events);
    }
    const fs::path iv = run_dir / subject / "interviews.json";
    if (fs::exists(iv)) {
      try {
        run.interviews[subject] = nlohmann::json::parse(read_file(iv));
      } catch (const nlohmann::json::parse_error& e) {
        throw IntegrityError(subject + "/interviews", 0, std::string("unparseable: ") + e.what());
      }
    }
  }
  if (fs::exists(run_dir / "wire.jsonl")) run.streams["wire"] = load_stream(run_dir / "wire.jsonl", "wire");
  return run;
}

}  // namespace gidea
