#include <algorithm>

#include "gidea/engine.hpp"
#include "gidea/errors.hpp"

namespace gidea {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string upper(std::string s) {
  for (auto& c : s) {
    if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
  }
  return s;
}

std::string lower(std::string s) {
  for (auto& c : s) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return s;
}

// Strips surrounding markdown emphasis and list markers a model may add.
std::string unadorned(const std::string& line) {
  std::string s = trim(line);
  while (!s.empty() && (s.front() == '*' || s.front() == '-' || s.front() == '_' || s.front() == '`')) s.erase(0, 1);
  while (!s.empty() && (s.back() == '*' || s.back() == '_' || s.back() == '`')) s.pop_back();
  return trim(s);
}

bool parse_int(const std::string& text, int& out) {
  const std::string s = trim(text);
  if (s.empty() || s.size() > 9) return false;
  std::size_t i = (s[0] == '-' || s[0] == '+') ? 1 : 0;
  if (i == s.size()) return false;
  for (std::size_t k = i; k < s.size(); ++k) {
    if (s[k] < '0' || s[k] > '9') return false;
  }
  out = std::stoi(s);
  return true;
}

}  // namespace

Trailer parse_trailer(const std::string& reply) {
  Trailer t;
  std::vector<std::string> kept;
  std::size_t start = 0;
  while (start <= reply.size()) {
    auto nl = reply.find('\n', start);
    if (nl == std::string::npos) nl = reply.size();
    const std::string raw = reply.substr(start, nl - start);
    start = nl + 1;

    const std::string line = unadorned(raw);
    const std::string head = upper(line);
    if (head.rfind("DECISION:", 0) == 0) {
      const std::string v = lower(unadorned(line.substr(9)));
      if (v == "accept") {
        t.decision = Decision::accept;
      } else if (v == "reject") {
        t.decision = Decision::reject;
      } else if (v == "ignore") {
        t.decision = Decision::ignore;
      } else {
        throw FormatError("invalid decision '" + v + "'");
      }
    } else if (head.rfind("RATING[", 0) == 0) {
      const auto close = line.find(']');
      const auto colon = close == std::string::npos ? std::string::npos : line.find(':', close);
      if (colon == std::string::npos) throw FormatError("malformed rating line '" + line + "'");
      const std::string key = trim(line.substr(7, close - 7));
      int value = 0;
      if (key.empty() || !parse_int(line.substr(colon + 1), value)) {
        throw FormatError("malformed rating line '" + line + "'");
      }
      t.ratings[key] = value;
    } else if (head.rfind("ACTION:", 0) == 0) {
      std::vector<std::string> parts;
      std::string rest = line.substr(7);
      std::size_t p = 0;
      while (true) {
        const auto bar = rest.find('|', p);
        parts.push_back(trim(rest.substr(p, bar == std::string::npos ? std::string::npos : bar - p)));
        if (bar == std::string::npos) break;
        p = bar + 1;
      }
      if (parts.size() < 2 || parts.size() > 3 || parts[0].empty() || parts[1].empty()) {
        throw FormatError("malformed action line '" + line + "'");
      }
      DeviceAction a{parts[0], lower(parts[1]), std::nullopt};
      if (parts.size() == 3 && !parts[2].empty()) a.value = parts[2];
      t.actions.push_back(std::move(a));
    } else if (head.rfind("NOTE:", 0) == 0) {
      const std::string note = trim(line.substr(5));
      if (!note.empty()) t.notes.push_back(note);
    } else if (head == "END") {
      t.end = true;
    } else {
      kept.push_back(raw);
    }
  }
  std::string text;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (i) text += "\n";
    text += kept[i];
  }
  t.text = trim(text);
  return t;
}

std::optional<std::string> repair_json_output(const std::string& raw) {
  std::string s = raw;
  const auto fence = s.find("```");
  if (fence != std::string::npos) {
    auto body = s.find('\n', fence);
    body = body == std::string::npos ? fence + 3 : body + 1;
    const auto close = s.find("```", body);
    s = s.substr(body, close == std::string::npos ? std::string::npos : close - body);
  }
  const auto open = s.find('{');
  if (open == std::string::npos) return std::nullopt;
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return s.substr(open, i - open + 1);
    }
  }
  return std::nullopt;
}

std::string redact_all(std::string text, const std::vector<std::string>& secrets) {
  static const std::string kMask = "[redacted]";
  std::vector<std::string> list;
  for (const auto& s : secrets) {
    if (!s.empty()) list.push_back(s);
  }
  std::sort(list.begin(), list.end(), [](const std::string& a, const std::string& b) {
    return a.size() != b.size() ? a.size() > b.size() : a < b;
  });
  list.erase(std::unique(list.begin(), list.end()), list.end());

  auto any_left = [&] {
    return std::any_of(list.begin(), list.end(), [&](const std::string& s) { return text.find(s) != std::string::npos; });
  };
  for (int pass = 0; pass < 8 && any_left(); ++pass) {
    for (const auto& s : list) {
      const std::string& mask = kMask.find(s) == std::string::npos ? kMask : std::string();
      for (auto pos = text.find(s); pos != std::string::npos; pos = text.find(s, pos + mask.size())) {
        text.replace(pos, s.size(), mask);
      }
    }
  }
  // Masks can, in contrived cases, splice a new match; deletion always
  // shrinks the text, so this terminates.
  while (any_left()) {
    for (const auto& s : list) {
      for (auto pos = text.find(s); pos != std::string::npos; pos = text.find(s)) text.erase(pos, s.size());
    }
  }
  return text;
}

}  // namespace gidea
