#include "gidea/scripted.hpp"

#include <fstream>
#include <sstream>

#include "json_fields.hpp"

namespace gidea {

bool glob_match(std::string_view pattern, std::string_view text) {
  std::size_t p = 0, t = 0, star = std::string_view::npos, mark = 0;
  while (t < text.size()) {
    if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == text[t])) {
      ++p;
      ++t;
    } else if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      mark = t;
    } else if (star != std::string_view::npos) {
      p = star + 1;
      t = ++mark;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

ScriptedChatProvider::ScriptedChatProvider(std::vector<ScriptEntry> entries, ProviderIdentity identity)
    : identity_(std::move(identity)) {
  slots_.reserve(entries.size());
  for (auto& e : entries) {
    const int remaining = e.times;
    slots_.push_back({std::move(e), remaining});
  }
}

ProviderIdentity ScriptedChatProvider::default_identity() {
  ProviderIdentity id;
  id.kind = ProviderKind::scripted;
  id.model_id = "scripted";
  return id;
}

namespace {

ScriptEntry entry_from_json(const nlohmann::json& j, const std::string& path) {
  ScriptEntry e;
  if (j.is_array()) {
    if (j.size() != 2) throw SchemaError(path, "expected [pattern, response]");
    e.pattern = detail::FieldReader::as_string(j[0], path + "[0]");
    e.response = detail::FieldReader::as_string(j[1], path + "[1]");
    return e;
  }
  detail::FieldReader r(j, path);
  e.pattern = r.string_or("match", "*");
  if (const auto* f = r.optional("fingerprint")) e.fingerprint = detail::FieldReader::as_string(*f, r.child("fingerprint"));
  e.response = r.string_or("response", "");
  if (const auto* fr = r.optional("finish_reason")) {
    const auto s = detail::FieldReader::as_string(*fr, r.child("finish_reason"));
    if (s == "stop") {
      e.finish_reason = FinishReason::stop;
    } else if (s == "length") {
      e.finish_reason = FinishReason::length;
    } else if (s == "refusal") {
      e.finish_reason = FinishReason::refusal;
    } else {
      throw SchemaError(r.child("finish_reason"), "invalid value '" + s + "'");
    }
  }
  if (const auto* err = r.optional("error")) {
    const auto s = detail::FieldReader::as_string(*err, r.child("error"));
    static const std::pair<const char*, ProviderErrorKind> kinds[] = {
        {"transport", ProviderErrorKind::transport},   {"http_status", ProviderErrorKind::http_status},
        {"rate_limited", ProviderErrorKind::rate_limited}, {"refusal", ProviderErrorKind::refusal},
        {"exhausted", ProviderErrorKind::exhausted},    {"configuration", ProviderErrorKind::configuration}};
    for (const auto& [name, kind] : kinds) {
      if (s == name) e.error = kind;
    }
    if (!e.error) throw SchemaError(r.child("error"), "invalid value '" + s + "'");
  }
  if (const auto* hs = r.optional("http_status")) e.http_status = static_cast<int>(detail::FieldReader::as_integer(*hs, r.child("http_status")));
  if (const auto* t = r.optional("times")) {
    e.times = static_cast<int>(detail::FieldReader::as_integer(*t, r.child("times")));
    if (e.times < 0) throw SchemaError(r.child("times"), "must be >= 0");
  }
  r.finish();
  if (!e.error && e.response.empty() && e.finish_reason != FinishReason::refusal) {
    throw SchemaError(path, "entry needs a response or an error");
  }
  return e;
}

}  // namespace

std::vector<ScriptEntry> ScriptedChatProvider::parse_script(const nlohmann::json& doc) {
  const nlohmann::json* list = &doc;
  if (doc.is_object()) {
    detail::FieldReader r(doc, "");
    list = &r.required("entries");
    r.finish();
  }
  if (!list->is_array()) throw SchemaError("entries", "expected an array");
  std::vector<ScriptEntry> out;
  for (std::size_t i = 0; i < list->size(); ++i) out.push_back(entry_from_json((*list)[i], "entries[" + std::to_string(i) + "]"));
  return out;
}

std::vector<ScriptEntry> ScriptedChatProvider::load_script(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read script " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("malformed script " + path.string() + ": " + e.what());
  }
  return parse_script(doc);
}

namespace {

int word_count(std::string_view s) {
  int n = 0;
  bool in_word = false;
  for (char c : s) {
    const bool space = c == ' ' || c == '\n' || c == '\t' || c == '\r';
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

}  // namespace

ChatResponse ScriptedChatProvider::complete(const ChatRequest& req) {
  const std::string fp = req.fingerprint();
  std::lock_guard lock(mu_);
  calls_.push_back({req.request_tag, fp});
  for (auto& slot : slots_) {
    if (slot.entry.times != 0 && slot.remaining <= 0) continue;
    const bool hit = slot.entry.fingerprint ? *slot.entry.fingerprint == fp : glob_match(slot.entry.pattern, req.request_tag);
    if (!hit) continue;
    if (slot.entry.times != 0) --slot.remaining;
    if (slot.entry.error) {
      throw ProviderError(*slot.entry.error, "scripted " + to_string(*slot.entry.error) + " for " + req.request_tag,
                          slot.entry.http_status);
    }
    ChatResponse r;
    r.text = slot.entry.response;
    r.finish_reason = slot.entry.finish_reason;
    int prompt_words = 0;
    for (const auto& m : req.messages) prompt_words += word_count(m.text);
    r.usage = {prompt_words, word_count(r.text)};
    return r;
  }
  throw ProviderError(ProviderErrorKind::exhausted, "script has no response left for " + req.request_tag);
}

std::vector<ScriptedChatProvider::Call> ScriptedChatProvider::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::vector<std::string> hash_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c >= 0x80) {
      cur.push_back(static_cast<char>(c));
    } else if (c >= 'A' && c <= 'Z') {
      cur.push_back(static_cast<char>(c - 'A' + 'a'));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

HashEmbedder::HashEmbedder(std::size_t dimension) : dimension_(dimension) {
  if (dimension_ == 0) throw PreconditionError("embedding dimension must be positive");
  identity_.kind = ProviderKind::scripted;
  identity_.model_id = "hash-bag-" + std::to_string(dimension_);
}

std::uint64_t HashEmbedder::fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<EmbeddingVector> HashEmbedder::embed_batch(const std::vector<std::string>& texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    EmbeddingVector v{std::vector<double>(dimension_, 0.0), identity_.model_id};
    for (const auto& tok : hash_tokens(t)) v.values[fnv1a64(tok) % dimension_] += 1.0;
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace gidea
