#pragma once

// Deterministic, offline backends: a chat provider that replays a script and
// a bag-of-tokens hash embedder.

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gidea/provider.hpp"

namespace gidea {

// `*` matches any run of characters, `?` exactly one.
bool glob_match(std::string_view pattern, std::string_view text);

struct ScriptEntry {
  // Matched against ChatRequest::request_tag. Ignored when `fingerprint` is set.
  std::string pattern = "*";
  // Matches one exact request (ChatRequest::fingerprint()).
  std::optional<std::string> fingerprint;
  std::string response;
  FinishReason finish_reason = FinishReason::stop;
  // Injected failure instead of a response.
  std::optional<ProviderErrorKind> error;
  int http_status = 0;
  // How many calls this entry answers; 0 means unlimited.
  int times = 1;
};

// Replays an ordered script. Each call takes the first entry that still has
// uses left and matches the request; an unmatched call raises
// ProviderError{exhausted}. Thread-safe.
class ScriptedChatProvider : public ChatProvider {
 public:
  explicit ScriptedChatProvider(std::vector<ScriptEntry> entries, ProviderIdentity identity = default_identity());

  // Accepts either an array of [pattern, response] pairs / entry objects, or
  // {"entries": [...]}.
  static std::vector<ScriptEntry> parse_script(const nlohmann::json& doc);
  static std::vector<ScriptEntry> load_script(const std::filesystem::path& path);
  static ProviderIdentity default_identity();

  ChatResponse complete(const ChatRequest& req) override;
  const ProviderIdentity& identity() const override { return identity_; }

  struct Call {
    std::string request_tag;
    std::string fingerprint;
  };
  std::vector<Call> calls() const;

 private:
  struct Slot {
    ScriptEntry entry;
    int remaining;
  };
  std::vector<Slot> slots_;
  ProviderIdentity identity_;
  mutable std::mutex mu_;
  std::vector<Call> calls_;
};

// Lowercased runs of [a-z0-9] (plus any non-ASCII byte).
std::vector<std::string> hash_tokens(std::string_view text);

// Token-hash bag of words: each token adds 1.0 at FNV-1a-64(token) mod dim.
class HashEmbedder : public Embedder {
 public:
  static constexpr std::size_t kDefaultDimension = 256;

  explicit HashEmbedder(std::size_t dimension = kDefaultDimension);

  static std::uint64_t fnv1a64(std::string_view s);

  std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) override;
  const ProviderIdentity& identity() const override { return identity_; }
  std::size_t dimension() const { return dimension_; }

 private:
  std::size_t dimension_;
  ProviderIdentity identity_;
};

}  // namespace gidea
