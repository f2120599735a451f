#pragma once

// Model access contracts. Everything that talks to a language model or an
// embedding model goes through ChatProvider / Embedder.

#include <chrono>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gidea/config.hpp"
#include "gidea/errors.hpp"

namespace gidea {

inline constexpr double kSimulationTemperature = 0.7;
inline constexpr double kEvaluationTemperature = 0.0;
inline constexpr int kDefaultMaxOutputTokens = 1024;

enum class ChatRole { system, user, assistant_turn };
enum class FinishReason { stop, length, refusal };
enum class ProviderKind { live_http, scripted };

std::string to_string(ChatRole role);
std::string to_string(FinishReason reason);
std::string to_string(ProviderKind kind);

struct ChatMessage {
  ChatRole role = ChatRole::user;
  std::string text;

  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  double temperature = kSimulationTemperature;
  int max_output_tokens = kDefaultMaxOutputTokens;
  std::string model_id;
  std::string request_tag;

  // Throws PreconditionError when the request breaks its invariants.
  void validate() const;
  // Hex digest of everything except request_tag.
  std::string fingerprint() const;
};

struct TokenUsage {
  int prompt = 0;
  int completion = 0;
};

struct ChatResponse {
  std::string text;
  FinishReason finish_reason = FinishReason::stop;
  TokenUsage usage;
  // Attempts taken by chat(); 1 when the first try succeeded.
  int attempts = 1;
};

struct EmbeddingVector {
  std::vector<double> values;
  std::string model_id;
};

struct ProviderIdentity {
  ProviderKind kind = ProviderKind::scripted;
  std::string base_url;
  std::string model_id;
  std::string api_key_env;
  std::optional<Date> knowledge_cutoff;

  // Never contains key material, only the variable name.
  nlohmann::json to_json() const;
  static ProviderIdentity from_json(const nlohmann::json& j);
  std::vector<std::string> violations() const;
};

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  virtual ChatResponse complete(const ChatRequest& req) = 0;
  virtual const ProviderIdentity& identity() const = 0;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) = 0;
  virtual const ProviderIdentity& identity() const = 0;
};

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds base_delay{1000};
  double factor = 2.0;

  std::chrono::milliseconds delay_before(int attempt) const;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

Sleeper thread_sleeper();
Sleeper no_sleep();

// Validates the request, then calls the provider with bounded exponential
// backoff on retryable failures. Auth and other 4xx errors surface at once.
ChatResponse chat(ChatProvider& provider, const ChatRequest& req, const RetryPolicy& policy = {},
                  const Sleeper& sleep = thread_sleeper());

// Called after every successful chat() made through a ModelHandle.
using ChatObserver = std::function<void(const ChatRequest&, const ChatResponse&)>;

// A provider plus the call policy the caller wants applied to it.
struct ModelHandle {
  ChatProvider* provider = nullptr;
  RetryPolicy retry;
  Sleeper sleep = thread_sleeper();
  ChatObserver observer;

  // Fills an empty model_id from the provider identity, runs chat() and
  // notifies the observer.
  ChatResponse call(ChatRequest req) const;
};

// Order-preserving batch embedding under the same retry rules.
std::vector<EmbeddingVector> embed(Embedder& embedder, const std::vector<std::string>& texts,
                                   const RetryPolicy& policy = {}, const Sleeper& sleep = thread_sleeper());

}  // namespace gidea
