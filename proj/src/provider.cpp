#include "gidea/provider.hpp"

#include <cmath>
#include <thread>

#include "gidea/digest.hpp"
#include "json_fields.hpp"

namespace gidea {

std::string to_string(ChatRole role) {
  switch (role) {
    case ChatRole::system:
      return "system";
    case ChatRole::user:
      return "user";
    case ChatRole::assistant_turn:
      return "assistant_turn";
  }
  return "user";
}

std::string to_string(FinishReason reason) {
  switch (reason) {
    case FinishReason::stop:
      return "stop";
    case FinishReason::length:
      return "length";
    case FinishReason::refusal:
      return "refusal";
  }
  return "stop";
}

std::string to_string(ProviderKind kind) { return kind == ProviderKind::live_http ? "live_http" : "scripted"; }

void ChatRequest::validate() const {
  if (messages.empty()) throw PreconditionError("chat request has no messages");
  if (messages.front().role != ChatRole::system) throw PreconditionError("first chat message must be the system message");
  if (!(temperature >= 0.0)) throw PreconditionError("temperature must be >= 0");
  if (max_output_tokens <= 0) throw PreconditionError("max_output_tokens must be positive");
}

std::string ChatRequest::fingerprint() const {
  nlohmann::json j;
  j["model"] = model_id;
  j["temperature"] = temperature;
  j["max_tokens"] = max_output_tokens;
  j["messages"] = nlohmann::json::array();
  for (const auto& m : messages) j["messages"].push_back({{"role", to_string(m.role)}, {"text", m.text}});
  return sha256_hex(j.dump());
}

nlohmann::json ProviderIdentity::to_json() const {
  nlohmann::json j{{"kind", to_string(kind)}, {"model_id", model_id}};
  if (!base_url.empty()) j["base_url"] = base_url;
  if (!api_key_env.empty()) j["api_key_env"] = api_key_env;
  if (knowledge_cutoff) j["knowledge_cutoff"] = knowledge_cutoff->str();
  return j;
}

ProviderIdentity ProviderIdentity::from_json(const nlohmann::json& j) {
  detail::FieldReader r(j, "provider");
  ProviderIdentity id;
  const std::string kind = r.string("kind");
  if (kind == "live_http") {
    id.kind = ProviderKind::live_http;
  } else if (kind == "scripted") {
    id.kind = ProviderKind::scripted;
  } else {
    throw SchemaError(r.child("kind"), "invalid value '" + kind + "'");
  }
  id.model_id = r.string("model_id");
  id.base_url = r.string_or("base_url", "");
  id.api_key_env = r.string_or("api_key_env", "");
  if (const auto* c = r.optional("knowledge_cutoff")) {
    const std::string s = detail::FieldReader::as_string(*c, r.child("knowledge_cutoff"));
    id.knowledge_cutoff = Date::parse(s);
    if (!id.knowledge_cutoff) throw SchemaError(r.child("knowledge_cutoff"), "not a valid date '" + s + "'");
  }
  r.finish();
  auto v = id.violations();
  if (!v.empty()) throw SchemaError("provider", v.front());
  return id;
}

std::vector<std::string> ProviderIdentity::violations() const {
  std::vector<std::string> out;
  if (kind == ProviderKind::live_http) {
    if (api_key_env.empty()) out.push_back("live provider must name an api key environment variable");
    if (base_url.empty()) out.push_back("live provider needs a base_url");
  }
  return out;
}

std::chrono::milliseconds RetryPolicy::delay_before(int attempt) const {
  // attempt is the 1-based number of the attempt that just failed.
  const double scale = std::pow(factor, attempt - 1);
  return std::chrono::milliseconds(static_cast<long long>(static_cast<double>(base_delay.count()) * scale));
}

Sleeper thread_sleeper() {
  return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

Sleeper no_sleep() {
  return [](std::chrono::milliseconds) {};
}

namespace {

template <typename Fn>
auto with_retries(const RetryPolicy& policy, const Sleeper& sleep, Fn&& fn) -> decltype(fn(1)) {
  const int max_attempts = std::max(1, policy.max_attempts);
  for (int attempt = 1;; ++attempt) {
    try {
      return fn(attempt);
    } catch (ProviderError& e) {
      e.set_attempts(attempt);
      if (!e.retryable() || attempt >= max_attempts) throw;
      if (sleep) sleep(policy.delay_before(attempt));
    }
  }
}

}  // namespace

ChatResponse chat(ChatProvider& provider, const ChatRequest& req, const RetryPolicy& policy, const Sleeper& sleep) {
  req.validate();
  return with_retries(policy, sleep, [&](int attempt) {
    ChatResponse r = provider.complete(req);
    if (r.text.empty() && r.finish_reason != FinishReason::refusal) {
      throw ProviderError(ProviderErrorKind::transport, "empty completion for " + req.request_tag);
    }
    r.attempts = attempt;
    return r;
  });
}

ChatResponse ModelHandle::call(ChatRequest req) const {
  if (provider == nullptr) throw PreconditionError("model handle has no provider");
  if (req.model_id.empty()) req.model_id = provider->identity().model_id;
  ChatResponse r = chat(*provider, req, retry, sleep);
  if (observer) observer(req, r);
  return r;
}

std::vector<EmbeddingVector> embed(Embedder& embedder, const std::vector<std::string>& texts,
                                   const RetryPolicy& policy, const Sleeper& sleep) {
  if (texts.empty()) throw PreconditionError("embed needs at least one text");
  for (const auto& t : texts) {
    if (t.empty()) throw PreconditionError("embed texts must be non-empty");
  }
  auto out = with_retries(policy, sleep, [&](int) { return embedder.embed_batch(texts); });
  if (out.size() != texts.size()) {
    throw ProviderError(ProviderErrorKind::transport, "embedder returned " + std::to_string(out.size()) +
                                                          " vectors for " + std::to_string(texts.size()) + " texts");
  }
  for (const auto& v : out) {
    if (v.values.size() != out.front().values.size()) throw DimensionError("embedder returned mixed dimensions");
    for (double x : v.values) {
      if (!std::isfinite(x)) throw ProviderError(ProviderErrorKind::transport, "embedder returned a non-finite value");
    }
  }
  return out;
}

}  // namespace gidea
