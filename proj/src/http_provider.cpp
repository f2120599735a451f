#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "gidea/http_provider.hpp"

#include <httplib.h>

#include <algorithm>
#include <cstdlib>

namespace gidea {

std::string resolve_api_key(const ProviderIdentity& identity) {
  if (identity.api_key_env.empty()) {
    throw ProviderError(ProviderErrorKind::configuration, "provider " + identity.model_id + " names no api key variable");
  }
  const char* v = std::getenv(identity.api_key_env.c_str());
  if (v == nullptr || *v == '\0') {
    throw ProviderError(ProviderErrorKind::configuration, "environment variable " + identity.api_key_env + " is not set");
  }
  return v;
}

std::string redact(std::string text, const std::string& secret) {
  if (secret.empty()) return text;
  static const std::string kMask = "[REDACTED]";
  for (std::size_t pos = text.find(secret); pos != std::string::npos; pos = text.find(secret, pos + kMask.size())) {
    text.replace(pos, secret.size(), kMask);
  }
  return text;
}

HttpEndpoint::HttpEndpoint(ProviderIdentity identity, WireLogger wire)
    : identity_(std::move(identity)), wire_(std::move(wire)) {
  if (identity_.kind != ProviderKind::live_http) throw PreconditionError("HttpEndpoint needs a live_http identity");
  api_key_ = resolve_api_key(identity_);
  const std::string& url = identity_.base_url;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ProviderError(ProviderErrorKind::configuration, "base_url '" + url + "' has no scheme");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  origin_ = url.substr(0, path_start);
  prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
}

nlohmann::json HttpEndpoint::post(const std::string& path, const nlohmann::json& body) const {
  const std::string url = prefix_ + path;
  const std::string payload = body.dump();
  if (wire_) {
    std::lock_guard lock(wire_mu_);
    wire_({{"direction", "request"}, {"url", origin_ + url}, {"body", redact(payload, api_key_)}});
  }

  httplib::Client client(origin_);
  client.set_bearer_token_auth(api_key_);
  client.set_connection_timeout(std::chrono::seconds(30));
  client.set_read_timeout(std::chrono::seconds(300));
  auto res = client.Post(url, payload, "application/json");
  if (!res) {
    throw ProviderError(ProviderErrorKind::transport, "POST " + origin_ + url + " failed: " + httplib::to_string(res.error()));
  }
  if (wire_) {
    std::lock_guard lock(wire_mu_);
    wire_({{"direction", "response"}, {"url", origin_ + url}, {"status", res->status}, {"body", redact(res->body, api_key_)}});
  }
  if (res->status == 429) {
    throw ProviderError(ProviderErrorKind::rate_limited, "rate limited by " + origin_, res->status);
  }
  if (res->status < 200 || res->status >= 300) {
    throw ProviderError(ProviderErrorKind::http_status,
                        "POST " + origin_ + url + " returned HTTP " + std::to_string(res->status), res->status);
  }
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::parse_error&) {
    throw ProviderError(ProviderErrorKind::transport, "unparseable response body from " + origin_ + url, res->status);
  }
}

HttpChatProvider::HttpChatProvider(ProviderIdentity identity, WireLogger wire)
    : endpoint_(std::move(identity), std::move(wire)) {}

namespace {

const char* wire_role(ChatRole role) {
  switch (role) {
    case ChatRole::system:
      return "system";
    case ChatRole::user:
      return "user";
    case ChatRole::assistant_turn:
      return "assistant";
  }
  return "user";
}

}  // namespace

ChatResponse HttpChatProvider::complete(const ChatRequest& req) {
  nlohmann::json body{{"model", req.model_id.empty() ? endpoint_.identity().model_id : req.model_id},
                      {"temperature", req.temperature},
                      {"max_tokens", req.max_output_tokens},
                      {"messages", nlohmann::json::array()}};
  for (const auto& m : req.messages) body["messages"].push_back({{"role", wire_role(m.role)}, {"content", m.text}});

  const nlohmann::json doc = endpoint_.post("/chat/completions", body);
  try {
    const auto& choice = doc.at("choices").at(0);
    const auto& message = choice.at("message");
    ChatResponse r;
    if (message.contains("content") && message["content"].is_string()) r.text = message["content"].get<std::string>();
    const std::string finish = choice.value("finish_reason", std::string("stop"));
    const bool refused = finish == "content_filter" || (message.contains("refusal") && !message["refusal"].is_null());
    if (refused) {
      r.finish_reason = FinishReason::refusal;
    } else if (finish == "length") {
      r.finish_reason = FinishReason::length;
    }
    if (doc.contains("usage") && doc["usage"].is_object()) {
      r.usage.prompt = doc["usage"].value("prompt_tokens", 0);
      r.usage.completion = doc["usage"].value("completion_tokens", 0);
    }
    if (r.finish_reason == FinishReason::refusal && r.text.empty()) {
      throw ProviderError(ProviderErrorKind::refusal, "model refused request " + req.request_tag);
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError(ProviderErrorKind::transport, std::string("malformed chat response: ") + e.what());
  }
}

HttpEmbedder::HttpEmbedder(ProviderIdentity identity, WireLogger wire)
    : endpoint_(std::move(identity), std::move(wire)) {}

std::vector<EmbeddingVector> HttpEmbedder::embed_batch(const std::vector<std::string>& texts) {
  const nlohmann::json body{{"model", endpoint_.identity().model_id}, {"input", texts}};
  const nlohmann::json doc = endpoint_.post("/embeddings", body);
  try {
    std::vector<EmbeddingVector> out(texts.size());
    std::vector<bool> filled(texts.size(), false);
    const auto& data = doc.at("data");
    for (std::size_t i = 0; i < data.size(); ++i) {
      const std::size_t index = data[i].value("index", i);
      if (index >= out.size() || filled[index]) throw ProviderError(ProviderErrorKind::transport, "embedding index out of range");
      out[index].values = data[i].at("embedding").get<std::vector<double>>();
      out[index].model_id = endpoint_.identity().model_id;
      filled[index] = true;
    }
    if (std::find(filled.begin(), filled.end(), false) != filled.end()) {
      throw ProviderError(ProviderErrorKind::transport, "embedding response is missing vectors");
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError(ProviderErrorKind::transport, std::string("malformed embedding response: ") + e.what());
  }
}

}  // namespace gidea
