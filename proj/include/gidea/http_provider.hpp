#pragma once

// Live model access over the chat-completions HTTP dialect.

#include <functional>
#include <memory>
#include <mutex>
#include <string>

#include "gidea/provider.hpp"

namespace gidea {

// Receives one record per wire exchange: {"direction", "url", "status", "body"}.
// Bodies have the api key value replaced by "[REDACTED]".
using WireLogger = std::function<void(const nlohmann::json&)>;

// Reads the key named by identity.api_key_env. Throws
// ProviderError{configuration} naming the variable when it is unset or empty.
std::string resolve_api_key(const ProviderIdentity& identity);

// Replaces every occurrence of `secret` in `text`.
std::string redact(std::string text, const std::string& secret);

class HttpEndpoint {
 public:
  HttpEndpoint(ProviderIdentity identity, WireLogger wire);

  // POST {base_url}{path}. Maps failures to ProviderError kinds; returns the
  // parsed JSON body of a 2xx response.
  nlohmann::json post(const std::string& path, const nlohmann::json& body) const;

  const ProviderIdentity& identity() const { return identity_; }

 private:
  ProviderIdentity identity_;
  std::string api_key_;
  std::string origin_;
  std::string prefix_;
  WireLogger wire_;
  mutable std::mutex wire_mu_;
};

class HttpChatProvider : public ChatProvider {
 public:
  explicit HttpChatProvider(ProviderIdentity identity, WireLogger wire = {});

  ChatResponse complete(const ChatRequest& req) override;
  const ProviderIdentity& identity() const override { return endpoint_.identity(); }

 private:
  HttpEndpoint endpoint_;
};

class HttpEmbedder : public Embedder {
 public:
  explicit HttpEmbedder(ProviderIdentity identity, WireLogger wire = {});

  std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) override;
  const ProviderIdentity& identity() const override { return endpoint_.identity(); }

 private:
  HttpEndpoint endpoint_;
};

}  // namespace gidea
