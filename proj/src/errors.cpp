#include "gidea/errors.hpp"

namespace gidea {

std::string to_string(ProviderErrorKind kind) {
  switch (kind) {
    case ProviderErrorKind::transport:
      return "transport";
    case ProviderErrorKind::http_status:
      return "http_status";
    case ProviderErrorKind::rate_limited:
      return "rate_limited";
    case ProviderErrorKind::refusal:
      return "refusal";
    case ProviderErrorKind::exhausted:
      return "exhausted";
    case ProviderErrorKind::configuration:
      return "configuration";
  }
  return "unknown";
}

bool ProviderError::retryable() const {
  switch (kind_) {
    case ProviderErrorKind::rate_limited:
    case ProviderErrorKind::transport:
      return true;
    case ProviderErrorKind::http_status:
      return http_status_ >= 500;
    default:
      return false;
  }
}

}  // namespace gidea
