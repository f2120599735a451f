#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace gidea {

// Root of every error the library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

// A document parsed but violates the schema. `field()` is a dotted path.
class SchemaError : public Error {
 public:
  SchemaError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class DistributionError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

enum class ProviderErrorKind { transport, http_status, rate_limited, refusal, exhausted, configuration };

std::string to_string(ProviderErrorKind kind);

class ProviderError : public Error {
 public:
  ProviderError(ProviderErrorKind kind, const std::string& what, int http_status = 0, int attempts = 1)
      : Error(what), kind_(kind), http_status_(http_status), attempts_(attempts) {}

  ProviderErrorKind kind() const { return kind_; }
  int http_status() const { return http_status_; }
  int attempts() const { return attempts_; }
  void set_attempts(int n) { attempts_ = n; }

  // Whether a retry loop may try again after this failure.
  bool retryable() const;

 private:
  ProviderErrorKind kind_;
  int http_status_;
  int attempts_;
};

// Model output could not be parsed into the expected structure.
class FormatError : public Error {
 public:
  using Error::Error;
};

class UnknownDeviceError : public Error {
 public:
  using Error::Error;
};

class UnsupportedActionError : public Error {
 public:
  using Error::Error;
};

class SequenceError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class IntegrityError : public Error {
 public:
  IntegrityError(std::string stream, std::int64_t seq, const std::string& what)
      : Error(stream + " @ seq " + std::to_string(seq) + ": " + what), stream_(std::move(stream)), seq_(seq) {}
  const std::string& stream() const { return stream_; }
  std::int64_t seq() const { return seq_; }

 private:
  std::string stream_;
  std::int64_t seq_;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ZeroVectorError : public Error {
 public:
  using Error::Error;
};

class DegenerateSampleError : public Error {
 public:
  using Error::Error;
};

}  // namespace gidea
