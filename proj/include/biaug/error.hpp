#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace biaug {

/// Base class for every error raised by the pipeline.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MalformedRecord : public Error {
 public:
  MalformedRecord(std::size_t line, const std::string& reason)
      : Error("malformed record at line " + std::to_string(line) + ": " + reason),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DuplicateId : public Error {
 public:
  explicit DuplicateId(std::string id)
      : Error("duplicate id: " + id), id_(std::move(id)) {}
  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

class InvariantViolation : public Error {
 public:
  InvariantViolation(const std::string& id, const std::string& which)
      : Error("invariant violated for '" + id + "': " + which) {}
};

class PairingConflict : public Error {
 public:
  using Error::Error;
};

// Backends. BackendUnavailable is the only retryable kind.
class BackendUnavailable : public Error {
 public:
  using Error::Error;
};
class EmptyResponse : public Error {
 public:
  using Error::Error;
};
class ImageUnreadable : public Error {
 public:
  using Error::Error;
};
class MaskOutOfBounds : public Error {
 public:
  using Error::Error;
};

class UnparseableResponse : public Error {
 public:
  UnparseableResponse(const std::string& reason, std::string response)
      : Error("unparseable response: " + reason), response_(std::move(response)) {}
  const std::string& response() const noexcept { return response_; }

 private:
  std::string response_;
};

class DegenerateBatch : public Error {
 public:
  using Error::Error;
};

class NonFiniteLoss : public Error {
 public:
  NonFiniteLoss(std::size_t batch_index, const std::string& detail)
      : Error("non-finite loss in batch " + std::to_string(batch_index) + ": " + detail),
        batch_index_(batch_index) {}
  std::size_t batch_index() const noexcept { return batch_index_; }

 private:
  std::size_t batch_index_;
};

class InconsistentManifests : public Error {
 public:
  using Error::Error;
};

class UnparseableCaption : public Error {
 public:
  using Error::Error;
};

class TooShort : public Error {
 public:
  using Error::Error;
};

class MissingInput : public Error {
 public:
  explicit MissingInput(const std::string& path) : Error("missing input: " + path) {}
};

class ConfigInvalid : public Error {
 public:
  ConfigInvalid(const std::string& field, const std::string& why)
      : Error("invalid config field '" + field + "': " + why) {}
};

}  // namespace biaug
