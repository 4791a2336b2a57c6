#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace ellipsedet {

// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A label record or object violates a data invariant. `object_index` names the
// offending object when the violation is object-local.
class ValidationError : public Error {
 public:
  ValidationError(const std::string& message, std::optional<std::size_t> object_index = std::nullopt)
      : Error(object_index ? "object " + std::to_string(*object_index) + ": " + message : message),
        reason_(message),
        object_index_(object_index) {}

  const std::string& reason() const noexcept { return reason_; }
  std::optional<std::size_t> object_index() const noexcept { return object_index_; }

 private:
  std::string reason_;
  std::optional<std::size_t> object_index_;
};

}  // namespace ellipsedet
