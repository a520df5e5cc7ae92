#pragma once

#include <stdexcept>
#include <string>

namespace stochnet {

// Base for every error the library raises. `kind()` is a stable,
// machine-readable tag; the CLI prints it verbatim.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& message) : Error("shape", message) {}
};

class ValueError : public Error {
 public:
  explicit ValueError(const std::string& message) : Error("value", message) {}
};

}  // namespace stochnet
