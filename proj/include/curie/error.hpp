#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace curie {

// Base of every error thrown by the library. `code()` is a stable identifier
// (e.g. "ParseError", "SingularMatrix") that reports and the CLI print.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

// Convenience for the many leaf error kinds that carry no extra payload.
#define CURIE_DEFINE_ERROR(Name)                                   \
  class Name : public ::curie::Error {                             \
   public:                                                         \
    explicit Name(const std::string& message)                      \
        : ::curie::Error(#Name, message) {}                        \
  }

CURIE_DEFINE_ERROR(TypeError);
CURIE_DEFINE_ERROR(SchemaMismatch);
CURIE_DEFINE_ERROR(ConfigError);

}  // namespace curie
