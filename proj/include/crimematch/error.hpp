#pragma once

#include <stdexcept>
#include <string>

namespace crimematch {

/// Broad failure classes. The CLI maps each onto a distinct exit status.
enum class ErrorKind {
  config,   ///< bad or unknown configuration
  data,     ///< unreadable, malformed or schema-violating input
  numeric,  ///< optimizer or estimator produced a non-finite or degenerate result
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string module, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& module() const noexcept { return module_; }

 private:
  ErrorKind kind_;
  std::string module_;
};

int exit_code(ErrorKind kind) noexcept;
const char* to_string(ErrorKind kind) noexcept;

}  // namespace crimematch
