#pragma once

#include <stdexcept>
#include <string>

namespace hdl {

// All library failures surface as hdl::Error. The code is a short
// machine-readable tag ("parse_error", "mixed_dims", ...) that the CLI copies
// into its error record; what() carries the human-readable detail.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

}  // namespace hdl
