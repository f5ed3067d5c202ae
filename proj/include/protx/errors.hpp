#pragma once
#include <stdexcept>
#include <string>
#include <vector>

namespace protx {

// Invalid or inconsistent user configuration (exit code 1 in the CLI),
// as opposed to runtime failures (exit code 2).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
  explicit ConfigError(const std::vector<std::string>& errors)
      : std::runtime_error(join(errors)), items(errors) {}

  static std::string join(const std::vector<std::string>& errors) {
    std::string out = "configuration invalid:";
    for (const auto& e : errors) out += "\n  - " + e;
    return out;
  }

  std::vector<std::string> items;
};

}  // namespace protx
