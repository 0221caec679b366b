#ifndef CONTRAIL_ERRORS_HPP
#define CONTRAIL_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace contrail {

// Exit codes used by the CLI: 0 success, 2 config error, 3 data error,
// 4 divergence abort.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfigError = 2,
  kExitDataError = 3,
  kExitDivergence = 4,
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace contrail

#endif  // CONTRAIL_ERRORS_HPP
