#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace pansharp {

// Error taxonomy shared by the library and the CLI. The CLI maps tag() to its
// ERROR[<class>] prefix and the process exit code.
class Error : public std::runtime_error {
 public:
  Error(std::string tag, const std::string& msg)
      : std::runtime_error(msg), tag_(std::move(tag)) {}
  const std::string& tag() const { return tag_; }

 private:
  std::string tag_;
};

struct ContractViolation : Error {
  explicit ContractViolation(const std::string& m) : Error("contract", m) {}
};

struct DegenerateInput : Error {
  explicit DegenerateInput(const std::string& m) : Error("degenerate", m) {}
};

struct NumericalError : Error {
  explicit NumericalError(const std::string& m) : Error("numerical", m) {}
};

struct TrainingDivergence : Error {
  explicit TrainingDivergence(const std::string& m) : Error("divergence", m) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error("config", m) {}
};

struct IoError : Error {
  explicit IoError(const std::string& m) : Error("io", m) {}
};

struct VersionError : Error {
  explicit VersionError(const std::string& m) : Error("version", m) {}
};

}  // namespace pansharp
