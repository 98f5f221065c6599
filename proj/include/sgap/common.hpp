#ifndef SGAP_COMMON_HPP
#define SGAP_COMMON_HPP

#include <stdexcept>
#include <string>
#include <vector>

namespace sgap {

inline constexpr const char* kVersion = "sgap-0.1.0";
inline constexpr int kArchiveFormatVersion = 1;

// Forward/backward behaviour of stochastic layers (dropout, batchnorm).
enum class Mode { kTrain, kEval };

// Raised when a config fails validation. Carries every violation found,
// not just the first one.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> violations)
      : std::runtime_error(join(violations)), violations_(std::move(violations)) {}
  explicit ConfigError(const std::string& msg)
      : ConfigError(std::vector<std::string>{msg}) {}
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& vs) {
    std::string out = "invalid config:";
    for (const auto& v : vs) {
      out += "\n  - ";
      out += v;
    }
    return out;
  }
  std::vector<std::string> violations_;
};

// Tensor shape disagreements, malformed batches, bad layer wiring.
class ShapeError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Unreadable or corrupt files (images, archives, CSV).
class IoError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A parameter archive that parses but fails its integrity checks.
class IntegrityError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An archive written by an incompatible format version.
class IncompatibilityError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Degenerate statistics: duplicate-only samples, empty partitions, and
// other situations where an estimator has no meaningful answer.
class DegenerateSampleError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training diverged (non-finite loss). The last checkpoint on disk, if
// any, is left untouched.
class TrainingAbortError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace sgap

#endif  // SGAP_COMMON_HPP
