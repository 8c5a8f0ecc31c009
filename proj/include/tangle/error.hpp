#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tangle {

enum class Errc {
  kNonPositiveRate,
  kCapacityTooSmall,
  kIndexOutOfRange,
  kInvalidArgument,
  kSingularBlock,
  kSingularSystem,
  kNoConvergence,
  kDivergentMean,
  kGridError,
};

inline std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::kNonPositiveRate: return "NonPositiveRate";
    case Errc::kCapacityTooSmall: return "CapacityTooSmall";
    case Errc::kIndexOutOfRange: return "IndexOutOfRange";
    case Errc::kInvalidArgument: return "InvalidArgument";
    case Errc::kSingularBlock: return "SingularBlock";
    case Errc::kSingularSystem: return "SingularSystem";
    case Errc::kNoConvergence: return "NoConvergence";
    case Errc::kDivergentMean: return "DivergentMean";
    case Errc::kGridError: return "GridError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace tangle
