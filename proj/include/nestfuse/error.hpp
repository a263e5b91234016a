#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nestfuse {

enum class ErrorCode {
  kSize,                 // spatial size violates a divisibility or minimum-size rule
  kTopology,             // tensor shapes disagree with the fixed channel plan
  kShapeMismatch,        // two operands that must agree in shape do not
  kConfiguration,        // invalid configuration value or missing optional component
  kNumerical,            // non-finite value, SVD failure, NaN loss
  kDecode,               // image file could not be decoded
  kIo,                   // filesystem read/write failure
  kBadMagic,             // checkpoint does not start with the expected magic
  kVersionMismatch,      // checkpoint format version is not supported
  kChecksum,             // checkpoint entry or header failed its CRC (includes truncation)
  kCheckpointTopology,   // checkpoint entries do not cover the network topology exactly
  kEmptyCorpus,          // training corpus has no decodable images
  kInvalidArgument,      // user-supplied argument rejected
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace nestfuse
