#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace hsv {

enum class ErrorCode {
  // umf codec
  BadMagic,
  UnknownVersion,
  TruncatedFrame,
  SizeChainMismatch,
  InvariantViolation,
  // model ir
  SchemaError,
  CycleDetected,
  ShapeMismatch,
  UnknownModel,
  DanglingTensorRef,
  WrongPacketType,
  // arch / cost
  ConfigError,
  UndefinedOpForProcessor,
  UnsupportedOp,
  // scheduler / sim
  UnpartitionableLayer,
  CapacityDeadlock,
  NoReadyTask,
  // cli / dse
  KeyMismatch,
  IoError,
};

const char* to_string(ErrorCode code);

// Single exception type for the whole library. `offset` is set by the codec
// to the byte position where decoding failed.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what,
        std::optional<std::size_t> offset = std::nullopt)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code),
        offset_(offset),
        message_(what) {}

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> offset() const noexcept { return offset_; }
  // The message without the error-code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> offset_;
  std::string message_;
};

}  // namespace hsv
