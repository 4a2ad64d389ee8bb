#include "hsv/error.hpp"

namespace hsv {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnknownVersion: return "UnknownVersion";
    case ErrorCode::TruncatedFrame: return "TruncatedFrame";
    case ErrorCode::SizeChainMismatch: return "SizeChainMismatch";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::CycleDetected: return "CycleDetected";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::UnknownModel: return "UnknownModel";
    case ErrorCode::DanglingTensorRef: return "DanglingTensorRef";
    case ErrorCode::WrongPacketType: return "WrongPacketType";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::UndefinedOpForProcessor: return "UndefinedOpForProcessor";
    case ErrorCode::UnsupportedOp: return "UnsupportedOp";
    case ErrorCode::UnpartitionableLayer: return "UnpartitionableLayer";
    case ErrorCode::CapacityDeadlock: return "CapacityDeadlock";
    case ErrorCode::NoReadyTask: return "NoReadyTask";
    case ErrorCode::KeyMismatch: return "KeyMismatch";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace hsv
