#pragma once

// Unified Model Format: the binary frame exchanged between host and
// accelerator. All multi-byte fields are little-endian and fixed width.
//
//   ModelLoad     : FrameHeader | u32 info_count | InfoPacket* | u32 data_count | DataPacket*
//   Request/Return: FrameHeader | u32 data_count | DataPacket*
//   Check/Ack     : FrameHeader
//
// FrameHeader (18 bytes): "UMF1" | u8 version | u8 packet_type | u32 user_id
//                         | u32 transaction_id | u32 model_id
// InfoPacket header (14 bytes): u32 current_payload_size | u32 next_payload_size
//                         | u16 layer_id | u8 op_type | u8 input_count
//                         | u8 output_count | u8 attr_mask
// InfoPacket payload: input_count x {u32 ref, u8 kind, u8 precision, u8 rank, u32 dims[rank]}
//                     output_count x {u32 id, u8 precision, u8 rank, u32 dims[rank]}
//                     popcount(attr_mask) x u16 attribute value (bit order)
// DataPacket (15-byte header): u32 tensor_id | u8 data_type | u8 precision
//                         | u8 body_present | u64 payload_size | payload bytes if body_present

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace hsv::umf {

inline constexpr std::array<std::uint8_t, 4> kMagic{'U', 'M', 'F', '1'};
inline constexpr std::uint8_t kVersion = 1;

inline constexpr std::size_t kFrameHeaderSize = 18;
inline constexpr std::size_t kCountHeaderSize = 4;
inline constexpr std::size_t kInfoHeaderSize = 14;
inline constexpr std::size_t kDataHeaderSize = 15;

enum class PacketType : std::uint8_t { ModelLoad = 0, Request = 1, Return = 2, Check = 3, Ack = 4 };

enum class OpType : std::uint8_t {
  Conv = 0,
  GEMM = 1,
  MatMul = 2,
  Pool = 3,
  Softmax = 4,
  LayerNorm = 5,
  Activation = 6,
  ElementwiseAdd = 7,
  Reshape = 8,
  Concat = 9,
  Transpose = 10,
};
inline constexpr int kOpTypeCount = 11;

enum class TensorKind : std::uint8_t { Weight = 0, Activation = 1 };
enum class DataType : std::uint8_t { Weight = 0, Activation = 1, Bias = 2 };
enum class Precision : std::uint8_t { INT8 = 0, FP16 = 1, FP32 = 2 };

// Bit positions in InfoPacket::attrs.mask.
enum class Attr : std::uint8_t { Kernel = 0, Stride = 1, Padding = 2, Groups = 3, Axis = 4 };
inline constexpr std::uint8_t kKnownAttrMask = 0x1F;

const char* to_string(PacketType t);
const char* to_string(OpType t);
const char* to_string(Precision p);
const char* to_string(TensorKind k);
const char* to_string(DataType d);
bool parse_op_type(const std::string& name, OpType& out);
bool parse_precision(const std::string& name, Precision& out);
std::size_t precision_bytes(Precision p);
bool is_data_op(OpType t);

struct FrameHeader {
  std::uint8_t version = kVersion;
  PacketType packet_type = PacketType::Check;
  std::uint32_t user_id = 0;
  std::uint32_t transaction_id = 0;
  std::uint32_t model_id = 0;
  bool operator==(const FrameHeader&) const = default;
};

struct TensorDesc {
  std::uint32_t tensor_id = 0;
  TensorKind kind = TensorKind::Activation;
  Precision precision = Precision::INT8;
  std::vector<std::uint32_t> dims;
  bool operator==(const TensorDesc&) const = default;
};

struct AttrSpec {
  std::uint8_t mask = 0;
  std::vector<std::uint16_t> values;  // one per set bit, ascending bit order
  bool has(Attr a) const { return (mask >> static_cast<int>(a)) & 1U; }
  std::uint16_t get(Attr a, std::uint16_t fallback = 0) const;
  void set(Attr a, std::uint16_t value);
  bool operator==(const AttrSpec&) const = default;
};

struct InfoPacket {
  std::uint32_t current_payload_size = 0;
  std::uint32_t next_payload_size = 0;
  std::uint16_t layer_id = 0;
  OpType op_type = OpType::Conv;
  std::vector<TensorDesc> inputs;   // kind distinguishes weight vs activation refs
  std::vector<TensorDesc> outputs;  // kind is always Activation
  AttrSpec attrs;
  bool operator==(const InfoPacket&) const = default;
};

struct DataPacket {
  std::uint32_t tensor_id = 0;
  DataType data_type = DataType::Weight;
  Precision precision = Precision::INT8;
  std::uint64_t payload_size = 0;
  std::vector<std::uint8_t> payload;  // empty: sizes only, no tensor body on the wire
  bool operator==(const DataPacket&) const = default;
};

struct UmfFrame {
  FrameHeader header;
  std::vector<InfoPacket> info_packets;
  std::vector<DataPacket> data_packets;
  bool operator==(const UmfFrame&) const = default;
};

// Encoded payload length of one info packet.
std::size_t info_payload_size(const InfoPacket& p);

// Recomputes current/next payload sizes so the size chain holds.
void finalize_sizes(UmfFrame& frame);

// Throws Error(InvariantViolation) when a frame rule is broken.
void validate(const UmfFrame& frame);

std::vector<std::uint8_t> encode_frame(const UmfFrame& frame);
UmfFrame decode_frame(std::span<const std::uint8_t> bytes);
std::string inspect_frame(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace hsv::umf
