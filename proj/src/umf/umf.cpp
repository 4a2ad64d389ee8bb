#include "hsv/umf.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "hsv/error.hpp"

namespace hsv::umf {

namespace {

constexpr const char* kOpNames[kOpTypeCount] = {
    "Conv",      "GEMM",       "MatMul",         "Pool",    "Softmax",  "LayerNorm",
    "Activation", "ElementwiseAdd", "Reshape", "Concat", "Transpose"};

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return in_.size() - pos_; }
  std::uint8_t u8(const char* field) { return static_cast<std::uint8_t>(le(1, field)); }
  std::uint16_t u16(const char* field) { return static_cast<std::uint16_t>(le(2, field)); }
  std::uint32_t u32(const char* field) { return static_cast<std::uint32_t>(le(4, field)); }
  std::uint64_t u64(const char* field) { return le(8, field); }
  std::vector<std::uint8_t> bytes(std::uint64_t n, const char* field) {
    need(n, field);
    std::vector<std::uint8_t> b(in_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                in_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return b;
  }

  [[noreturn]] void fail(ErrorCode code, const std::string& msg, std::size_t at) const {
    throw Error(code, msg + " at offset " + std::to_string(at), at);
  }

 private:
  void need(std::uint64_t n, const char* field) const {
    if (n > remaining()) {
      fail(ErrorCode::TruncatedFrame,
           std::string("need ") + std::to_string(n) + " bytes for " + field + ", have " +
               std::to_string(remaining()),
           pos_);
    }
  }
  std::uint64_t le(int n, const char* field) {
    need(static_cast<std::uint64_t>(n), field);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

std::size_t desc_size(const TensorDesc& d, bool with_kind) {
  return 4 + (with_kind ? 1 : 0) + 1 + 1 + 4 * d.dims.size();
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw Error(ErrorCode::InvariantViolation, msg);
}

void write_desc(Writer& w, const TensorDesc& d, bool with_kind) {
  w.u32(d.tensor_id);
  if (with_kind) w.u8(static_cast<std::uint8_t>(d.kind));
  w.u8(static_cast<std::uint8_t>(d.precision));
  w.u8(static_cast<std::uint8_t>(d.dims.size()));
  for (auto dim : d.dims) w.u32(dim);
}

Precision read_precision(Reader& r) {
  const std::size_t at = r.pos();
  const auto v = r.u8("precision");
  if (v > 2) r.fail(ErrorCode::InvariantViolation, "unknown precision " + std::to_string(v), at);
  return static_cast<Precision>(v);
}

TensorDesc read_desc(Reader& r, bool with_kind) {
  TensorDesc d;
  d.tensor_id = r.u32("tensor id");
  if (with_kind) {
    const std::size_t at = r.pos();
    const auto k = r.u8("tensor kind");
    if (k > 1) r.fail(ErrorCode::InvariantViolation, "unknown tensor kind " + std::to_string(k), at);
    d.kind = static_cast<TensorKind>(k);
  } else {
    d.kind = TensorKind::Activation;
  }
  d.precision = read_precision(r);
  const auto rank = r.u8("rank");
  d.dims.reserve(rank);
  for (int i = 0; i < rank; ++i) d.dims.push_back(r.u32("dim"));
  return d;
}

}  // namespace

const char* to_string(PacketType t) {
  switch (t) {
    case PacketType::ModelLoad: return "ModelLoad";
    case PacketType::Request: return "Request";
    case PacketType::Return: return "Return";
    case PacketType::Check: return "Check";
    case PacketType::Ack: return "Ack";
  }
  return "?";
}

const char* to_string(OpType t) {
  const auto i = static_cast<int>(t);
  return i < kOpTypeCount ? kOpNames[i] : "?";
}

const char* to_string(Precision p) {
  switch (p) {
    case Precision::INT8: return "INT8";
    case Precision::FP16: return "FP16";
    case Precision::FP32: return "FP32";
  }
  return "?";
}

const char* to_string(TensorKind k) { return k == TensorKind::Weight ? "Weight" : "Activation"; }

const char* to_string(DataType d) {
  switch (d) {
    case DataType::Weight: return "Weight";
    case DataType::Activation: return "Activation";
    case DataType::Bias: return "Bias";
  }
  return "?";
}

bool parse_op_type(const std::string& name, OpType& out) {
  for (int i = 0; i < kOpTypeCount; ++i) {
    if (name == kOpNames[i]) {
      out = static_cast<OpType>(i);
      return true;
    }
  }
  return false;
}

bool parse_precision(const std::string& name, Precision& out) {
  if (name == "INT8") out = Precision::INT8;
  else if (name == "FP16") out = Precision::FP16;
  else if (name == "FP32") out = Precision::FP32;
  else return false;
  return true;
}

std::size_t precision_bytes(Precision p) {
  switch (p) {
    case Precision::INT8: return 1;
    case Precision::FP16: return 2;
    case Precision::FP32: return 4;
  }
  return 1;
}

bool is_data_op(OpType t) {
  return t == OpType::Reshape || t == OpType::Concat || t == OpType::Transpose;
}

std::uint16_t AttrSpec::get(Attr a, std::uint16_t fallback) const {
  if (!has(a)) return fallback;
  const auto bit = static_cast<unsigned>(a);
  const auto index = std::popcount(static_cast<unsigned>(mask & ((1U << bit) - 1U)));
  return values.at(static_cast<std::size_t>(index));
}

void AttrSpec::set(Attr a, std::uint16_t value) {
  const auto bit = static_cast<unsigned>(a);
  const auto index = static_cast<std::size_t>(
      std::popcount(static_cast<unsigned>(mask & ((1U << bit) - 1U))));
  if (has(a)) {
    values[index] = value;
  } else {
    values.insert(values.begin() + static_cast<std::ptrdiff_t>(index), value);
    mask = static_cast<std::uint8_t>(mask | (1U << bit));
  }
}

std::size_t info_payload_size(const InfoPacket& p) {
  std::size_t n = 0;
  for (const auto& d : p.inputs) n += desc_size(d, true);
  for (const auto& d : p.outputs) n += desc_size(d, false);
  n += 2 * p.attrs.values.size();
  return n;
}

void finalize_sizes(UmfFrame& frame) {
  auto& infos = frame.info_packets;
  for (std::size_t i = 0; i < infos.size(); ++i) {
    infos[i].current_payload_size = static_cast<std::uint32_t>(info_payload_size(infos[i]));
  }
  for (std::size_t i = 0; i < infos.size(); ++i) {
    infos[i].next_payload_size = i + 1 < infos.size() ? infos[i + 1].current_payload_size : 0;
  }
}

void validate(const UmfFrame& frame) {
  const auto& h = frame.header;
  require(h.version == kVersion, "unsupported version " + std::to_string(h.version));
  require(static_cast<int>(h.packet_type) <= 4, "unknown packet type");
  switch (h.packet_type) {
    case PacketType::ModelLoad:
      require(!frame.info_packets.empty(), "ModelLoad frame needs at least one info packet");
      break;
    case PacketType::Request:
    case PacketType::Return:
      require(frame.info_packets.empty(), "Request/Return frames carry no info packets");
      require(!frame.data_packets.empty(), "Request/Return frames need at least one data packet");
      break;
    case PacketType::Check:
    case PacketType::Ack:
      require(frame.info_packets.empty() && frame.data_packets.empty(),
              "Check/Ack frames carry no packets");
      break;
  }
  const auto& infos = frame.info_packets;
  for (std::size_t i = 0; i < infos.size(); ++i) {
    const auto& p = infos[i];
    require(p.current_payload_size == info_payload_size(p),
            "info packet " + std::to_string(i) + " current_payload_size mismatch");
    const std::uint32_t expect_next = i + 1 < infos.size() ? infos[i + 1].current_payload_size : 0;
    require(p.next_payload_size == expect_next,
            "info packet " + std::to_string(i) + " next_payload_size breaks the size chain");
    require(p.inputs.size() <= 255 && p.outputs.size() <= 255, "too many tensors in info packet");
    require((p.attrs.mask & ~kKnownAttrMask) == 0, "unknown attribute bits");
    require(p.attrs.values.size() == static_cast<std::size_t>(std::popcount(p.attrs.mask)),
            "attribute values do not match mask");
    for (const auto& d : p.inputs) require(d.dims.size() <= 255, "rank too large");
    for (const auto& d : p.outputs) {
      require(d.dims.size() <= 255, "rank too large");
      require(d.kind == TensorKind::Activation, "outputs must be activations");
    }
  }
  std::set<std::uint32_t> ids;
  for (const auto& d : frame.data_packets) {
    require(ids.insert(d.tensor_id).second,
            "duplicate data tensor id " + std::to_string(d.tensor_id));
    require(d.payload.empty() || d.payload.size() == d.payload_size,
            "payload length differs from payload_size");
  }
}

std::vector<std::uint8_t> encode_frame(const UmfFrame& frame) {
  validate(frame);
  Writer w;
  w.bytes(kMagic);
  w.u8(frame.header.version);
  w.u8(static_cast<std::uint8_t>(frame.header.packet_type));
  w.u32(frame.header.user_id);
  w.u32(frame.header.transaction_id);
  w.u32(frame.header.model_id);

  const auto type = frame.header.packet_type;
  if (type == PacketType::ModelLoad) {
    w.u32(static_cast<std::uint32_t>(frame.info_packets.size()));
    for (const auto& p : frame.info_packets) {
      w.u32(p.current_payload_size);
      w.u32(p.next_payload_size);
      w.u16(p.layer_id);
      w.u8(static_cast<std::uint8_t>(p.op_type));
      w.u8(static_cast<std::uint8_t>(p.inputs.size()));
      w.u8(static_cast<std::uint8_t>(p.outputs.size()));
      w.u8(p.attrs.mask);
      for (const auto& d : p.inputs) write_desc(w, d, true);
      for (const auto& d : p.outputs) write_desc(w, d, false);
      for (auto v : p.attrs.values) w.u16(v);
    }
  }
  if (type == PacketType::ModelLoad || type == PacketType::Request || type == PacketType::Return) {
    w.u32(static_cast<std::uint32_t>(frame.data_packets.size()));
    for (const auto& d : frame.data_packets) {
      w.u32(d.tensor_id);
      w.u8(static_cast<std::uint8_t>(d.data_type));
      w.u8(static_cast<std::uint8_t>(d.precision));
      w.u8(d.payload.empty() ? 0 : 1);
      w.u64(d.payload_size);
      w.bytes(d.payload);
    }
  }
  return w.take();
}

UmfFrame decode_frame(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  UmfFrame frame;
  for (std::size_t i = 0; i < kMagic.size(); ++i) {
    if (r.u8("magic") != kMagic[i]) r.fail(ErrorCode::BadMagic, "bad frame signature", i);
  }
  const std::size_t version_at = r.pos();
  frame.header.version = r.u8("version");
  if (frame.header.version != kVersion) {
    r.fail(ErrorCode::UnknownVersion, "version " + std::to_string(frame.header.version), version_at);
  }
  const std::size_t type_at = r.pos();
  const auto type_code = r.u8("packet type");
  if (type_code > 4) {
    r.fail(ErrorCode::InvariantViolation, "unknown packet type " + std::to_string(type_code), type_at);
  }
  frame.header.packet_type = static_cast<PacketType>(type_code);
  frame.header.user_id = r.u32("user id");
  frame.header.transaction_id = r.u32("transaction id");
  frame.header.model_id = r.u32("model id");

  const auto type = frame.header.packet_type;
  if (type == PacketType::ModelLoad) {
    const std::size_t count_at = r.pos();
    const auto count = r.u32("info count");
    if (count == 0) r.fail(ErrorCode::InvariantViolation, "ModelLoad without info packets", count_at);
    std::uint32_t expected_current = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::size_t packet_at = r.pos();
      InfoPacket p;
      p.current_payload_size = r.u32("current payload size");
      if (i > 0 && p.current_payload_size != expected_current) {
        r.fail(ErrorCode::SizeChainMismatch,
               "info packet " + std::to_string(i) + " size " +
                   std::to_string(p.current_payload_size) + " but previous packet announced " +
                   std::to_string(expected_current),
               packet_at);
      }
      p.next_payload_size = r.u32("next payload size");
      if (i + 1 == count && p.next_payload_size != 0) {
        r.fail(ErrorCode::SizeChainMismatch, "last info packet announces a successor", packet_at + 4);
      }
      expected_current = p.next_payload_size;
      p.layer_id = r.u16("layer id");
      const std::size_t op_at = r.pos();
      const auto op = r.u8("op type");
      if (op >= kOpTypeCount) r.fail(ErrorCode::InvariantViolation, "unknown op type", op_at);
      p.op_type = static_cast<OpType>(op);
      const auto n_in = r.u8("input count");
      const auto n_out = r.u8("output count");
      const std::size_t mask_at = r.pos();
      p.attrs.mask = r.u8("attr mask");
      if ((p.attrs.mask & ~kKnownAttrMask) != 0) {
        r.fail(ErrorCode::InvariantViolation, "unknown attribute bits", mask_at);
      }
      const std::size_t payload_at = r.pos();
      if (p.current_payload_size > r.remaining()) {
        r.fail(ErrorCode::TruncatedFrame, "info payload exceeds buffer", payload_at);
      }
      for (int k = 0; k < n_in; ++k) p.inputs.push_back(read_desc(r, true));
      for (int k = 0; k < n_out; ++k) p.outputs.push_back(read_desc(r, false));
      for (int k = 0; k < std::popcount(p.attrs.mask); ++k) p.attrs.values.push_back(r.u16("attr"));
      if (r.pos() - payload_at != p.current_payload_size) {
        r.fail(ErrorCode::SizeChainMismatch,
               "info packet " + std::to_string(i) + " payload is " +
                   std::to_string(r.pos() - payload_at) + " bytes, header says " +
                   std::to_string(p.current_payload_size),
               packet_at);
      }
      frame.info_packets.push_back(std::move(p));
    }
  }
  if (type == PacketType::ModelLoad || type == PacketType::Request || type == PacketType::Return) {
    const std::size_t count_at = r.pos();
    const auto count = r.u32("data count");
    if (type != PacketType::ModelLoad && count == 0) {
      r.fail(ErrorCode::InvariantViolation, "Request/Return without data packets", count_at);
    }
    std::set<std::uint32_t> ids;
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::size_t packet_at = r.pos();
      DataPacket d;
      d.tensor_id = r.u32("tensor id");
      if (!ids.insert(d.tensor_id).second) {
        r.fail(ErrorCode::InvariantViolation, "duplicate tensor id " + std::to_string(d.tensor_id),
               packet_at);
      }
      const std::size_t dt_at = r.pos();
      const auto dt = r.u8("data type");
      if (dt > 2) r.fail(ErrorCode::InvariantViolation, "unknown data type", dt_at);
      d.data_type = static_cast<DataType>(dt);
      d.precision = read_precision(r);
      const std::size_t flag_at = r.pos();
      const auto body = r.u8("body flag");
      d.payload_size = r.u64("payload size");
      if (body > 1 || (body == 1 && d.payload_size == 0)) {
        r.fail(ErrorCode::InvariantViolation, "invalid body flag", flag_at);
      }
      if (body == 1) d.payload = r.bytes(d.payload_size, "payload");
      frame.data_packets.push_back(std::move(d));
    }
  }
  if (r.remaining() != 0) {
    r.fail(ErrorCode::InvariantViolation,
           std::to_string(r.remaining()) + " trailing bytes after frame", r.pos());
  }
  return frame;
}

std::string inspect_frame(std::span<const std::uint8_t> bytes) {
  const auto f = decode_frame(bytes);
  std::ostringstream os;
  os << to_string(f.header.packet_type) << " v" << int(f.header.version)
     << " user_id=" << f.header.user_id << " transaction_id=" << f.header.transaction_id
     << " model_id=" << f.header.model_id << " bytes=" << bytes.size() << '\n';
  for (const auto& p : f.info_packets) {
    os << "  info layer=" << p.layer_id << " op=" << to_string(p.op_type) << " in=[";
    for (std::size_t i = 0; i < p.inputs.size(); ++i) {
      if (i) os << ',';
      os << p.inputs[i].tensor_id << (p.inputs[i].kind == TensorKind::Weight ? 'W' : 'A');
    }
    os << "] out=[";
    for (std::size_t i = 0; i < p.outputs.size(); ++i) {
      if (i) os << ',';
      os << p.outputs[i].tensor_id;
    }
    os << "] payload=" << p.current_payload_size << " next=" << p.next_payload_size << '\n';
  }
  for (const auto& d : f.data_packets) {
    os << "  data tensor=" << d.tensor_id << " type=" << to_string(d.data_type)
       << " precision=" << to_string(d.precision) << " size=" << d.payload_size
       << (d.payload.empty() ? "" : " body") << '\n';
  }
  return os.str();
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path);
}

}  // namespace hsv::umf
