#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hsv/umf.hpp"

namespace hsv::model {

using umf::OpType;
using umf::Precision;
using umf::TensorKind;

enum class ModelClass { CNN, Transformer };
const char* to_string(ModelClass c);

struct TensorInfo {
  std::uint32_t id = 0;
  TensorKind kind = TensorKind::Activation;
  std::vector<std::uint32_t> shape;
  Precision precision = Precision::INT8;

  std::uint64_t elements() const;
  std::uint64_t byte_size() const { return elements() * umf::precision_bytes(precision); }
  bool operator==(const TensorInfo&) const = default;
};

struct LayerNode {
  std::uint16_t id = 0;
  std::string name;
  OpType op = OpType::Conv;
  std::vector<std::uint32_t> inputs;   // activation and weight tensor ids, in operand order
  std::vector<std::uint32_t> outputs;
  umf::AttrSpec attrs;
  std::vector<std::uint16_t> predecessors;  // layer ids producing an activation input
};

struct ModelGraph {
  std::uint32_t model_id = 0;
  std::string name;
  ModelClass model_class = ModelClass::CNN;
  std::map<std::uint32_t, TensorInfo> tensors;
  std::vector<std::uint32_t> inputs;  // graph-level activation inputs
  std::vector<LayerNode> layers;      // topological order

  const TensorInfo& tensor(std::uint32_t id) const;
  std::uint64_t total_param_bytes() const;
  std::uint64_t layer_param_bytes(const LayerNode& layer) const;
  std::uint64_t layer_input_act_bytes(const LayerNode& layer) const;
  std::uint64_t layer_output_bytes(const LayerNode& layer) const;
};

// Structural equality: layers, tensors, graph inputs and model id. Name and
// class are not carried by UMF and are ignored.
bool same_structure(const ModelGraph& a, const ModelGraph& b);

// ---------------------------------------------------------------------------
// Work description derived from tensor shapes.

// `batch` independent (M x K) . (K x N) products.
struct MatrixWork {
  std::uint64_t batch = 1;
  std::uint64_t m = 0;
  std::uint64_t k = 0;
  std::uint64_t n = 0;
  std::uint64_t macs() const { return batch * m * k * n; }
  bool operator==(const MatrixWork&) const = default;
};

enum class VectorKind { None, Elementwise, Pool, Lut, Softmax, LayerNorm };

// Vector work over `rows` rows of `width` elements; pooling reads `window`
// inputs per output element.
struct VectorWork {
  VectorKind kind = VectorKind::None;
  std::uint64_t rows = 0;
  std::uint64_t width = 0;
  std::uint64_t window = 1;
  std::uint64_t elements() const { return rows * width; }
  bool operator==(const VectorWork&) const = default;
};

struct LayerWork {
  OpType op = OpType::Conv;
  std::optional<MatrixWork> matrix;  // set for Conv/GEMM/MatMul
  VectorWork vector;                 // set for vector ops
  bool is_matrix() const { return matrix.has_value(); }
  bool operator==(const LayerWork&) const = default;
};

LayerWork layer_work(const ModelGraph& g, const LayerNode& layer);

// 2 x MACs for matrix ops; vector ops count one op per element (per window
// element for pooling); data ops contribute nothing.
std::uint64_t layer_ops(const LayerWork& w);

// ---------------------------------------------------------------------------
// Construction.

struct LayerSpec {
  std::string name;
  OpType op = OpType::Conv;
  std::vector<std::uint32_t> activations;                 // tensor ids
  std::vector<std::vector<std::uint32_t>> weight_shapes;  // new weight tensors
  umf::AttrSpec attrs;
  std::optional<std::vector<std::uint32_t>> output_shape;  // required for Reshape/Transpose
};

// Builds a validated graph; shapes of outputs are inferred from operands.
class GraphBuilder {
 public:
  GraphBuilder(std::string name, ModelClass cls, Precision precision, std::uint32_t model_id = 0);

  std::uint32_t input(std::vector<std::uint32_t> shape);
  std::uint32_t add(const LayerSpec& spec);
  const std::vector<std::uint32_t>& shape(std::uint32_t tensor) const;

  std::uint32_t conv(const std::string& name, std::uint32_t x, std::uint32_t out_channels,
                     std::uint16_t kernel, std::uint16_t stride = 1, std::uint16_t pad = 0,
                     std::uint16_t groups = 1);
  std::uint32_t gemm(const std::string& name, std::uint32_t x, std::uint32_t out_features);
  std::uint32_t matmul(const std::string& name, std::uint32_t a, std::uint32_t b);
  std::uint32_t pool(const std::string& name, std::uint32_t x, std::uint16_t kernel,
                     std::uint16_t stride, std::uint16_t pad = 0);
  std::uint32_t global_pool(const std::string& name, std::uint32_t x);
  std::uint32_t activation(const std::string& name, std::uint32_t x);
  std::uint32_t softmax(const std::string& name, std::uint32_t x);
  std::uint32_t layer_norm(const std::string& name, std::uint32_t x);
  std::uint32_t residual_add(const std::string& name, std::uint32_t a, std::uint32_t b);
  std::uint32_t reshape(const std::string& name, std::uint32_t x, std::vector<std::uint32_t> shape);
  std::uint32_t transpose(const std::string& name, std::uint32_t x, std::vector<std::uint32_t> shape);

  ModelGraph build() &&;

 private:
  ModelGraph graph_;
  Precision precision_;
  std::uint32_t next_tensor_ = 0;
  std::map<std::uint32_t, std::uint16_t> producer_;
};

// Recomputes every layer's output shape and checks edges; throws
// ShapeMismatch / CycleDetected / SchemaError.
void validate_graph(const ModelGraph& g);

// Parses the JSON model description (see README, "Model description format").
ModelGraph ingest_graph(const std::string& text);
ModelGraph ingest_graph_file(const std::string& path);

struct BuiltinOptions {
  std::uint32_t size = 0;  // image side for CNNs, sequence length for transformers; 0 = default
  std::uint32_t batch = 1;
  std::optional<Precision> precision;
  std::uint32_t model_id = 0;
};

const std::vector<std::string>& builtin_names();
bool is_cnn_name(const std::string& name);
ModelGraph builtin_model(const std::string& name, const BuiltinOptions& opts = {});

struct UmfHeaderFields {
  std::uint32_t user_id = 0;
  std::uint32_t transaction_id = 0;
  bool with_bodies = false;  // emit zero-filled tensor bodies
};

umf::UmfFrame to_umf(const ModelGraph& g, const UmfHeaderFields& fields = {});
ModelGraph from_umf(const umf::UmfFrame& frame);

// Keeps layers 0, k, 2k, ... (and the final layer); predecessor edges are
// rewired to the nearest kept ancestors. Shapes are untouched. The result is
// a simulation view and is not expected to pass validate_graph.
ModelGraph reduce_depth(const ModelGraph& g, std::uint32_t keep_every);

}  // namespace hsv::model
