#include <algorithm>
#include <functional>
#include <numeric>
#include <set>

#include "hsv/error.hpp"
#include "hsv/model.hpp"

namespace hsv::model {

namespace {

using Shape = std::vector<std::uint32_t>;

std::uint64_t product(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::uint64_t{1},
                         [](std::uint64_t a, std::uint32_t b) { return a * b; });
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

[[noreturn]] void mismatch(const std::string& layer, const std::string& msg) {
  throw Error(ErrorCode::ShapeMismatch, "layer '" + layer + "': " + msg);
}

[[noreturn]] void schema(const std::string& layer, const std::string& msg) {
  throw Error(ErrorCode::SchemaError, "layer '" + layer + "': " + msg);
}

std::uint32_t pooled(const std::string& layer, std::uint32_t in, std::uint32_t k, std::uint32_t s,
                     std::uint32_t p) {
  if (k == 0 || s == 0) schema(layer, "kernel and stride must be positive");
  if (in + 2 * p < k) mismatch(layer, "kernel larger than padded input");
  return (in + 2 * p - k) / s + 1;
}

Shape infer_output(const std::string& name, OpType op, const std::vector<const Shape*>& acts,
                   const std::vector<const Shape*>& weights, const umf::AttrSpec& attrs,
                   const std::optional<Shape>& explicit_shape) {
  using umf::Attr;
  auto expect_counts = [&](std::size_t n_act, std::size_t n_w) {
    if (acts.size() != n_act || weights.size() != n_w) {
      schema(name, std::string(umf::to_string(op)) + " expects " + std::to_string(n_act) +
                       " activation and " + std::to_string(n_w) + " weight inputs");
    }
  };
  for (const auto* s : acts) {
    if (s->empty() || product(*s) == 0) mismatch(name, "empty input shape");
  }
  for (const auto* s : weights) {
    if (s->empty() || product(*s) == 0) mismatch(name, "empty weight shape");
  }

  Shape out;
  switch (op) {
    case OpType::Conv: {
      expect_counts(1, 1);
      const Shape& x = *acts[0];
      const Shape& w = *weights[0];
      if (x.size() != 3 && x.size() != 4) mismatch(name, "conv input must be CHW or NCHW");
      if (w.size() != 4) mismatch(name, "conv weight must be [Cout, Cin/g, kh, kw]");
      const std::uint32_t groups = attrs.get(Attr::Groups, 1);
      const std::uint32_t kernel = attrs.get(Attr::Kernel, static_cast<std::uint16_t>(w[2]));
      const std::uint32_t stride = attrs.get(Attr::Stride, 1);
      const std::uint32_t pad = attrs.get(Attr::Padding, 0);
      const std::size_t c = x.size() - 3;
      if (groups == 0 || w[0] % groups != 0) mismatch(name, "output channels not divisible by groups");
      if (x[c] != w[1] * groups) {
        mismatch(name, "input channels " + std::to_string(x[c]) + " != weight " + shape_str(w) +
                           " x groups " + std::to_string(groups));
      }
      if (w[2] != kernel || w[3] != kernel) mismatch(name, "kernel attribute disagrees with weight");
      out = x;
      out[c] = w[0];
      out[c + 1] = pooled(name, x[c + 1], kernel, stride, pad);
      out[c + 2] = pooled(name, x[c + 2], kernel, stride, pad);
      break;
    }
    case OpType::GEMM:
    case OpType::MatMul: {
      if (op == OpType::GEMM) expect_counts(1, 1);
      if (acts.empty() || acts.size() + weights.size() != 2) {
        schema(name, "matrix op expects two operands with at least one activation");
      }
      const Shape& a = *acts[0];
      const Shape& b = acts.size() == 2 ? *acts[1] : *weights[0];
      if (b.size() < 2) mismatch(name, "right operand must have rank >= 2");
      const std::uint32_t k = b[b.size() - 2];
      const std::uint32_t n = b.back();
      if (b.size() > 2) {
        if (a.size() != b.size() || !std::equal(a.begin(), a.end() - 2, b.begin())) {
          mismatch(name, "batch dims disagree: " + shape_str(a) + " vs " + shape_str(b));
        }
        if (a.back() != k) mismatch(name, "inner dims disagree: " + shape_str(a) + " vs " + shape_str(b));
        out = a;
        out.back() = n;
      } else if (a.back() == k) {
        out = a;
        out.back() = n;
      } else if (product(a) == k) {
        out = {n};
      } else {
        mismatch(name, "inner dims disagree: " + shape_str(a) + " vs " + shape_str(b));
      }
      break;
    }
    case OpType::Pool: {
      expect_counts(1, 0);
      const Shape& x = *acts[0];
      if (x.size() < 3) mismatch(name, "pool input must be CHW or NCHW");
      if (!attrs.has(Attr::Kernel)) schema(name, "pool needs a kernel attribute");
      const std::uint32_t k = attrs.get(Attr::Kernel);
      const std::uint32_t s = attrs.get(Attr::Stride, static_cast<std::uint16_t>(k));
      const std::uint32_t p = attrs.get(Attr::Padding, 0);
      out = x;
      out[x.size() - 2] = pooled(name, x[x.size() - 2], k, s, p);
      out[x.size() - 1] = pooled(name, x[x.size() - 1], k, s, p);
      break;
    }
    case OpType::Softmax:
    case OpType::LayerNorm:
    case OpType::Activation:
      expect_counts(1, 0);
      out = *acts[0];
      break;
    case OpType::ElementwiseAdd:
      expect_counts(2, 0);
      if (*acts[0] != *acts[1]) {
        mismatch(name, "operands differ: " + shape_str(*acts[0]) + " vs " + shape_str(*acts[1]));
      }
      out = *acts[0];
      break;
    case OpType::Reshape:
    case OpType::Transpose: {
      expect_counts(1, 0);
      if (!explicit_shape) schema(name, "output shape is required");
      const Shape& x = *acts[0];
      if (product(*explicit_shape) != product(x)) mismatch(name, "element count changes");
      if (op == OpType::Transpose) {
        Shape a = x, b = *explicit_shape;
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        if (a != b) mismatch(name, "not a permutation of " + shape_str(x));
      }
      return *explicit_shape;
    }
    case OpType::Concat: {
      if (acts.empty() || !weights.empty()) schema(name, "concat takes activations only");
      const std::uint32_t axis = attrs.get(Attr::Axis, 0);
      out = *acts[0];
      if (axis >= out.size()) mismatch(name, "concat axis out of range");
      for (std::size_t i = 1; i < acts.size(); ++i) {
        const Shape& s = *acts[i];
        if (s.size() != out.size()) mismatch(name, "concat rank mismatch");
        for (std::size_t d = 0; d < s.size(); ++d) {
          if (d != axis && s[d] != out[d]) mismatch(name, "concat dims disagree");
        }
        out[axis] += s[axis];
      }
      break;
    }
  }
  if (explicit_shape && *explicit_shape != out) {
    mismatch(name, "declared shape " + shape_str(*explicit_shape) + " but inferred " + shape_str(out));
  }
  return out;
}

void split_inputs(const ModelGraph& g, const LayerNode& layer, std::vector<const Shape*>& acts,
                  std::vector<const Shape*>& weights) {
  for (auto id : layer.inputs) {
    const auto& t = g.tensor(id);
    (t.kind == TensorKind::Weight ? weights : acts).push_back(&t.shape);
  }
}

}  // namespace

const char* to_string(ModelClass c) { return c == ModelClass::CNN ? "CNN" : "Transformer"; }

std::uint64_t TensorInfo::elements() const { return product(shape); }

const TensorInfo& ModelGraph::tensor(std::uint32_t id) const {
  auto it = tensors.find(id);
  if (it == tensors.end()) {
    throw Error(ErrorCode::DanglingTensorRef, "tensor " + std::to_string(id) + " not defined");
  }
  return it->second;
}

std::uint64_t ModelGraph::layer_param_bytes(const LayerNode& layer) const {
  std::uint64_t n = 0;
  for (auto id : layer.inputs) {
    const auto& t = tensor(id);
    if (t.kind == TensorKind::Weight) n += t.byte_size();
  }
  return n;
}

std::uint64_t ModelGraph::layer_input_act_bytes(const LayerNode& layer) const {
  std::uint64_t n = 0;
  for (auto id : layer.inputs) {
    const auto& t = tensor(id);
    if (t.kind == TensorKind::Activation) n += t.byte_size();
  }
  return n;
}

std::uint64_t ModelGraph::layer_output_bytes(const LayerNode& layer) const {
  std::uint64_t n = 0;
  for (auto id : layer.outputs) n += tensor(id).byte_size();
  return n;
}

std::uint64_t ModelGraph::total_param_bytes() const {
  std::uint64_t n = 0;
  for (const auto& [id, t] : tensors) {
    if (t.kind == TensorKind::Weight) n += t.byte_size();
  }
  return n;
}

bool same_structure(const ModelGraph& a, const ModelGraph& b) {
  if (a.model_id != b.model_id || a.tensors != b.tensors || a.inputs != b.inputs ||
      a.layers.size() != b.layers.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    const auto& x = a.layers[i];
    const auto& y = b.layers[i];
    if (x.id != y.id || x.op != y.op || x.inputs != y.inputs || x.outputs != y.outputs ||
        x.attrs != y.attrs || x.predecessors != y.predecessors) {
      return false;
    }
  }
  return true;
}

LayerWork layer_work(const ModelGraph& g, const LayerNode& layer) {
  std::vector<const Shape*> acts, weights;
  split_inputs(g, layer, acts, weights);
  LayerWork w;
  w.op = layer.op;
  const Shape& out = g.tensor(layer.outputs.at(0)).shape;
  const std::uint64_t out_elems = product(out);
  const std::uint64_t last = out.back();
  switch (layer.op) {
    case OpType::Conv: {
      const Shape& x = *acts.at(0);
      const Shape& k = *weights.at(0);
      const std::uint64_t groups = layer.attrs.get(umf::Attr::Groups, 1);
      const std::uint64_t batch = x.size() == 4 ? x[0] : 1;
      const std::size_t c = out.size() - 3;
      w.matrix = MatrixWork{groups, batch * out[c + 1] * out[c + 2],
                            std::uint64_t{k[1]} * k[2] * k[3], k[0] / groups};
      break;
    }
    case OpType::GEMM:
    case OpType::MatMul: {
      const Shape& a = *acts.at(0);
      const Shape& b = acts.size() == 2 ? *acts[1] : *weights.at(0);
      const std::uint64_t k = b[b.size() - 2];
      const std::uint64_t n = b.back();
      if (b.size() > 2) {
        std::uint64_t batch = 1;
        for (std::size_t i = 0; i + 2 < a.size(); ++i) batch *= a[i];
        w.matrix = MatrixWork{batch, a[a.size() - 2], k, n};
      } else {
        w.matrix = MatrixWork{1, product(a) / k, k, n};
      }
      break;
    }
    case OpType::Pool: {
      const std::uint64_t kernel = layer.attrs.get(umf::Attr::Kernel);
      w.vector = VectorWork{VectorKind::Pool, out_elems / last, last, kernel * kernel};
      break;
    }
    case OpType::Softmax:
      w.vector = VectorWork{VectorKind::Softmax, out_elems / last, last, 1};
      break;
    case OpType::LayerNorm:
      w.vector = VectorWork{VectorKind::LayerNorm, out_elems / last, last, 1};
      break;
    case OpType::Activation:
      w.vector = VectorWork{VectorKind::Lut, out_elems / last, last, 1};
      break;
    case OpType::ElementwiseAdd:
      w.vector = VectorWork{VectorKind::Elementwise, out_elems / last, last, 1};
      break;
    case OpType::Reshape:
    case OpType::Concat:
    case OpType::Transpose:
      w.vector = VectorWork{VectorKind::None, out_elems / last, last, 1};
      break;
  }
  return w;
}

std::uint64_t layer_ops(const LayerWork& w) {
  if (w.matrix) return 2 * w.matrix->macs();
  switch (w.vector.kind) {
    case VectorKind::None: return 0;
    case VectorKind::Pool: return w.vector.elements() * w.vector.window;
    default: return w.vector.elements();
  }
}

// ---------------------------------------------------------------------------

GraphBuilder::GraphBuilder(std::string name, ModelClass cls, Precision precision,
                           std::uint32_t model_id)
    : precision_(precision) {
  graph_.name = std::move(name);
  graph_.model_class = cls;
  graph_.model_id = model_id;
}

std::uint32_t GraphBuilder::input(std::vector<std::uint32_t> shape) {
  const auto id = next_tensor_++;
  graph_.tensors[id] = TensorInfo{id, TensorKind::Activation, std::move(shape), precision_};
  graph_.inputs.push_back(id);
  return id;
}

const std::vector<std::uint32_t>& GraphBuilder::shape(std::uint32_t tensor) const {
  return graph_.tensor(tensor).shape;
}

std::uint32_t GraphBuilder::add(const LayerSpec& spec) {
  if (graph_.layers.size() >= 0xFFFF) schema(spec.name, "too many layers");
  if (spec.activations.empty() && !umf::is_data_op(spec.op)) {
    schema(spec.name, "compute op needs an activation input");
  }
  std::vector<const Shape*> acts, weights;
  for (auto id : spec.activations) {
    const auto& t = graph_.tensor(id);
    if (t.kind != TensorKind::Activation) schema(spec.name, "activation operand is a weight");
    acts.push_back(&t.shape);
  }
  for (const auto& ws : spec.weight_shapes) weights.push_back(&ws);
  Shape out = infer_output(spec.name, spec.op, acts, weights, spec.attrs, spec.output_shape);

  LayerNode layer;
  layer.id = static_cast<std::uint16_t>(graph_.layers.size());
  layer.name = spec.name;
  layer.op = spec.op;
  layer.attrs = spec.attrs;
  layer.inputs = spec.activations;
  for (auto id : spec.activations) {
    auto it = producer_.find(id);
    if (it != producer_.end() &&
        std::find(layer.predecessors.begin(), layer.predecessors.end(), it->second) ==
            layer.predecessors.end()) {
      layer.predecessors.push_back(it->second);
    }
  }
  for (const auto& ws : spec.weight_shapes) {
    const auto id = next_tensor_++;
    graph_.tensors[id] = TensorInfo{id, TensorKind::Weight, ws, precision_};
    layer.inputs.push_back(id);
  }
  const auto out_id = next_tensor_++;
  graph_.tensors[out_id] = TensorInfo{out_id, TensorKind::Activation, std::move(out), precision_};
  layer.outputs.push_back(out_id);
  producer_[out_id] = layer.id;
  graph_.layers.push_back(std::move(layer));
  return out_id;
}

namespace {
umf::AttrSpec attrs_of(std::initializer_list<std::pair<umf::Attr, std::uint16_t>> kv) {
  umf::AttrSpec a;
  for (auto [k, v] : kv) a.set(k, v);
  return a;
}
}  // namespace

std::uint32_t GraphBuilder::conv(const std::string& name, std::uint32_t x,
                                 std::uint32_t out_channels, std::uint16_t kernel,
                                 std::uint16_t stride, std::uint16_t pad, std::uint16_t groups) {
  const auto& s = shape(x);
  const std::uint32_t cin = s[s.size() - 3];
  LayerSpec spec{name, OpType::Conv, {x}, {{out_channels, cin / groups, kernel, kernel}}, {}, {}};
  spec.attrs = attrs_of({{umf::Attr::Kernel, kernel}, {umf::Attr::Stride, stride}, {umf::Attr::Padding, pad}});
  if (groups != 1) spec.attrs.set(umf::Attr::Groups, groups);
  return add(spec);
}

std::uint32_t GraphBuilder::gemm(const std::string& name, std::uint32_t x, std::uint32_t out_features) {
  const auto& s = shape(x);
  // Flattens CHW feature maps into a single row.
  const std::uint32_t k = s.size() >= 3 || s.size() == 1 ? static_cast<std::uint32_t>(product(s)) : s.back();
  return add(LayerSpec{name, OpType::GEMM, {x}, {{k, out_features}}, {}, {}});
}

std::uint32_t GraphBuilder::matmul(const std::string& name, std::uint32_t a, std::uint32_t b) {
  return add(LayerSpec{name, OpType::MatMul, {a, b}, {}, {}, {}});
}

std::uint32_t GraphBuilder::pool(const std::string& name, std::uint32_t x, std::uint16_t kernel,
                                 std::uint16_t stride, std::uint16_t pad) {
  LayerSpec spec{name, OpType::Pool, {x}, {}, {}, {}};
  spec.attrs = attrs_of({{umf::Attr::Kernel, kernel}, {umf::Attr::Stride, stride}, {umf::Attr::Padding, pad}});
  return add(spec);
}

std::uint32_t GraphBuilder::global_pool(const std::string& name, std::uint32_t x) {
  const auto& s = shape(x);
  const auto k = static_cast<std::uint16_t>(s.back());
  return pool(name, x, k, k, 0);
}

std::uint32_t GraphBuilder::activation(const std::string& name, std::uint32_t x) {
  return add(LayerSpec{name, OpType::Activation, {x}, {}, {}, {}});
}

std::uint32_t GraphBuilder::softmax(const std::string& name, std::uint32_t x) {
  return add(LayerSpec{name, OpType::Softmax, {x}, {}, {}, {}});
}

std::uint32_t GraphBuilder::layer_norm(const std::string& name, std::uint32_t x) {
  return add(LayerSpec{name, OpType::LayerNorm, {x}, {}, {}, {}});
}

std::uint32_t GraphBuilder::residual_add(const std::string& name, std::uint32_t a, std::uint32_t b) {
  return add(LayerSpec{name, OpType::ElementwiseAdd, {a, b}, {}, {}, {}});
}

std::uint32_t GraphBuilder::reshape(const std::string& name, std::uint32_t x,
                                    std::vector<std::uint32_t> shape) {
  return add(LayerSpec{name, OpType::Reshape, {x}, {}, {}, std::move(shape)});
}

std::uint32_t GraphBuilder::transpose(const std::string& name, std::uint32_t x,
                                      std::vector<std::uint32_t> shape) {
  return add(LayerSpec{name, OpType::Transpose, {x}, {}, {}, std::move(shape)});
}

ModelGraph GraphBuilder::build() && {
  validate_graph(graph_);
  return std::move(graph_);
}

// ---------------------------------------------------------------------------

void validate_graph(const ModelGraph& g) {
  if (g.layers.empty()) throw Error(ErrorCode::SchemaError, "graph has no layers");
  std::map<std::uint32_t, std::uint16_t> producer;
  std::map<std::uint16_t, std::size_t> position;
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const auto& layer = g.layers[i];
    if (!position.emplace(layer.id, i).second) {
      throw Error(ErrorCode::SchemaError, "duplicate layer id " + std::to_string(layer.id));
    }
    for (auto out : layer.outputs) {
      if (!producer.emplace(out, layer.id).second) {
        throw Error(ErrorCode::SchemaError, "tensor " + std::to_string(out) + " produced twice");
      }
    }
  }
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const auto& layer = g.layers[i];
    const std::string name = layer.name.empty() ? "#" + std::to_string(layer.id) : layer.name;
    if (layer.outputs.size() != 1) schema(name, "exactly one output expected");
    std::vector<const Shape*> acts, weights;
    std::vector<std::uint16_t> expected_preds;
    for (auto id : layer.inputs) {
      const auto& t = g.tensor(id);
      if (t.kind == TensorKind::Weight) {
        if (producer.count(id)) schema(name, "weight tensor produced by a layer");
        weights.push_back(&t.shape);
        continue;
      }
      acts.push_back(&t.shape);
      auto it = producer.find(id);
      if (it == producer.end()) {
        if (std::find(g.inputs.begin(), g.inputs.end(), id) == g.inputs.end()) {
          throw Error(ErrorCode::DanglingTensorRef,
                      "layer '" + name + "' reads tensor " + std::to_string(id) + " that nothing produces");
        }
        continue;
      }
      if (position.at(it->second) >= i) {
        throw Error(ErrorCode::CycleDetected, "layer '" + name + "' depends on a later layer");
      }
      if (std::find(expected_preds.begin(), expected_preds.end(), it->second) == expected_preds.end()) {
        expected_preds.push_back(it->second);
      }
    }
    if (expected_preds != layer.predecessors) schema(name, "predecessor list inconsistent with inputs");
    if (acts.empty() && !umf::is_data_op(layer.op)) schema(name, "compute op needs an activation input");
    const auto& out = g.tensor(layer.outputs[0]);
    if (out.kind != TensorKind::Activation) schema(name, "output must be an activation");
    std::optional<Shape> declared;
    if (layer.op == OpType::Reshape || layer.op == OpType::Transpose) declared = out.shape;
    const Shape inferred = infer_output(name, layer.op, acts, weights, layer.attrs, declared);
    if (inferred != out.shape) {
      mismatch(name, "output " + shape_str(out.shape) + " but operands give " + shape_str(inferred));
    }
  }
}

ModelGraph reduce_depth(const ModelGraph& g, std::uint32_t keep_every) {
  if (keep_every <= 1) return g;
  std::map<std::uint16_t, const LayerNode*> by_id;
  std::set<std::uint16_t> kept;
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    by_id[g.layers[i].id] = &g.layers[i];
    if (i % keep_every == 0 || i + 1 == g.layers.size()) kept.insert(g.layers[i].id);
  }
  std::map<std::uint16_t, std::vector<std::uint16_t>> memo;
  std::function<const std::vector<std::uint16_t>&(std::uint16_t)> kept_ancestors =
      [&](std::uint16_t id) -> const std::vector<std::uint16_t>& {
    auto it = memo.find(id);
    if (it != memo.end()) return it->second;
    std::vector<std::uint16_t> result;
    for (auto p : by_id.at(id)->predecessors) {
      if (kept.count(p)) {
        result.push_back(p);
      } else {
        for (auto a : kept_ancestors(p)) result.push_back(a);
      }
    }
    std::sort(result.begin(), result.end());
    result.erase(std::unique(result.begin(), result.end()), result.end());
    return memo.emplace(id, std::move(result)).first->second;
  };

  ModelGraph out;
  out.model_id = g.model_id;
  out.name = g.name;
  out.model_class = g.model_class;
  out.inputs = g.inputs;
  for (auto id : g.inputs) out.tensors[id] = g.tensors.at(id);
  for (const auto& layer : g.layers) {
    if (!kept.count(layer.id)) continue;
    LayerNode copy = layer;
    copy.predecessors = kept_ancestors(layer.id);
    for (auto t : layer.inputs) out.tensors[t] = g.tensors.at(t);
    for (auto t : layer.outputs) out.tensors[t] = g.tensors.at(t);
    out.layers.push_back(std::move(copy));
  }
  return out;
}

}  // namespace hsv::model
