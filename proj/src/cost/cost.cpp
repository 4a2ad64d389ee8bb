#include "hsv/cost.hpp"

#include <algorithm>
#include <cmath>

#include "hsv/error.hpp"

namespace hsv::cost {

namespace {

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

}  // namespace

Cycles systolic_cycles(const model::MatrixWork& w, std::uint32_t dim) {
  if (w.macs() == 0) return 0;
  return w.batch * ceil_div(w.n, dim) * ceil_div(w.k, dim) * (w.m + 2ULL * dim);
}

Cycles systolic_cycles(const model::LayerWork& w, const arch::SystolicArraySpec& spec) {
  if (!w.matrix) {
    throw Error(ErrorCode::UnsupportedOp,
                std::string(umf::to_string(w.op)) + " cannot run on a systolic array");
  }
  return systolic_cycles(*w.matrix, spec.dim);
}

Cycles vector_cycles(const model::LayerWork& w, const arch::VectorProcessorSpec& spec,
                     const arch::VectorCosts& costs) {
  const std::uint64_t lanes = spec.lanes;
  if (w.matrix) return ceil_div(w.matrix->macs(), lanes);
  const auto& v = w.vector;
  switch (v.kind) {
    case model::VectorKind::None: return 0;
    case model::VectorKind::Elementwise: return ceil_div(v.elements(), lanes) * costs.cpe_elementwise;
    case model::VectorKind::Pool: return ceil_div(v.elements() * v.window, lanes) * costs.cpe_pool;
    case model::VectorKind::Lut: return ceil_div(v.elements(), lanes) * costs.cpe_lut;
    case model::VectorKind::Softmax:
      return v.rows * ceil_div(v.width, lanes) * (costs.c_exp + costs.c_acc + costs.c_div);
    case model::VectorKind::LayerNorm: return v.rows * ceil_div(v.width, lanes) * costs.cpe_layernorm;
  }
  return 0;
}

Cycles mem_transfer_cycles(std::uint64_t bytes, const arch::HardwareConfig& hw) {
  const long double cycles =
      std::ceil((long double)bytes * (long double)hw.clock_hz / (long double)hw.hbm_bandwidth_bytes_per_s);
  return hw.hbm_latency_cycles + static_cast<Cycles>(cycles);
}

TimeEstimate TimeEstimate::make(Cycles t_mem, Cycles t_task, Cycles t_proc, Cycles t_comp) {
  TimeEstimate e;
  e.t_mem = t_mem;
  e.t_task = t_task;
  e.t_proc = t_proc;
  e.t_start = std::max({t_mem, t_task, t_proc});
  e.t_comp = t_comp;
  e.t_end = e.t_start + t_comp;
  return e;
}

arch::EnergyOp energy_op(model::VectorKind kind) {
  switch (kind) {
    case model::VectorKind::Pool: return arch::EnergyOp::Pooling;
    case model::VectorKind::Lut: return arch::EnergyOp::LUT;
    case model::VectorKind::Softmax: return arch::EnergyOp::Softmax;
    default: return arch::EnergyOp::Etc;
  }
}

OpCounts op_counts(const model::LayerWork& w) {
  OpCounts c{};
  if (w.matrix) {
    c[static_cast<int>(arch::EnergyOp::MAC)] = w.matrix->macs();
  } else if (w.vector.kind != model::VectorKind::None) {
    c[static_cast<int>(energy_op(w.vector.kind))] = model::layer_ops(w);
  }
  return c;
}

std::optional<Cycles> compute_cycles(const model::LayerWork& w, arch::ProcessorKind kind,
                                     const arch::ClusterConfig& cluster,
                                     const arch::VectorCosts& costs) {
  if (kind == arch::ProcessorKind::Systolic) {
    if (!w.matrix || cluster.arrays.empty()) return std::nullopt;
    return systolic_cycles(*w.matrix, cluster.arrays.front().dim);
  }
  if (cluster.vectors.empty()) return std::nullopt;
  return vector_cycles(w, cluster.vectors.front(), costs);
}

}  // namespace hsv::cost
