#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "hsv/arch.hpp"
#include "hsv/model.hpp"

namespace hsv::cost {

using Cycles = std::uint64_t;

// M x K . K x N on a dim x dim weight-stationary array, `batch` times:
// ceil(N/d) * ceil(K/d) * (M + 2d) per product. Preloading the first weight
// tile is part of the memory-ready time; later tiles load behind compute.
Cycles systolic_cycles(const model::MatrixWork& w, std::uint32_t dim);

// Throws UnsupportedOp for work with no matrix component.
Cycles systolic_cycles(const model::LayerWork& w, const arch::SystolicArraySpec& spec);

// Any compute op. Matrix work runs at one MAC per lane per cycle; data
// movement ops (reshape/transpose/concat) take no cycles.
Cycles vector_cycles(const model::LayerWork& w, const arch::VectorProcessorSpec& spec,
                     const arch::VectorCosts& costs);

// latency + ceil(bytes * clock / bandwidth).
Cycles mem_transfer_cycles(std::uint64_t bytes, const arch::HardwareConfig& hw);

// Inputs and result of one placement estimate.
struct TimeEstimate {
  Cycles t_mem = 0;
  Cycles t_task = 0;
  Cycles t_proc = 0;
  Cycles t_start = 0;
  Cycles t_comp = 0;
  Cycles t_end = 0;

  static TimeEstimate make(Cycles t_mem, Cycles t_task, Cycles t_proc, Cycles t_comp);
  bool operator==(const TimeEstimate&) const = default;
};

using OpCounts = std::array<std::uint64_t, arch::kEnergyOpCount>;

arch::EnergyOp energy_op(model::VectorKind kind);

// Table operation counts for a piece of work. Matrix work counts MACs.
OpCounts op_counts(const model::LayerWork& w);

struct TaskCost {
  std::uint64_t mac_ops = 0;
  OpCounts vector_ops{};  // by EnergyOp, MAC slot unused
  std::uint64_t ops = 0;  // arithmetic operations for throughput (2 per MAC)
  std::uint64_t param_bytes = 0;
  std::uint64_t act_in_bytes = 0;
  std::uint64_t act_out_bytes = 0;
  bool operator==(const TaskCost&) const = default;
};

// Cycles for `w` on the first processor of the given class, or nullopt when
// the class cannot execute it.
std::optional<Cycles> compute_cycles(const model::LayerWork& w, arch::ProcessorKind kind,
                                     const arch::ClusterConfig& cluster,
                                     const arch::VectorCosts& costs);

}  // namespace hsv::cost
