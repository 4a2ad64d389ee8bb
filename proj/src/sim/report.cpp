#include <algorithm>
#include <map>

#include "hsv/sim.hpp"

namespace hsv::sim {

using arch::EnergyOp;
using arch::ProcessorKind;

PerfReport compute_report(const TraceLog& trace, const arch::HardwareConfig& hw,
                          const arch::PhysicalModel& phys) {
  PerfReport r;
  r.makespan_cycles = trace.makespan;
  r.seconds = double(trace.makespan) / hw.clock_hz;
  r.area_mm2 = arch::total_area_mm2(hw, phys);
  r.peak_gops = arch::peak_performance_gops(hw);

  std::uint64_t sram_bytes = 0;
  std::map<std::tuple<std::uint32_t, int, std::uint32_t>, Cycles> busy;
  for (const auto& t : trace.tasks) {
    r.total_ops += t.ops;
    if (t.mac_ops > 0) r.compute_energy_fj += t.mac_ops * phys.energy_fj(EnergyOp::MAC, t.kind, t.processor_size);
    for (int k = 1; k < arch::kEnergyOpCount; ++k) {
      if (t.vector_ops[k] == 0) continue;
      r.compute_energy_fj += t.vector_ops[k] * phys.energy_fj(static_cast<EnergyOp>(k), t.kind, t.processor_size);
    }
    sram_bytes += t.sram_bytes;
    busy[{t.cluster, static_cast<int>(t.kind), t.processor}] += t.t_end - t.t_start;
  }
  for (const auto& x : trace.transfers) {
    r.hbm_bytes += x.bytes;
    sram_bytes += x.bytes;
  }
  r.memory_energy_fj = r.hbm_bytes * phys.hbm_fj_per_byte + sram_bytes * phys.sram_fj_per_byte;
  r.joules = double(r.compute_energy_fj + r.memory_energy_fj) * 1e-15;
  if (r.seconds > 0) {
    r.tops = double(r.total_ops) / r.seconds / 1e12;
    r.watts = r.joules / r.seconds;
  }
  if (r.watts > 0) r.tops_per_watt = r.tops / r.watts;

  for (std::uint32_t c = 0; c < hw.clusters.size(); ++c) {
    const auto& cl = hw.clusters[c];
    auto add = [&](ProcessorKind kind, std::uint32_t i) {
      ResourceUse u;
      u.name = "c" + std::to_string(c) + "." + arch::to_string(kind) + std::to_string(i);
      auto it = busy.find({c, static_cast<int>(kind), i});
      u.busy = it == busy.end() ? 0 : it->second;
      u.utilization_pct = trace.makespan ? 100.0 * double(u.busy) / double(trace.makespan) : 0.0;
      r.resources.push_back(u);
    };
    for (std::uint32_t i = 0; i < cl.arrays.size(); ++i) add(ProcessorKind::Systolic, i);
    for (std::uint32_t i = 0; i < cl.vectors.size(); ++i) add(ProcessorKind::Vector, i);
  }
  for (const auto& q : trace.requests) r.request_latency.push_back(q.complete - q.arrival);
  return r;
}

}  // namespace hsv::sim
