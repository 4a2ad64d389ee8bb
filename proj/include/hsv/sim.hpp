#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "hsv/arch.hpp"
#include "hsv/cost.hpp"
#include "hsv/model.hpp"
#include "hsv/scheduler.hpp"
#include "hsv/workload.hpp"

namespace hsv::sim {

using cost::Cycles;

// Graphs referenced by workload requests. Builtins are built on first use
// with the configured depth reduction; each name gets a distinct model id so
// parameter residency is shared only between requests of the same model.
class ModelLibrary {
 public:
  explicit ModelLibrary(std::uint32_t keep_every = 1, model::BuiltinOptions builtin = {});

  void add(const std::string& name, model::ModelGraph g);
  const model::ModelGraph& get(const std::string& name);
  std::uint32_t keep_every() const { return keep_every_; }

 private:
  std::uint32_t keep_every_;
  model::BuiltinOptions builtin_;
  std::map<std::string, std::shared_ptr<const model::ModelGraph>> graphs_;
};

enum class EventKind { TaskComplete, FetchComplete, FlushComplete, RequestComplete, RequestArrival, TaskDispatch };
const char* to_string(EventKind k);

struct SimEvent {
  Cycles time = 0;
  EventKind kind = EventKind::RequestArrival;
  std::uint32_t id = 0;  // request or task id
  std::uint32_t cluster = 0;
  bool operator==(const SimEvent&) const = default;
};

struct TaskRecord {
  std::uint32_t task_id = 0;
  std::uint32_t request_id = 0;
  std::uint32_t cluster = 0;
  std::uint16_t layer_id = 0;
  umf::OpType op = umf::OpType::Conv;
  std::uint32_t slice_index = 0;
  std::uint32_t slice_count = 1;
  arch::ProcessorKind kind = arch::ProcessorKind::Systolic;
  std::uint32_t processor = 0;
  std::uint32_t processor_size = 0;
  Cycles t_mem = 0;
  Cycles t_start = 0;
  Cycles t_end = 0;
  std::vector<std::uint32_t> deps;
  std::uint64_t mac_ops = 0;
  cost::OpCounts vector_ops{};
  std::uint64_t ops = 0;
  std::uint64_t sram_bytes = 0;  // params + activations touched
  bool operator==(const TaskRecord&) const = default;
};

struct TransferRecord {
  std::uint32_t cluster = 0;
  bool write = false;
  std::uint64_t bytes = 0;
  Cycles start = 0;
  Cycles end = 0;
  std::uint32_t task_id = 0;
  bool operator==(const TransferRecord&) const = default;
};

struct MemoryRecord {
  std::uint32_t cluster = 0;
  sched::BlockKind kind = sched::BlockKind::Param;
  std::uint64_t bytes = 0;
  Cycles alloc = 0;
  Cycles free = 0;
  bool operator==(const MemoryRecord&) const = default;
};

struct RequestRecord {
  std::uint32_t request_id = 0;
  std::string model;
  std::uint32_t cluster = 0;
  Cycles arrival = 0;
  Cycles dispatch = 0;
  Cycles complete = 0;
  bool operator==(const RequestRecord&) const = default;
};

struct TraceLog {
  std::string policy;
  std::uint64_t seed = 0;
  Cycles makespan = 0;
  std::vector<SimEvent> events;
  std::vector<TaskRecord> tasks;
  std::vector<TransferRecord> transfers;
  std::vector<MemoryRecord> memory;
  std::vector<RequestRecord> requests;
  std::vector<sched::Decision> decisions;
};

struct ResourceUse {
  std::string name;  // "c0.systolic1", "c0.vector3"
  Cycles busy = 0;
  double utilization_pct = 0;
};

struct PerfReport {
  Cycles makespan_cycles = 0;
  double seconds = 0;
  std::uint64_t total_ops = 0;
  double tops = 0;
  std::uint64_t compute_energy_fj = 0;
  std::uint64_t memory_energy_fj = 0;
  double joules = 0;
  double watts = 0;
  double tops_per_watt = 0;
  double area_mm2 = 0;
  double peak_gops = 0;
  std::uint64_t hbm_bytes = 0;
  std::vector<ResourceUse> resources;
  std::vector<Cycles> request_latency;
};

struct RunOptions {
  sched::SchedulerOptions scheduler;
  std::uint64_t seed = 0;     // recorded only; execution has no random component
  bool record_events = true;  // keep the SimEvent log (large for big runs)
};

struct SimResult {
  TraceLog trace;
  PerfReport report;
};

// Discrete-event run. Throws CapacityDeadlock / UnpartitionableLayer naming
// the offending task, and NoReadyTask if work remains with nothing pending.
TraceLog run(const workload::Workload& w, const arch::HardwareConfig& hw, sched::Policy policy,
             ModelLibrary& models, const RunOptions& opts = {});

PerfReport compute_report(const TraceLog& trace, const arch::HardwareConfig& hw,
                          const arch::PhysicalModel& phys);

SimResult simulate(const workload::Workload& w, const arch::HardwareConfig& hw, sched::Policy policy,
                   ModelLibrary& models, const RunOptions& opts = {});

// Trace Event Format, timestamps and durations in cycles.
std::string trace_event_json(const TraceLog& trace, const arch::HardwareConfig& hw);
void export_trace(const TraceLog& trace, const arch::HardwareConfig& hw, const std::string& path);

std::string summary_json(const PerfReport& r);
std::string decision_log(const TraceLog& trace);
std::uint64_t trace_hash(const TraceLog& trace);

// Replays a trace against the hardware limits: processor exclusivity,
// dependency and memory-ready ordering, shared-memory capacity, channel
// serialization and request causality. Returns one message per violation.
std::vector<std::string> check_trace(const TraceLog& trace, const arch::HardwareConfig& hw);

}  // namespace hsv::sim
