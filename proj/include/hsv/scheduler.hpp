#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "hsv/arch.hpp"
#include "hsv/cost.hpp"
#include "hsv/model.hpp"

namespace hsv::sched {

using cost::Cycles;
inline constexpr Cycles kNever = std::numeric_limits<Cycles>::max();

// ---------------------------------------------------------------------------
// Sub-layer tasks.

enum class SliceAxis { Whole, N, M, Batch, Rows };
const char* to_string(SliceAxis a);

struct SubLayerTask {
  std::uint32_t task_id = 0;
  std::uint32_t request_id = 0;
  std::uint32_t model_id = 0;
  std::uint16_t layer_id = 0;
  umf::OpType op = umf::OpType::Conv;
  SliceAxis axis = SliceAxis::Whole;
  std::uint32_t slice_index = 0;
  std::uint32_t slice_count = 1;
  std::uint64_t range_begin = 0;  // along `axis`, half-open
  std::uint64_t range_end = 0;
  model::LayerWork work;
  cost::TaskCost cost;
  std::vector<std::uint32_t> deps;  // task ids whose outputs this task reads
  std::uint32_t consumers = 0;      // tasks reading this task's output
  bool reads_request_input = false;
  std::uint32_t queue = 0;
};

struct PartitionOptions {
  double alpha = 0.5;  // working-set budget as a fraction of shared memory
};

// Slices a layer so each slice's params + activations fit alpha * SM.
// Weighted matrix layers split output columns (N) when parameters dominate
// and output rows (M) otherwise; grouped convs and activation x activation
// products split the batch; vector ops split rows. Slice ids are 0..n-1 and
// dependencies are left empty. Throws UnpartitionableLayer.
std::vector<SubLayerTask> partition_layer(const model::ModelGraph& g, const model::LayerNode& layer,
                                          const arch::ClusterConfig& cluster,
                                          const PartitionOptions& opts = {});

// All tasks of one request in queue order, ids starting at `first_task_id`,
// with dependencies on every slice of each predecessor layer.
std::vector<SubLayerTask> expand_request(const model::ModelGraph& g, std::uint32_t request_id,
                                         const arch::ClusterConfig& cluster,
                                         std::uint32_t first_task_id,
                                         const PartitionOptions& opts = {});

// ---------------------------------------------------------------------------
// Shared memory residency and the external-memory channel.

enum class BlockKind { Param, Activation, Input };
const char* to_string(BlockKind k);

struct ParamKey {
  std::uint32_t model_id = 0;
  std::uint16_t layer_id = 0;
  std::uint32_t slice_index = 0;
  std::uint32_t slice_count = 1;
  bool operator==(const ParamKey&) const = default;
};

struct MemBlock {
  std::uint64_t id = 0;
  BlockKind kind = BlockKind::Param;
  ParamKey param;              // Param blocks
  std::uint32_t producer = 0;  // Activation blocks: producing task; Input: reading task
  std::uint64_t bytes = 0;
  Cycles alloc = 0;
  Cycles ready = 0;
  Cycles free = kNever;
  Cycles busy_until = 0;        // latest end of a task using the block
  std::uint32_t pending_readers = 0;  // Activation: consumers not yet scheduled
  bool spilled = false;
};

enum class MemActionKind { Fetch, Flush, Spill, Read, Alloc };
const char* to_string(MemActionKind k);

struct MemAction {
  MemActionKind kind = MemActionKind::Fetch;
  std::uint64_t block = 0;
  std::uint64_t bytes = 0;
  Cycles start = 0;
  Cycles end = 0;
};

struct MemFetchPlan {
  Cycles ready_time = 0;           // parameters and input activations present
  std::uint64_t param_bytes = 0;   // F at entry
  std::uint64_t free_bytes = 0;    // R at entry
  bool params_resident = false;
  std::vector<MemAction> actions;
};

struct Transfer {
  bool write = false;
  std::uint64_t bytes = 0;
  Cycles start = 0;
  Cycles end = 0;
  std::uint32_t task_id = 0;
  BlockKind kind = BlockKind::Param;
};

// Blocks live on [alloc, free). Capacity holds for every instant: a block is
// only placed at time t if peak usage over [t, inf) leaves room for it.
class SharedMemory {
 public:
  SharedMemory(std::uint64_t capacity, const arch::HardwareConfig& hw);

  std::uint64_t capacity() const { return capacity_; }
  std::uint64_t peak_from(Cycles t) const;
  Cycles channel_free() const { return channel_free_; }

  // Ready time of the cached parameter set for `key`, if present. Flushes
  // release every chunk of a set together.
  std::optional<Cycles> param_ready(const ParamKey& key) const;

  // Plans fetches, flushes and spills for `task` starting no earlier than
  // `now`, mutating this object. Throws CapacityDeadlock.
  MemFetchPlan schedule(const SubLayerTask& task, Cycles now);

  // Records the booked execution window of the task last passed to
  // schedule() and logs the plan's transfers.
  void bind(const SubLayerTask& task, const MemFetchPlan& plan, Cycles t_start, Cycles t_end);

  // Moves blocks freed at or before `now` to history.
  void retire(Cycles now);

  // Copies share one history and transfer log; only bind() and retire()
  // append to it, so trial copies used for estimates leave it untouched.
  const std::vector<MemBlock>& live() const { return live_; }
  const std::vector<MemBlock>& history() const { return log_->history; }
  const std::vector<Transfer>& transfers() const { return log_->transfers; }

 private:
  struct Log {
    std::vector<MemBlock> history;
    std::vector<Transfer> transfers;
  };

  MemBlock* find(std::uint64_t id);
  MemBlock* find_activation(std::uint32_t producer);
  MemBlock& add_block(BlockKind kind, std::uint64_t bytes, Cycles alloc);
  // Books the channel; returns (start, end).
  std::pair<Cycles, Cycles> transfer(std::uint64_t bytes, Cycles earliest);
  // Waits, flushes or spills until `bytes` fit from the returned time on.
  Cycles make_room(std::uint64_t bytes, Cycles t, const SubLayerTask& task, MemFetchPlan& plan);
  std::uint64_t available_from(Cycles t) const;

  std::uint64_t capacity_;
  const arch::HardwareConfig* hw_;
  Cycles channel_free_ = 0;
  std::uint64_t next_block_ = 0;
  std::vector<MemBlock> live_;
  std::shared_ptr<Log> log_;
};

// ---------------------------------------------------------------------------
// Cluster scheduling.

enum class Policy { RoundRobin, HeterogeneityAware };
const char* to_string(Policy p);
Policy parse_policy(const std::string& name);  // "rr" | "has"; throws ConfigError

struct SchedulerOptions {
  PartitionOptions partition;
  // Bookings a processor may hold that have not finished yet (running plus
  // queued behind it). Both policies book into the same window.
  std::uint32_t lookahead = 2;
};

struct Decision {
  Cycles time = 0;
  std::uint32_t cluster = 0;
  std::uint32_t queue = 0;
  std::uint32_t task_id = 0;
  arch::ProcessorKind kind = arch::ProcessorKind::Systolic;
  std::uint32_t processor = 0;
  cost::TimeEstimate estimate;
  Cycles t_idle = 0;
};

// One JSON object per line.
std::string to_json_line(const Decision& d);

struct Booking {
  std::uint32_t task_id = 0;
  arch::ProcessorKind kind = arch::ProcessorKind::Systolic;
  std::uint32_t processor = 0;
  Cycles t_mem = 0;
  Cycles t_start = 0;
  Cycles t_end = 0;
  std::vector<MemAction> mem_actions;
};

struct ProcessorState {
  arch::ProcessorKind kind = arch::ProcessorKind::Systolic;
  std::uint32_t index = 0;
  std::uint32_t size = 0;  // dim or lanes
  Cycles last_end = 0;
  std::vector<Cycles> recent_ends;  // ends of the latest bookings, oldest first
  std::uint32_t outstanding(Cycles now) const;
};

class ClusterScheduler {
 public:
  ClusterScheduler(const arch::HardwareConfig& hw, std::uint32_t cluster_index, Policy policy,
                   SchedulerOptions opts = {});

  const arch::ClusterConfig& config() const { return hw_->clusters[cluster_]; }
  std::uint32_t in_flight() const { return in_flight_; }
  bool can_accept() const { return in_flight_ < config().num_task_queues; }

  // Takes a free task queue. Task ids must be unique within the cluster.
  std::uint32_t add_request(std::uint32_t request_id, std::vector<SubLayerTask> tasks);
  void release_request(std::uint32_t request_id);

  // Runs decision rounds at `now` until nothing more can be placed.
  std::vector<Booking> schedule(Cycles now);

  bool idle() const;  // no unbooked tasks
  const SubLayerTask& task(std::uint32_t task_id) const;
  const Booking& booking(std::uint32_t task_id) const;
  const std::vector<Decision>& decisions() const { return decisions_; }
  const std::vector<ProcessorState>& processors() const { return procs_; }
  SharedMemory& memory() { return mem_; }
  const SharedMemory& memory() const { return mem_; }

  // Latest booked end among a request's tasks once all are booked.
  std::optional<Cycles> request_finish(std::uint32_t request_id) const;

 private:
  struct Queue {
    bool active = false;
    std::uint32_t request_id = 0;
    std::vector<std::uint32_t> tasks;  // slots in tasks_
    std::size_t head = 0;
    Cycles finish = 0;
  };
  struct Slot {
    SubLayerTask task;
    bool booked = false;
    Booking booking;
  };

  bool rr_round(Cycles now, std::vector<Booking>& out);
  bool has_round(Cycles now, std::vector<Booking>& out);
  Cycles deps_end(const SubLayerTask& t) const;
  void commit(std::uint32_t q, std::size_t proc, const cost::TimeEstimate& e, const MemFetchPlan& plan,
              Cycles now, std::vector<Booking>& out);

  const arch::HardwareConfig* hw_;
  std::uint32_t cluster_;
  Policy policy_;
  SchedulerOptions opts_;
  std::vector<ProcessorState> procs_;  // arrays first, then vectors
  SharedMemory mem_;
  std::vector<Queue> queues_;
  std::vector<Slot> tasks_;
  std::unordered_map<std::uint32_t, std::size_t> index_;
  std::unordered_map<std::uint32_t, std::uint32_t> request_queue_;
  std::uint32_t rr_pointer_ = 0;
  std::uint32_t in_flight_ = 0;
  std::vector<Decision> decisions_;
};

// Cluster with the fewest in-flight requests among those accepting work,
// lowest index first; nullopt when all are saturated.
std::optional<std::uint32_t> load_balance(const std::vector<std::uint32_t>& in_flight,
                                          const std::vector<bool>& accepting);

}  // namespace hsv::sched
