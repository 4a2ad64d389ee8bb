#include "hsv/scheduler.hpp"

#include <algorithm>

#include <json.hpp>

#include "hsv/error.hpp"

namespace hsv::sched {

using arch::ProcessorKind;

const char* to_string(Policy p) { return p == Policy::RoundRobin ? "rr" : "has"; }

Policy parse_policy(const std::string& name) {
  if (name == "rr") return Policy::RoundRobin;
  if (name == "has") return Policy::HeterogeneityAware;
  throw Error(ErrorCode::ConfigError, "unknown scheduler '" + name + "' (expected rr or has)");
}

std::string to_json_line(const Decision& d) {
  nlohmann::ordered_json j;
  j["time"] = d.time;
  j["cluster"] = d.cluster;
  j["queue"] = d.queue;
  j["task"] = d.task_id;
  j["processor"] = std::string(arch::to_string(d.kind)) + std::to_string(d.processor);
  j["t_mem"] = d.estimate.t_mem;
  j["t_task"] = d.estimate.t_task;
  j["t_proc"] = d.estimate.t_proc;
  j["t_start"] = d.estimate.t_start;
  j["t_end"] = d.estimate.t_end;
  j["t_idle"] = d.t_idle;
  return j.dump();
}

std::uint32_t ProcessorState::outstanding(Cycles now) const {
  std::uint32_t n = 0;
  for (auto e : recent_ends) n += e > now ? 1 : 0;
  return n;
}

ClusterScheduler::ClusterScheduler(const arch::HardwareConfig& hw, std::uint32_t cluster_index,
                                   Policy policy, SchedulerOptions opts)
    : hw_(&hw),
      cluster_(cluster_index),
      policy_(policy),
      opts_(opts),
      mem_(hw.clusters.at(cluster_index).shared_mem_bytes, hw) {
  const auto& c = config();
  for (std::size_t i = 0; i < c.arrays.size(); ++i) {
    procs_.push_back({ProcessorKind::Systolic, static_cast<std::uint32_t>(i), c.arrays[i].dim, 0, {}});
  }
  for (std::size_t i = 0; i < c.vectors.size(); ++i) {
    procs_.push_back({ProcessorKind::Vector, static_cast<std::uint32_t>(i), c.vectors[i].lanes, 0, {}});
  }
  queues_.resize(c.num_task_queues);
  if (opts_.lookahead == 0) opts_.lookahead = 1;
}

std::uint32_t ClusterScheduler::add_request(std::uint32_t request_id, std::vector<SubLayerTask> tasks) {
  std::uint32_t q = 0;
  while (q < queues_.size() && queues_[q].active) ++q;
  if (q == queues_.size()) {
    throw Error(ErrorCode::InvariantViolation, "cluster " + std::to_string(cluster_) + " has no free task queue");
  }
  Queue& queue = queues_[q];
  queue = Queue{};
  queue.active = true;
  queue.request_id = request_id;
  for (auto& t : tasks) {
    t.queue = q;
    index_[t.task_id] = tasks_.size();
    queue.tasks.push_back(static_cast<std::uint32_t>(tasks_.size()));
    tasks_.push_back(Slot{std::move(t), false, {}});
  }
  request_queue_[request_id] = q;
  ++in_flight_;
  return q;
}

void ClusterScheduler::release_request(std::uint32_t request_id) {
  auto it = request_queue_.find(request_id);
  if (it == request_queue_.end()) return;
  queues_[it->second].active = false;
  request_queue_.erase(it);
  --in_flight_;
}

bool ClusterScheduler::idle() const {
  for (const auto& q : queues_) {
    if (q.active && q.head < q.tasks.size()) return false;
  }
  return true;
}

const SubLayerTask& ClusterScheduler::task(std::uint32_t task_id) const { return tasks_.at(index_.at(task_id)).task; }

const Booking& ClusterScheduler::booking(std::uint32_t task_id) const {
  return tasks_.at(index_.at(task_id)).booking;
}

std::optional<Cycles> ClusterScheduler::request_finish(std::uint32_t request_id) const {
  auto it = request_queue_.find(request_id);
  if (it == request_queue_.end()) return std::nullopt;
  const Queue& q = queues_[it->second];
  if (q.head < q.tasks.size()) return std::nullopt;
  return q.finish;
}

Cycles ClusterScheduler::deps_end(const SubLayerTask& t) const {
  Cycles end = 0;
  for (auto d : t.deps) end = std::max(end, tasks_[index_.at(d)].booking.t_end);
  return end;
}

void ClusterScheduler::commit(std::uint32_t q, std::size_t proc, const cost::TimeEstimate& e,
                              const MemFetchPlan& plan, Cycles now, std::vector<Booking>& out) {
  Queue& queue = queues_[q];
  Slot& slot = tasks_[queue.tasks[queue.head]];
  ProcessorState& p = procs_[proc];
  const Cycles t_idle = e.t_start - std::max(p.last_end, now);
  mem_.bind(slot.task, plan, e.t_start, e.t_end);
  slot.booked = true;
  slot.booking = Booking{slot.task.task_id, p.kind, p.index, e.t_mem, e.t_start, e.t_end, plan.actions};
  p.last_end = e.t_end;
  p.recent_ends.push_back(e.t_end);
  if (p.recent_ends.size() > opts_.lookahead) p.recent_ends.erase(p.recent_ends.begin());
  ++queue.head;
  queue.finish = std::max(queue.finish, e.t_end);
  decisions_.push_back(Decision{now, cluster_, q, slot.task.task_id, p.kind, p.index, e, t_idle});
  out.push_back(slot.booking);
  rr_pointer_ = (q + 1) % static_cast<std::uint32_t>(queues_.size());
}

// Circular scan; a head goes to the earliest-free processor of its dedicated
// class that has room in its booking window.
bool ClusterScheduler::rr_round(Cycles now, std::vector<Booking>& out) {
  const auto nq = static_cast<std::uint32_t>(queues_.size());
  for (std::uint32_t i = 0; i < nq; ++i) {
    const std::uint32_t q = (rr_pointer_ + i) % nq;
    const Queue& queue = queues_[q];
    if (!queue.active || queue.head >= queue.tasks.size()) continue;
    const SubLayerTask& t = tasks_[queue.tasks[queue.head]].task;
    const ProcessorKind kind = t.work.is_matrix() ? ProcessorKind::Systolic : ProcessorKind::Vector;
    std::optional<std::size_t> proc;
    for (std::size_t p = 0; p < procs_.size(); ++p) {
      const auto& ps = procs_[p];
      if (ps.kind != kind || ps.outstanding(now) >= opts_.lookahead) continue;
      if (!proc || ps.last_end < procs_[*proc].last_end) proc = p;
    }
    if (!proc) continue;
    const auto t_comp = cost::compute_cycles(t.work, kind, config(), hw_->vector_costs);
    const MemFetchPlan plan = mem_.schedule(t, now);
    const auto e = cost::TimeEstimate::make(plan.ready_time, deps_end(t), std::max(now, procs_[*proc].last_end),
                                            *t_comp);
    commit(q, *proc, e, plan, now, out);
    return true;
  }
  return false;
}

// One decision of the heterogeneity-aware policy: estimate every head on
// each processor class, nominate the class finishing first, then pick the
// head that leaves its processor idle the shortest.
bool ClusterScheduler::has_round(Cycles now, std::vector<Booking>& out) {
  struct Choice {
    std::uint32_t q = 0;
    std::size_t proc = 0;
    cost::TimeEstimate est;
    Cycles t_idle = 0;
    SharedMemory mem;
    MemFetchPlan plan;
  };
  bool any_free = false;
  for (const auto& p : procs_) any_free = any_free || p.outstanding(now) < opts_.lookahead;
  if (!any_free) return false;
  std::optional<Choice> best;
  const auto nq = static_cast<std::uint32_t>(queues_.size());
  for (std::uint32_t i = 0; i < nq; ++i) {
    const std::uint32_t q = (rr_pointer_ + i) % nq;
    const Queue& queue = queues_[q];
    if (!queue.active || queue.head >= queue.tasks.size()) continue;
    const SubLayerTask& t = tasks_[queue.tasks[queue.head]].task;

    std::optional<std::size_t> nominee;
    cost::TimeEstimate est;
    std::optional<SharedMemory> trial;
    MemFetchPlan plan;
    for (ProcessorKind kind : {ProcessorKind::Vector, ProcessorKind::Systolic}) {
      const auto t_comp = cost::compute_cycles(t.work, kind, config(), hw_->vector_costs);
      if (!t_comp) continue;
      std::optional<std::size_t> proc;
      for (std::size_t p = 0; p < procs_.size(); ++p) {
        if (procs_[p].kind != kind) continue;
        if (!proc || procs_[p].last_end < procs_[*proc].last_end) proc = p;
      }
      if (!proc) continue;
      if (!trial) {
        trial.emplace(mem_);
        plan = trial->schedule(t, now);
      }
      const Cycles t_proc = std::max(procs_[*proc].last_end, now);
      const auto e = cost::TimeEstimate::make(plan.ready_time, deps_end(t), t_proc, *t_comp);
      if (!nominee || e.t_end < est.t_end) {
        nominee = proc;
        est = e;
      }
    }
    // The nominated processor must have room in its booking window; the
    // head otherwise waits for a later round.
    if (!nominee || procs_[*nominee].outstanding(now) >= opts_.lookahead) continue;
    const Cycles t_idle = est.t_start - std::max(procs_[*nominee].last_end, now);
    if (!best || t_idle < best->t_idle) {
      best = Choice{q, *nominee, est, t_idle, std::move(*trial), std::move(plan)};
    }
  }
  if (!best) return false;
  mem_ = std::move(best->mem);
  commit(best->q, best->proc, best->est, best->plan, now, out);
  return true;
}

std::vector<Booking> ClusterScheduler::schedule(Cycles now) {
  mem_.retire(now);
  std::vector<Booking> out;
  if (policy_ == Policy::RoundRobin) {
    while (rr_round(now, out)) {
    }
  } else {
    while (has_round(now, out)) {
    }
  }
  return out;
}

std::optional<std::uint32_t> load_balance(const std::vector<std::uint32_t>& in_flight,
                                          const std::vector<bool>& accepting) {
  std::optional<std::uint32_t> best;
  for (std::uint32_t c = 0; c < in_flight.size(); ++c) {
    if (c < accepting.size() && !accepting[c]) continue;
    if (!best || in_flight[c] < in_flight[*best]) best = c;
  }
  return best;
}

}  // namespace hsv::sched
