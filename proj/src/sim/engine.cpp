#include <algorithm>
#include <deque>
#include <queue>
#include <tuple>

#include "hsv/error.hpp"
#include "hsv/sim.hpp"

namespace hsv::sim {

using sched::Booking;
using sched::ClusterScheduler;

const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::TaskComplete: return "TaskComplete";
    case EventKind::FetchComplete: return "FetchComplete";
    case EventKind::FlushComplete: return "FlushComplete";
    case EventKind::RequestComplete: return "RequestComplete";
    case EventKind::RequestArrival: return "RequestArrival";
    case EventKind::TaskDispatch: return "TaskDispatch";
  }
  return "?";
}

ModelLibrary::ModelLibrary(std::uint32_t keep_every, model::BuiltinOptions builtin)
    : keep_every_(std::max<std::uint32_t>(1, keep_every)), builtin_(builtin) {}

void ModelLibrary::add(const std::string& name, model::ModelGraph g) {
  graphs_[name] = std::make_shared<const model::ModelGraph>(std::move(g));
}

const model::ModelGraph& ModelLibrary::get(const std::string& name) {
  auto it = graphs_.find(name);
  if (it != graphs_.end()) return *it->second;
  const auto& names = model::builtin_names();
  const auto pos = std::find(names.begin(), names.end(), name);
  if (pos == names.end()) throw Error(ErrorCode::UnknownModel, "no model named '" + name + "'");
  model::BuiltinOptions opts = builtin_;
  opts.model_id = static_cast<std::uint32_t>(pos - names.begin()) + 1;
  auto g = model::reduce_depth(model::builtin_model(name, opts), keep_every_);
  return *graphs_.emplace(name, std::make_shared<const model::ModelGraph>(std::move(g))).first->second;
}

namespace {

struct QueuedEvent {
  SimEvent e;
  bool operator>(const QueuedEvent& o) const {
    return std::tuple(e.time, static_cast<int>(e.kind), e.id, e.cluster) >
           std::tuple(o.e.time, static_cast<int>(o.e.kind), o.e.id, o.e.cluster);
  }
};

}  // namespace

TraceLog run(const workload::Workload& w, const arch::HardwareConfig& hw, sched::Policy policy,
             ModelLibrary& models, const RunOptions& opts) {
  arch::validate(hw);
  TraceLog trace;
  trace.policy = sched::to_string(policy);
  trace.seed = opts.seed;

  std::vector<ClusterScheduler> clusters;
  for (std::uint32_t c = 0; c < hw.clusters.size(); ++c) clusters.emplace_back(hw, c, policy, opts.scheduler);

  std::priority_queue<QueuedEvent, std::vector<QueuedEvent>, std::greater<>> events;
  auto post = [&](Cycles t, EventKind k, std::uint32_t id, std::uint32_t cluster) {
    events.push({SimEvent{t, k, id, cluster}});
  };

  std::map<std::uint32_t, std::size_t> by_id;
  for (std::size_t i = 0; i < w.requests.size(); ++i) {
    const auto& r = w.requests[i];
    if (!by_id.emplace(r.request_id, i).second) {
      throw Error(ErrorCode::SchemaError, "duplicate request id " + std::to_string(r.request_id));
    }
    trace.requests.push_back(RequestRecord{r.request_id, r.model, 0, r.arrival, 0, 0});
    post(r.arrival, EventKind::RequestArrival, r.request_id, 0);
  }

  std::deque<std::uint32_t> pending;
  std::vector<std::vector<std::uint32_t>> open(clusters.size());  // requests awaiting a finish time
  std::uint32_t next_task = 0;
  std::size_t completed = 0;

  while (!events.empty()) {
    const Cycles now = events.top().e.time;
    while (!events.empty() && events.top().e.time == now) {
      const SimEvent e = events.top().e;
      events.pop();
      if (opts.record_events) trace.events.push_back(e);
      if (e.kind == EventKind::RequestArrival) {
        pending.push_back(e.id);
      } else if (e.kind == EventKind::RequestComplete) {
        clusters[e.cluster].release_request(e.id);
        trace.requests[by_id.at(e.id)].complete = now;
        ++completed;
      }
    }

    // FIFO dispatch to the least-loaded cluster that has a free queue.
    while (!pending.empty()) {
      std::vector<std::uint32_t> load;
      std::vector<bool> accepting;
      for (const auto& c : clusters) {
        load.push_back(c.in_flight());
        accepting.push_back(c.can_accept());
      }
      const auto target = sched::load_balance(load, accepting);
      if (!target) break;
      const std::uint32_t rid = pending.front();
      pending.pop_front();
      auto& rec = trace.requests[by_id.at(rid)];
      const auto& g = models.get(rec.model);
      auto tasks = sched::expand_request(g, rid, clusters[*target].config(), next_task, opts.scheduler.partition);
      next_task += static_cast<std::uint32_t>(tasks.size());
      clusters[*target].add_request(rid, std::move(tasks));
      rec.cluster = *target;
      rec.dispatch = now;
      open[*target].push_back(rid);
    }

    for (std::uint32_t c = 0; c < clusters.size(); ++c) {
      auto& cl = clusters[c];
      const std::vector<Booking> bookings = cl.schedule(now);
      for (const auto& b : bookings) {
        const auto& t = cl.task(b.task_id);
        TaskRecord r;
        r.task_id = t.task_id;
        r.request_id = t.request_id;
        r.cluster = c;
        r.layer_id = t.layer_id;
        r.op = t.op;
        r.slice_index = t.slice_index;
        r.slice_count = t.slice_count;
        r.kind = b.kind;
        r.processor = b.processor;
        r.processor_size = b.kind == arch::ProcessorKind::Systolic ? cl.config().arrays[b.processor].dim
                                                                   : cl.config().vectors[b.processor].lanes;
        r.t_mem = b.t_mem;
        r.t_start = b.t_start;
        r.t_end = b.t_end;
        r.deps = t.deps;
        r.mac_ops = t.cost.mac_ops;
        r.vector_ops = t.cost.vector_ops;
        r.ops = t.cost.ops;
        r.sram_bytes = t.cost.param_bytes + t.cost.act_in_bytes + t.cost.act_out_bytes;
        trace.tasks.push_back(std::move(r));
        post(b.t_start, EventKind::TaskDispatch, b.task_id, c);
        post(b.t_end, EventKind::TaskComplete, b.task_id, c);
        for (const auto& a : b.mem_actions) {
          if (a.kind == sched::MemActionKind::Fetch || a.kind == sched::MemActionKind::Read) {
            post(a.end, EventKind::FetchComplete, b.task_id, c);
          } else if (a.kind == sched::MemActionKind::Flush || a.kind == sched::MemActionKind::Spill) {
            post(std::max(a.end, now), EventKind::FlushComplete, b.task_id, c);
          }
        }
      }
      auto& waiting = open[c];
      for (auto it = waiting.begin(); it != waiting.end();) {
        if (auto finish = cl.request_finish(*it)) {
          post(std::max(*finish, now), EventKind::RequestComplete, *it, c);
          it = waiting.erase(it);
        } else {
          ++it;
        }
      }
    }
  }

  if (completed != w.requests.size()) {
    throw Error(ErrorCode::NoReadyTask, std::to_string(w.requests.size() - completed) +
                                            " request(s) never completed; no task could be scheduled");
  }

  for (std::uint32_t c = 0; c < clusters.size(); ++c) {
    const auto& mem = clusters[c].memory();
    for (const auto& t : mem.transfers()) {
      trace.transfers.push_back(TransferRecord{c, t.write, t.bytes, t.start, t.end, t.task_id});
    }
    for (const auto& d : clusters[c].decisions()) trace.decisions.push_back(d);
  }
  for (const auto& t : trace.tasks) trace.makespan = std::max(trace.makespan, t.t_end);
  for (const auto& t : trace.transfers) trace.makespan = std::max(trace.makespan, t.end);
  for (const auto& r : trace.requests) trace.makespan = std::max(trace.makespan, r.complete);
  for (std::uint32_t c = 0; c < clusters.size(); ++c) {
    const auto& mem = clusters[c].memory();
    auto add = [&](const sched::MemBlock& b) {
      const Cycles free = b.free == sched::kNever ? std::max(trace.makespan, b.alloc) : b.free;
      trace.memory.push_back(MemoryRecord{c, b.kind, b.bytes, b.alloc, free});
    };
    for (const auto& b : mem.history()) add(b);
    for (const auto& b : mem.live()) add(b);
  }
  std::stable_sort(trace.decisions.begin(), trace.decisions.end(), [](const auto& a, const auto& b) {
    return std::tie(a.time, a.cluster) < std::tie(b.time, b.cluster);
  });
  return trace;
}

SimResult simulate(const workload::Workload& w, const arch::HardwareConfig& hw, sched::Policy policy,
                   ModelLibrary& models, const RunOptions& opts) {
  SimResult r;
  r.trace = run(w, hw, policy, models, opts);
  r.report = compute_report(r.trace, hw, arch::PhysicalModel::standard());
  return r;
}

}  // namespace hsv::sim
