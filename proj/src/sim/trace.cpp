#include <algorithm>
#include <fstream>
#include <map>
#include <unordered_map>

#include <json.hpp>

#include "hsv/error.hpp"
#include "hsv/sim.hpp"

namespace hsv::sim {

namespace {

using ojson = nlohmann::ordered_json;

constexpr int kVectorTidBase = 100;
constexpr int kChannelTid = 1000;

int lane(arch::ProcessorKind kind, std::uint32_t index) {
  return kind == arch::ProcessorKind::Systolic ? int(index) : kVectorTidBase + int(index);
}

ojson meta(const char* what, std::uint32_t pid, int tid, const std::string& name) {
  ojson m;
  m["name"] = what;
  m["ph"] = "M";
  m["pid"] = pid;
  m["tid"] = tid;
  m["args"] = {{"name", name}};
  return m;
}

}  // namespace

std::string trace_event_json(const TraceLog& trace, const arch::HardwareConfig& hw) {
  ojson doc;
  doc["displayTimeUnit"] = "ns";
  doc["otherData"] = {{"time_unit", "cycles"}, {"policy", trace.policy}, {"makespan", trace.makespan}};
  ojson events = ojson::array();
  for (std::uint32_t c = 0; c < hw.clusters.size(); ++c) {
    events.push_back(meta("process_name", c, 0, "cluster " + std::to_string(c)));
    for (std::uint32_t i = 0; i < hw.clusters[c].arrays.size(); ++i) {
      events.push_back(meta("thread_name", c, lane(arch::ProcessorKind::Systolic, i), "systolic " + std::to_string(i)));
    }
    for (std::uint32_t i = 0; i < hw.clusters[c].vectors.size(); ++i) {
      events.push_back(meta("thread_name", c, lane(arch::ProcessorKind::Vector, i), "vector " + std::to_string(i)));
    }
    events.push_back(meta("thread_name", c, kChannelTid, "hbm channel"));
  }
  for (const auto& t : trace.tasks) {
    ojson e;
    e["name"] = std::string(umf::to_string(t.op)) + " r" + std::to_string(t.request_id) + " L" +
                std::to_string(t.layer_id) + (t.slice_count > 1 ? " s" + std::to_string(t.slice_index) : "");
    e["cat"] = "compute";
    e["ph"] = "X";
    e["ts"] = t.t_start;
    e["dur"] = t.t_end - t.t_start;
    e["pid"] = t.cluster;
    e["tid"] = lane(t.kind, t.processor);
    e["args"] = {{"task", t.task_id}, {"request", t.request_id}, {"layer", t.layer_id}, {"ops", t.ops}};
    events.push_back(std::move(e));
  }
  for (const auto& x : trace.transfers) {
    ojson e;
    e["name"] = x.write ? "write" : "read";
    e["cat"] = "memory";
    e["ph"] = "X";
    e["ts"] = x.start;
    e["dur"] = x.end - x.start;
    e["pid"] = x.cluster;
    e["tid"] = kChannelTid;
    e["args"] = {{"task", x.task_id}, {"bytes", x.bytes}};
    events.push_back(std::move(e));
  }
  doc["traceEvents"] = std::move(events);
  return doc.dump();
}

void export_trace(const TraceLog& trace, const arch::HardwareConfig& hw, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << trace_event_json(trace, hw) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

std::string summary_json(const PerfReport& r) {
  ojson j;
  j["makespan_cycles"] = r.makespan_cycles;
  j["seconds"] = r.seconds;
  j["total_ops"] = r.total_ops;
  j["tops"] = r.tops;
  j["joules"] = r.joules;
  j["compute_energy_fj"] = r.compute_energy_fj;
  j["memory_energy_fj"] = r.memory_energy_fj;
  j["watts"] = r.watts;
  j["tops_per_watt"] = r.tops_per_watt;
  j["area_mm2"] = r.area_mm2;
  j["peak_gops"] = r.peak_gops;
  j["hbm_bytes"] = r.hbm_bytes;
  ojson util = ojson::object();
  for (const auto& u : r.resources) util[u.name] = u.utilization_pct;
  j["utilization_pct"] = util;
  j["request_latency_cycles"] = r.request_latency;
  return j.dump();
}

std::string decision_log(const TraceLog& trace) {
  std::string out;
  for (const auto& d : trace.decisions) {
    out += sched::to_json_line(d);
    out += '\n';
  }
  return out;
}

std::uint64_t trace_hash(const TraceLog& trace) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 1099511628211ULL;
    }
  };
  mix(trace.makespan);
  for (const auto& t : trace.tasks) {
    mix(t.task_id);
    mix(t.cluster);
    mix(static_cast<std::uint64_t>(t.kind));
    mix(t.processor);
    mix(t.t_mem);
    mix(t.t_start);
    mix(t.t_end);
  }
  for (const auto& x : trace.transfers) {
    mix(x.cluster);
    mix(x.bytes);
    mix(x.start);
    mix(x.end);
  }
  for (const auto& m : trace.memory) {
    mix(m.bytes);
    mix(m.alloc);
    mix(m.free);
  }
  return h;
}

std::vector<std::string> check_trace(const TraceLog& trace, const arch::HardwareConfig& hw) {
  std::vector<std::string> bad;
  auto fail = [&](std::string msg) { bad.push_back(std::move(msg)); };

  std::unordered_map<std::uint32_t, const TaskRecord*> by_id;
  std::map<std::tuple<std::uint32_t, int, std::uint32_t>, std::vector<const TaskRecord*>> lanes;
  for (const auto& t : trace.tasks) {
    if (!by_id.emplace(t.task_id, &t).second) fail("task " + std::to_string(t.task_id) + " recorded twice");
    if (t.t_end < t.t_start) fail("task " + std::to_string(t.task_id) + " ends before it starts");
    if (t.t_start < t.t_mem) fail("task " + std::to_string(t.task_id) + " starts before its data is ready");
    lanes[{t.cluster, static_cast<int>(t.kind), t.processor}].push_back(&t);
  }

  for (auto& [key, list] : lanes) {
    std::sort(list.begin(), list.end(), [](const TaskRecord* a, const TaskRecord* b) {
      return std::tie(a->t_start, a->t_end) < std::tie(b->t_start, b->t_end);
    });
    for (std::size_t i = 1; i < list.size(); ++i) {
      if (list[i]->t_start < list[i - 1]->t_end) {
        fail("processor overlap: tasks " + std::to_string(list[i - 1]->task_id) + " and " +
             std::to_string(list[i]->task_id));
      }
    }
  }

  for (const auto& t : trace.tasks) {
    for (auto d : t.deps) {
      auto it = by_id.find(d);
      if (it == by_id.end()) {
        fail("task " + std::to_string(t.task_id) + " depends on unexecuted task " + std::to_string(d));
      } else if (t.t_start < it->second->t_end) {
        fail("task " + std::to_string(t.task_id) + " starts before dependency " + std::to_string(d) + " ends");
      }
    }
  }

  std::map<std::uint32_t, std::vector<std::pair<Cycles, std::int64_t>>> usage;
  for (const auto& m : trace.memory) {
    if (m.free < m.alloc) fail("memory block freed before allocation");
    if (m.free == m.alloc) continue;
    usage[m.cluster].emplace_back(m.alloc, static_cast<std::int64_t>(m.bytes));
    usage[m.cluster].emplace_back(m.free, -static_cast<std::int64_t>(m.bytes));
  }
  for (auto& [c, ev] : usage) {
    std::sort(ev.begin(), ev.end());
    std::int64_t level = 0;
    const auto cap = static_cast<std::int64_t>(hw.clusters.at(c).shared_mem_bytes);
    for (const auto& [time, delta] : ev) {
      level += delta;
      if (level > cap) {
        fail("cluster " + std::to_string(c) + " shared memory holds " + std::to_string(level) + " bytes at cycle " +
             std::to_string(time) + " (capacity " + std::to_string(cap) + ")");
        break;
      }
    }
  }

  std::map<std::uint32_t, std::vector<const TransferRecord*>> channels;
  for (const auto& x : trace.transfers) channels[x.cluster].push_back(&x);
  for (auto& [c, list] : channels) {
    std::sort(list.begin(), list.end(), [](auto* a, auto* b) { return a->start < b->start; });
    for (std::size_t i = 1; i < list.size(); ++i) {
      if (list[i]->start < list[i - 1]->end) {
        fail("cluster " + std::to_string(c) + " channel carries two transfers at cycle " + std::to_string(list[i]->start));
      }
    }
  }

  std::unordered_map<std::uint32_t, Cycles> request_end;
  for (const auto& t : trace.tasks) request_end[t.request_id] = std::max(request_end[t.request_id], t.t_end);
  std::unordered_map<std::uint32_t, const RequestRecord*> requests;
  for (const auto& r : trace.requests) {
    requests[r.request_id] = &r;
    if (r.dispatch < r.arrival) fail("request " + std::to_string(r.request_id) + " dispatched before arrival");
    if (r.complete < request_end[r.request_id]) {
      fail("request " + std::to_string(r.request_id) + " completes before its last task");
    }
  }
  for (const auto& t : trace.tasks) {
    auto it = requests.find(t.request_id);
    if (it != requests.end() && t.t_start < it->second->dispatch) {
      fail("task " + std::to_string(t.task_id) + " starts before its request was dispatched");
    }
  }
  return bad;
}

}  // namespace hsv::sim
