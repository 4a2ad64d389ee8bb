#include <algorithm>
#include <map>

#include "hsv/error.hpp"
#include "hsv/scheduler.hpp"

namespace hsv::sched {

namespace {

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

std::uint64_t share(std::uint64_t total, std::uint64_t part, std::uint64_t whole) {
  return whole == 0 ? 0 : ceil_div(total * part, whole);
}

struct Bytes {
  std::uint64_t param = 0;
  std::uint64_t in = 0;
  std::uint64_t out = 0;
};

// How one axis scales the working set: `fixed` bytes stay whole in every
// slice, `scaled` bytes shrink in proportion to the slice length.
struct AxisPlan {
  SliceAxis axis = SliceAxis::Whole;
  std::uint64_t length = 1;
  std::uint64_t align = 1;
  std::uint64_t fixed = 0;
  std::uint64_t scaled = 0;
};

// Largest slice length meeting the budget, or 0 if none does.
std::uint64_t slice_length(const AxisPlan& a, std::uint64_t budget) {
  if (a.fixed >= budget || a.length == 0) return 0;
  const std::uint64_t room = budget - a.fixed;
  std::uint64_t len = a.scaled == 0 ? a.length : std::min<std::uint64_t>(a.length, room * a.length / a.scaled);
  while (len > 0 && a.fixed + share(a.scaled, len, a.length) > budget) --len;
  if (len >= a.align) len -= len % a.align;
  return len;
}

SubLayerTask make_slice(const model::LayerNode& layer, const model::LayerWork& whole, const Bytes& b,
                        SliceAxis axis, std::uint64_t begin, std::uint64_t end, std::uint64_t length) {
  SubLayerTask t;
  t.layer_id = layer.id;
  t.op = layer.op;
  t.axis = axis;
  t.range_begin = begin;
  t.range_end = end;
  t.work = whole;
  const std::uint64_t part = end - begin;
  auto& c = t.cost;
  c.param_bytes = b.param;
  c.act_in_bytes = b.in;
  c.act_out_bytes = b.out;
  switch (axis) {
    case SliceAxis::Whole: break;
    case SliceAxis::N:
      t.work.matrix->n = part;
      c.param_bytes = share(b.param, part, length);
      c.act_out_bytes = share(b.out, part, length);
      break;
    case SliceAxis::M:
      t.work.matrix->m = part;
      c.act_in_bytes = share(b.in, part, length);
      c.act_out_bytes = share(b.out, part, length);
      break;
    case SliceAxis::Batch:
      t.work.matrix->batch = part;
      c.param_bytes = share(b.param, part, length);
      c.act_in_bytes = share(b.in, part, length);
      c.act_out_bytes = share(b.out, part, length);
      break;
    case SliceAxis::Rows:
      t.work.vector.rows = part;
      c.act_in_bytes = share(b.in, part, length);
      c.act_out_bytes = share(b.out, part, length);
      break;
  }
  if (t.work.matrix) c.mac_ops = t.work.matrix->macs();
  c.vector_ops = cost::op_counts(t.work);
  c.vector_ops[static_cast<int>(arch::EnergyOp::MAC)] = 0;
  c.ops = model::layer_ops(t.work);
  return t;
}

}  // namespace

const char* to_string(SliceAxis a) {
  switch (a) {
    case SliceAxis::Whole: return "whole";
    case SliceAxis::N: return "n";
    case SliceAxis::M: return "m";
    case SliceAxis::Batch: return "batch";
    case SliceAxis::Rows: return "rows";
  }
  return "?";
}

std::vector<SubLayerTask> partition_layer(const model::ModelGraph& g, const model::LayerNode& layer,
                                          const arch::ClusterConfig& cluster,
                                          const PartitionOptions& opts) {
  const model::LayerWork work = model::layer_work(g, layer);
  const Bytes b{g.layer_param_bytes(layer), g.layer_input_act_bytes(layer), g.layer_output_bytes(layer)};
  const auto budget = static_cast<std::uint64_t>(opts.alpha * double(cluster.shared_mem_bytes));

  std::vector<AxisPlan> options;
  if (b.param + b.in + b.out <= budget) {
    options.push_back({SliceAxis::Whole, 1, 1, 0, 0});
  } else if (work.matrix) {
    const auto& m = *work.matrix;
    const std::uint64_t dim = cluster.arrays.empty() ? 1 : cluster.arrays.front().dim;
    if (m.batch > 1) {
      options.push_back({SliceAxis::Batch, m.batch, 1, 0, b.param + b.in + b.out});
    } else {
      if (b.param > 0) options.push_back({SliceAxis::N, m.n, dim, b.in, b.param + b.out});
      options.push_back({SliceAxis::M, m.m, 1, b.param, b.in + b.out});
    }
  } else {
    options.push_back({SliceAxis::Rows, work.vector.rows, 1, b.param, b.in + b.out});
  }

  const AxisPlan* best = nullptr;
  std::uint64_t best_len = 0, best_count = 0;
  for (const auto& a : options) {
    const std::uint64_t len = a.axis == SliceAxis::Whole ? 1 : slice_length(a, budget);
    if (len == 0) continue;
    const std::uint64_t count = ceil_div(a.length, len);
    if (!best || count < best_count) {
      best = &a;
      best_len = len;
      best_count = count;
    }
  }
  if (!best) {
    throw Error(ErrorCode::UnpartitionableLayer,
                "layer " + std::to_string(layer.id) + " ('" + layer.name + "') needs " +
                    std::to_string(b.param + b.in + b.out) + " bytes; no slice fits " +
                    std::to_string(budget) + " bytes of shared memory");
  }

  std::vector<SubLayerTask> out;
  if (best->axis == SliceAxis::Whole) {
    out.push_back(make_slice(layer, work, b, SliceAxis::Whole, 0, 1, 1));
  } else {
    for (std::uint64_t begin = 0; begin < best->length; begin += best_len) {
      out.push_back(make_slice(layer, work, b, best->axis, begin, std::min(best->length, begin + best_len),
                               best->length));
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].task_id = static_cast<std::uint32_t>(i);
    out[i].slice_index = static_cast<std::uint32_t>(i);
    out[i].slice_count = static_cast<std::uint32_t>(out.size());
    out[i].model_id = g.model_id;
  }
  return out;
}

std::vector<SubLayerTask> expand_request(const model::ModelGraph& g, std::uint32_t request_id,
                                         const arch::ClusterConfig& cluster,
                                         std::uint32_t first_task_id, const PartitionOptions& opts) {
  std::vector<SubLayerTask> tasks;
  std::map<std::uint16_t, std::pair<std::size_t, std::size_t>> range;  // layer -> [begin, end) in tasks
  for (const auto& layer : g.layers) {
    auto slices = partition_layer(g, layer, cluster, opts);
    std::vector<std::uint32_t> deps;
    for (auto p : layer.predecessors) {
      const auto [lo, hi] = range.at(p);
      for (std::size_t i = lo; i < hi; ++i) deps.push_back(tasks[i].task_id);
    }
    const std::size_t begin = tasks.size();
    for (auto& s : slices) {
      s.task_id = first_task_id + static_cast<std::uint32_t>(tasks.size());
      s.request_id = request_id;
      s.deps = deps;
      s.reads_request_input = layer.predecessors.empty();
      tasks.push_back(std::move(s));
    }
    range[layer.id] = {begin, tasks.size()};
  }
  std::vector<std::uint32_t> readers(tasks.size(), 0);
  for (const auto& t : tasks) {
    for (auto d : t.deps) ++readers[d - first_task_id];
  }
  for (std::size_t i = 0; i < tasks.size(); ++i) tasks[i].consumers = readers[i];
  return tasks;
}

}  // namespace hsv::sched
