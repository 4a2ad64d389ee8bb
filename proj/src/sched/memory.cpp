#include <algorithm>

#include "hsv/error.hpp"
#include "hsv/scheduler.hpp"

namespace hsv::sched {

namespace {

ParamKey key_of(const SubLayerTask& t) {
  return ParamKey{t.model_id, t.layer_id, t.slice_index, t.slice_count};
}

bool depends_on(const SubLayerTask& t, std::uint32_t producer) {
  return std::find(t.deps.begin(), t.deps.end(), producer) != t.deps.end();
}

}  // namespace

const char* to_string(BlockKind k) {
  switch (k) {
    case BlockKind::Param: return "param";
    case BlockKind::Activation: return "activation";
    case BlockKind::Input: return "input";
  }
  return "?";
}

const char* to_string(MemActionKind k) {
  switch (k) {
    case MemActionKind::Fetch: return "fetch";
    case MemActionKind::Flush: return "flush";
    case MemActionKind::Spill: return "spill";
    case MemActionKind::Read: return "read";
    case MemActionKind::Alloc: return "alloc";
  }
  return "?";
}

SharedMemory::SharedMemory(std::uint64_t capacity, const arch::HardwareConfig& hw)
    : capacity_(capacity), hw_(&hw), log_(std::make_shared<Log>()) {}

std::uint64_t SharedMemory::peak_from(Cycles t) const {
  std::uint64_t usage = 0;
  std::vector<std::pair<Cycles, std::int64_t>> events;
  for (const auto& b : live_) {
    if (b.free <= t) continue;
    if (b.alloc <= t) {
      usage += b.bytes;
    } else {
      events.emplace_back(b.alloc, static_cast<std::int64_t>(b.bytes));
    }
    if (b.free != kNever) events.emplace_back(b.free, -static_cast<std::int64_t>(b.bytes));
  }
  if (events.empty()) return usage;
  // Releases sort before allocations at the same instant.
  std::sort(events.begin(), events.end());
  std::uint64_t peak = usage;
  for (const auto& [time, delta] : events) {
    usage = static_cast<std::uint64_t>(static_cast<std::int64_t>(usage) + delta);
    peak = std::max(peak, usage);
  }
  return peak;
}

std::uint64_t SharedMemory::available_from(Cycles t) const {
  const auto peak = peak_from(t);
  return peak >= capacity_ ? 0 : capacity_ - peak;
}

std::optional<Cycles> SharedMemory::param_ready(const ParamKey& key) const {
  std::optional<Cycles> ready;
  for (const auto& b : live_) {
    if (b.kind != BlockKind::Param || b.free != kNever || !(b.param == key)) continue;
    ready = std::max(ready.value_or(0), b.ready);
  }
  return ready;
}

MemBlock* SharedMemory::find(std::uint64_t id) {
  for (auto& b : live_) {
    if (b.id == id) return &b;
  }
  return nullptr;
}

MemBlock* SharedMemory::find_activation(std::uint32_t producer) {
  for (auto& b : live_) {
    if (b.kind == BlockKind::Activation && b.producer == producer) return &b;
  }
  return nullptr;
}

MemBlock& SharedMemory::add_block(BlockKind kind, std::uint64_t bytes, Cycles alloc) {
  MemBlock b;
  b.id = next_block_++;
  b.kind = kind;
  b.bytes = bytes;
  b.alloc = alloc;
  b.ready = alloc;
  live_.push_back(b);
  return live_.back();
}

std::pair<Cycles, Cycles> SharedMemory::transfer(std::uint64_t bytes, Cycles earliest) {
  const Cycles start = std::max(earliest, channel_free_);
  const Cycles end = start + cost::mem_transfer_cycles(bytes, *hw_);
  channel_free_ = end;
  return {start, end};
}

Cycles SharedMemory::make_room(std::uint64_t bytes, Cycles t, const SubLayerTask& task,
                               MemFetchPlan& plan) {
  const ParamKey own = key_of(task);
  while (available_from(t) < bytes) {
    // Earliest of: a block's scheduled release, or flushing a cached
    // parameter set no longer in use.
    Cycles release = kNever;
    for (const auto& b : live_) {
      if (b.free > t && b.free != kNever) release = std::min(release, b.free);
    }
    const MemBlock* victim = nullptr;
    Cycles flush_at = kNever;
    for (const auto& b : live_) {
      if (b.kind != BlockKind::Param || b.free != kNever || b.param == own) continue;
      const Cycles at = std::max({t, b.busy_until, b.ready});
      if (at < flush_at) {
        flush_at = at;
        victim = &b;
      }
    }
    if (release != kNever && release <= flush_at) {
      t = release;
      continue;
    }
    if (victim) {
      const ParamKey key = victim->param;
      std::uint64_t flushed = 0;
      for (auto& b : live_) {
        if (b.kind == BlockKind::Param && b.param == key && b.free == kNever) {
          b.free = std::max(flush_at, b.busy_until);
          flushed += b.bytes;
        }
      }
      plan.actions.push_back({MemActionKind::Flush, victim->id, flushed, flush_at, flush_at});
      t = flush_at;
      continue;
    }
    // Last resort: write a pinned activation back to external memory.
    MemBlock* spill = nullptr;
    for (auto& b : live_) {
      if (b.kind != BlockKind::Activation || b.free != kNever || b.spilled) continue;
      if (b.ready == kNever || depends_on(task, b.producer)) continue;
      if (!spill || std::max(b.ready, b.busy_until) < std::max(spill->ready, spill->busy_until)) spill = &b;
    }
    if (!spill) {
      throw Error(ErrorCode::CapacityDeadlock,
                  "task " + std::to_string(task.task_id) + " (request " + std::to_string(task.request_id) +
                      ", layer " + std::to_string(task.layer_id) + ") needs " + std::to_string(bytes) +
                      " bytes but shared memory holds only " + std::to_string(capacity_) +
                      " bytes and nothing more can be released");
    }
    const auto [start, end] = transfer(spill->bytes, std::max({t, spill->ready, spill->busy_until}));
    spill->free = end;
    spill->spilled = true;
    plan.actions.push_back({MemActionKind::Spill, spill->id, spill->bytes, start, end});
    t = end;
  }
  return t;
}

MemFetchPlan SharedMemory::schedule(const SubLayerTask& task, Cycles now) {
  MemFetchPlan plan;
  plan.free_bytes = available_from(now);
  Cycles t = now;
  Cycles ready = now;

  const auto& c = task.cost;
  if (c.param_bytes > 0) {
    const ParamKey key = key_of(task);
    if (auto r = param_ready(key)) {
      plan.params_resident = true;
      ready = std::max(ready, *r);
    } else {
      std::uint64_t remaining = c.param_bytes;
      plan.param_bytes = remaining;
      while (remaining > 0) {
        t = make_room(1, t, task, plan);
        const std::uint64_t chunk = std::min(available_from(t), remaining);
        auto& b = add_block(BlockKind::Param, chunk, t);
        b.param = key;
        const auto [start, end] = transfer(chunk, t);
        b.ready = end;
        plan.actions.push_back({MemActionKind::Fetch, b.id, chunk, start, end});
        ready = std::max(ready, end);
        remaining -= chunk;
      }
    }
  }

  auto read_in = [&](std::uint64_t bytes) {
    t = make_room(bytes, t, task, plan);
    auto& b = add_block(BlockKind::Input, bytes, t);
    b.producer = task.task_id;
    const auto [start, end] = transfer(bytes, t);
    b.ready = end;
    plan.actions.push_back({MemActionKind::Read, b.id, bytes, start, end});
    ready = std::max(ready, end);
  };
  for (auto dep : task.deps) {
    const MemBlock* b = find_activation(dep);
    if (b && b->spilled) read_in(b->bytes);
  }
  if (task.reads_request_input && c.act_in_bytes > 0) read_in(c.act_in_bytes);

  if (c.act_out_bytes > 0) {
    t = make_room(c.act_out_bytes, t, task, plan);
    auto& b = add_block(BlockKind::Activation, c.act_out_bytes, t);
    b.producer = task.task_id;
    b.ready = kNever;
    b.pending_readers = task.consumers;
    plan.actions.push_back({MemActionKind::Alloc, b.id, c.act_out_bytes, t, t});
  }
  plan.ready_time = std::max(ready, t);
  return plan;
}

void SharedMemory::bind(const SubLayerTask& task, const MemFetchPlan& plan, Cycles t_start,
                        Cycles t_end) {
  (void)t_start;
  const ParamKey key = key_of(task);
  if (task.cost.param_bytes > 0) {
    for (auto& b : live_) {
      if (b.kind == BlockKind::Param && b.param == key && b.free == kNever) {
        b.busy_until = std::max(b.busy_until, t_end);
      }
    }
  }
  for (auto dep : task.deps) {
    MemBlock* b = find_activation(dep);
    if (!b) continue;
    if (b->pending_readers > 0) --b->pending_readers;
    if (!b->spilled) {
      b->busy_until = std::max(b->busy_until, t_end);
      if (b->pending_readers == 0) b->free = b->busy_until;
    }
  }
  for (const auto& a : plan.actions) {
    MemBlock* b = find(a.block);
    switch (a.kind) {
      case MemActionKind::Fetch:
        log_->transfers.push_back({false, a.bytes, a.start, a.end, task.task_id, BlockKind::Param});
        break;
      case MemActionKind::Read:
        log_->transfers.push_back({false, a.bytes, a.start, a.end, task.task_id, BlockKind::Input});
        if (b) {
          b->busy_until = t_end;
          b->free = t_end;
        }
        break;
      case MemActionKind::Spill:
        log_->transfers.push_back({true, a.bytes, a.start, a.end, task.task_id, BlockKind::Activation});
        break;
      case MemActionKind::Alloc:
        if (b) {
          b->ready = t_end;
          b->busy_until = t_end;
          if (b->pending_readers == 0) b->free = t_end;
        }
        break;
      case MemActionKind::Flush: break;
    }
  }
}

void SharedMemory::retire(Cycles now) {
  auto it = std::stable_partition(live_.begin(), live_.end(), [&](const MemBlock& b) { return b.free > now; });
  for (auto j = it; j != live_.end(); ++j) log_->history.push_back(*j);
  live_.erase(it, live_.end());
}

}  // namespace hsv::sched
