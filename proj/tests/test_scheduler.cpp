#include <doctest.h>

#include <map>

#include "gen.hpp"
#include "hsv/arch.hpp"
#include "hsv/cost.hpp"
#include "hsv/error.hpp"
#include "hsv/scheduler.hpp"
#include "oracles.hpp"

using namespace hsv;
using namespace hsv::sched;
using arch::kMiB;
using arch::ProcessorKind;

namespace {

// 800 MHz over 256 GB/s: 320 bytes per cycle plus 100 cycles of latency.
std::uint64_t transfer_oracle(std::uint64_t bytes) { return 100 + (bytes + 319) / 320; }

SubLayerTask param_task(std::uint32_t id, std::uint64_t param_bytes) {
  SubLayerTask t;
  t.task_id = id;
  t.model_id = id + 1;
  t.layer_id = std::uint16_t(id);
  t.op = umf::OpType::GEMM;
  t.work.op = umf::OpType::GEMM;
  t.work.matrix = model::MatrixWork{1, 16, 16, 16};
  t.cost.param_bytes = param_bytes;
  return t;
}

SubLayerTask matrix_task(std::uint32_t id, std::uint64_t m, std::uint64_t k, std::uint64_t n) {
  SubLayerTask t;
  t.task_id = id;
  t.layer_id = std::uint16_t(id);
  t.op = umf::OpType::GEMM;
  t.work.op = umf::OpType::GEMM;
  t.work.matrix = model::MatrixWork{1, m, k, n};
  return t;
}

SubLayerTask vector_task(std::uint32_t id, std::uint64_t elements) {
  SubLayerTask t;
  t.task_id = id;
  t.layer_id = std::uint16_t(id);
  t.op = umf::OpType::Activation;
  t.work.op = umf::OpType::Activation;
  t.work.vector = {model::VectorKind::Lut, 1, elements, 1};
  return t;
}

std::vector<SubLayerTask> chain(std::vector<SubLayerTask> ts) {
  for (std::size_t i = 1; i < ts.size(); ++i) ts[i].deps = {ts[i - 1].task_id};
  for (std::size_t i = 0; i + 1 < ts.size(); ++i) ts[i].consumers = 1;
  return ts;
}

// Drives a scheduler to completion, rounds at every booking end.
std::map<std::uint32_t, Booking> drive(ClusterScheduler& s) {
  std::map<std::uint32_t, Booking> out;
  std::set<Cycles> events{0};
  Cycles now = 0;
  while (true) {
    for (auto& b : s.schedule(now)) {
      events.insert(b.t_end);
      out[b.task_id] = b;
    }
    if (s.idle()) break;
    auto next = events.upper_bound(now);
    REQUIRE(next != events.end());
    now = *next;
  }
  return out;
}

Cycles makespan(const std::map<std::uint32_t, Booking>& b) {
  Cycles m = 0;
  for (auto& [id, x] : b) m = std::max(m, x.t_end);
  return m;
}

}  // namespace

TEST_CASE("partitioning") {
  const auto hw = arch::make_config(1, 32, 1, 32, 45, 1);
  const auto& cluster = hw.clusters[0];

  SUBCASE("small layer stays whole") {
    model::GraphBuilder b("fc", model::ModelClass::CNN, umf::Precision::INT8);
    b.gemm("fc", b.input({1, 1024}), 1024);  // 1 MiB of weights
    const auto g = std::move(b).build();
    const auto slices = partition_layer(g, g.layers[0], cluster);
    REQUIRE(slices.size() == 1);
    CHECK(slices[0].axis == SliceAxis::Whole);
  }

  SUBCASE("100 MB layer splits its output columns") {
    model::GraphBuilder b("fc", model::ModelClass::CNN, umf::Precision::INT8);
    b.gemm("fc", b.input({1, 10240}), 10240);  // 100 MiB of weights
    const auto g = std::move(b).build();
    const auto& layer = g.layers[0];
    const auto slices = partition_layer(g, layer, cluster);
    CHECK(slices.size() >= 5);
    std::uint64_t macs = 0, params = 0;
    for (const auto& s : slices) {
      CHECK(s.axis == SliceAxis::N);
      CHECK(s.cost.param_bytes <= 45 * kMiB / 2);
      CHECK(s.cost.param_bytes + s.cost.act_in_bytes + s.cost.act_out_bytes <= 45 * kMiB / 2);
      macs += s.work.matrix->macs();
      params += s.cost.param_bytes;
    }
    CHECK(macs == model::layer_work(g, layer).matrix->macs());
    CHECK(params == g.layer_param_bytes(layer));
  }

  SUBCASE("vector layers split rows and conserve elements") {
    model::GraphBuilder b("big", model::ModelClass::Transformer, umf::Precision::FP16);
    b.softmax("sm", b.input({64, 4096, 256}));  // 128 MiB in, 128 MiB out
    const auto g = std::move(b).build();
    const auto slices = partition_layer(g, g.layers[0], cluster);
    CHECK(slices.size() > 1);
    std::uint64_t elems = 0;
    for (const auto& s : slices) {
      CHECK(s.axis == SliceAxis::Rows);
      elems += s.work.vector.elements();
    }
    CHECK(elems == 64ULL * 4096 * 256);
  }

  SUBCASE("a row too large for the budget is refused") {
    const auto tiny = arch::make_config(1, 32, 1, 32, 1, 1);
    model::GraphBuilder b("wide", model::ModelClass::Transformer, umf::Precision::FP32);
    b.softmax("sm", b.input({1, 1 << 20}));
    const auto g = std::move(b).build();
    try {
      partition_layer(g, g.layers[0], tiny.clusters[0]);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::UnpartitionableLayer);
    }
  }
}

TEST_CASE("request expansion wires slice dependencies") {
  const auto hw = arch::make_config(1, 32, 1, 32, 45, 1);
  model::GraphBuilder b("two", model::ModelClass::CNN, umf::Precision::INT8);
  b.activation("act", b.gemm("fc", b.input({1, 10240}), 10240));
  const auto g = std::move(b).build();
  const auto tasks = expand_request(g, 5, hw.clusters[0], 100);
  REQUIRE(tasks.size() >= 6);
  const auto& last = tasks.back();
  CHECK(last.op == umf::OpType::Activation);
  CHECK(last.deps.size() == tasks.size() - 1);
  CHECK(tasks.front().task_id == 100);
  CHECK(tasks.front().reads_request_input);
  for (std::size_t i = 0; i + 1 < tasks.size(); ++i) CHECK(tasks[i].consumers == 1);
}

TEST_CASE("memory planning") {
  const auto hw = arch::make_config(1, 16, 1, 16, 45, 1);

  SUBCASE("empty memory fetches parameters then the input") {
    SharedMemory mem(45 * kMiB, hw);
    auto t = param_task(0, 1 * kMiB);
    t.reads_request_input = true;
    t.cost.act_in_bytes = 64 * 1024;
    const auto plan = mem.schedule(t, 0);
    REQUIRE(plan.actions.size() == 2);
    CHECK(plan.actions[0].kind == MemActionKind::Fetch);
    CHECK(plan.actions[1].kind == MemActionKind::Read);
    CHECK(plan.ready_time == transfer_oracle(1 * kMiB) + transfer_oracle(64 * 1024));
  }

  SUBCASE("resident parameters need no transfer") {
    SharedMemory mem(45 * kMiB, hw);
    const auto t = param_task(0, 2 * kMiB);
    const auto first = mem.schedule(t, 0);
    mem.bind(t, first, first.ready_time, first.ready_time + 10);
    const auto again = mem.schedule(t, 5);
    CHECK(again.params_resident);
    CHECK(again.param_bytes == 0);
    CHECK(again.actions.empty());
    CHECK(again.ready_time == transfer_oracle(2 * kMiB));
  }

  SUBCASE("step-through: partial fetch, wait, flush, fetch the rest") {
    SharedMemory mem(45 * kMiB, hw);
    const auto holder = param_task(0, 30 * kMiB);
    const auto p0 = mem.schedule(holder, 0);
    mem.bind(holder, p0, p0.ready_time, 1'000'000);
    const Cycles channel = transfer_oracle(30 * kMiB);

    const auto big = param_task(1, 40 * kMiB);
    const auto plan = mem.schedule(big, 0);
    CHECK(plan.free_bytes == 15 * kMiB);
    CHECK(plan.param_bytes == 40 * kMiB);
    struct Step {
      MemActionKind kind;
      std::uint64_t bytes;
      Cycles start;
      Cycles end;
    };
    const std::vector<Step> expected{
        {MemActionKind::Fetch, 15 * kMiB, channel, channel + transfer_oracle(15 * kMiB)},
        {MemActionKind::Flush, 30 * kMiB, 1'000'000, 1'000'000},
        {MemActionKind::Fetch, 25 * kMiB, 1'000'000, 1'000'000 + transfer_oracle(25 * kMiB)},
    };
    REQUIRE(plan.actions.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
      CAPTURE(i);
      CHECK(plan.actions[i].kind == expected[i].kind);
      CHECK(plan.actions[i].bytes == expected[i].bytes);
      CHECK(plan.actions[i].start == expected[i].start);
      CHECK(plan.actions[i].end == expected[i].end);
    }
    CHECK(plan.ready_time == 1'000'000 + transfer_oracle(25 * kMiB));
    CHECK(mem.peak_from(0) <= 45 * kMiB);
  }

  SUBCASE("a block larger than memory deadlocks") {
    SharedMemory mem(4 * kMiB, hw);
    auto t = param_task(0, 1 * kMiB);
    t.cost.act_out_bytes = 8 * kMiB;
    try {
      mem.schedule(t, 0);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::CapacityDeadlock);
    }
  }
}

TEST_CASE("load balancing") {
  CHECK(load_balance({3}, {true}) == 0u);
  CHECK(load_balance({2, 0, 1}, {true, true, true}) == 1u);
  CHECK(load_balance({0, 0}, {false, true}) == 1u);
  CHECK(!load_balance({8, 8}, {false, false}).has_value());
  // Eight arrivals over four idle clusters, replayed by hand: 2 each.
  std::vector<std::uint32_t> in_flight(4, 0);
  for (int r = 0; r < 8; ++r) {
    const auto c = load_balance(in_flight, {true, true, true, true});
    REQUIRE(c.has_value());
    CHECK(*c == std::uint32_t(r % 4));
    ++in_flight[*c];
  }
  CHECK(in_flight == std::vector<std::uint32_t>{2, 2, 2, 2});
}

TEST_CASE("round robin") {
  SUBCASE("two array heads go out in queue order") {
    const auto hw = arch::make_config(2, 16, 1, 16, 45, 1);
    ClusterScheduler s(hw, 0, Policy::RoundRobin);
    s.add_request(0, {matrix_task(0, 16, 16, 16)});
    s.add_request(1, {matrix_task(1, 16, 16, 16)});
    const auto b = s.schedule(0);
    REQUIRE(b.size() == 2);
    CHECK(b[0].task_id == 0);
    CHECK(b[1].task_id == 1);
    CHECK(b[0].processor != b[1].processor);
    for (auto& x : b) CHECK(x.kind == ProcessorKind::Systolic);
  }

  SUBCASE("a vector head waits while only arrays are free") {
    const auto hw = arch::make_config(1, 16, 1, 16, 45, 1);
    ClusterScheduler s(hw, 0, Policy::RoundRobin, SchedulerOptions{{}, 1});
    s.add_request(0, {vector_task(0, 16 * 1000)});
    s.add_request(1, {vector_task(1, 16)});
    s.add_request(2, {matrix_task(2, 16, 16, 16)});
    const auto first = s.schedule(0);
    REQUIRE(first.size() == 2);
    CHECK(first[0].task_id == 0);
    CHECK(first[1].task_id == 2);
    const auto later = s.schedule(1000);
    REQUIRE(later.size() == 1);
    CHECK(later[0].task_id == 1);
    CHECK(later[0].kind == ProcessorKind::Vector);
  }

  SUBCASE("a single queue is FIFO on dedicated processors") {
    const auto hw = arch::make_config(1, 16, 1, 16, 45, 1);
    ClusterScheduler s(hw, 0, Policy::RoundRobin);
    s.add_request(0, chain({matrix_task(0, 16, 16, 16), vector_task(1, 64), matrix_task(2, 8, 16, 16)}));
    const auto b = drive(s);
    CHECK(b.at(0).kind == ProcessorKind::Systolic);
    CHECK(b.at(1).kind == ProcessorKind::Vector);
    CHECK(b.at(2).kind == ProcessorKind::Systolic);
    std::vector<std::uint32_t> order;
    for (const auto& d : s.decisions()) order.push_back(d.task_id);
    CHECK(order == std::vector<std::uint32_t>{0, 1, 2});
    CHECK(b.at(1).t_start >= b.at(0).t_end);
    CHECK(b.at(2).t_start >= b.at(1).t_end);
  }
}

TEST_CASE("heterogeneity-aware scheduling") {
  SUBCASE("single candidate goes to the faster class") {
    const auto hw = arch::make_config(1, 16, 1, 16, 45, 1);
    ClusterScheduler s(hw, 0, Policy::HeterogeneityAware);
    s.add_request(0, {matrix_task(0, 16, 16, 16)});
    const auto b = s.schedule(0);
    REQUIRE(b.size() == 1);
    CHECK(b[0].kind == ProcessorKind::Systolic);
    CHECK(b[0].t_end - b[0].t_start == 48);
    REQUIRE(s.decisions().size() == 1);
    CHECK(s.decisions()[0].t_idle == 0);
    CHECK(s.decisions()[0].estimate.t_comp == 48);
  }

  SUBCASE("the head that leaves the array idle longer waits") {
    const auto hw = arch::make_config(1, 16, 1, 16, 45, 1);
    ClusterScheduler s(hw, 0, Policy::HeterogeneityAware);
    auto waiting = param_task(0, 64 * 1024);  // fetch keeps the array idle for t_mem cycles
    waiting.request_id = 0;
    const Cycles t_mem = transfer_oracle(64 * 1024);
    s.add_request(0, {waiting});
    s.add_request(1, {matrix_task(1, 16, 16, 16)});
    drive(s);
    REQUIRE(s.decisions().size() == 2);
    CHECK(s.decisions()[0].task_id == 1);
    CHECK(s.decisions()[0].t_idle == 0);
    // Both orders on the array, enumerated: running q1 first hides its 48
    // cycles under the fetch.
    const Cycles q0_first = t_mem + 48 + 48;
    const Cycles q1_first = std::max<Cycles>(48, t_mem) + 48;
    CHECK(q1_first < q0_first);
    CHECK(s.booking(0).t_end == q1_first);
  }

  SUBCASE("figure-style mix: HAS beats RR") {
    // Three requests: a CNN-like chain of big products, and two
    // transformer-like chains of small products and vector work.
    std::vector<std::vector<SubLayerTask>> reqs{
        chain({matrix_task(0, 784, 144, 64), vector_task(1, 50176), matrix_task(2, 784, 576, 64)}),
        chain({matrix_task(3, 1, 768, 64), vector_task(4, 4096), matrix_task(5, 1, 64, 768)}),
        chain({matrix_task(6, 2, 512, 32), matrix_task(7, 2, 32, 512), vector_task(8, 1024)})};
    Cycles spans[2];
    int i = 0;
    for (auto policy : {Policy::RoundRobin, Policy::HeterogeneityAware}) {
      const auto hw = arch::make_config(1, 16, 2, 16, 45, 1);
      ClusterScheduler s(hw, 0, policy);
      for (std::uint32_t r = 0; r < reqs.size(); ++r) {
        auto ts = reqs[r];
        for (auto& t : ts) t.request_id = r;
        s.add_request(r, ts);
      }
      spans[i++] = makespan(drive(s));
    }
    CHECK(spans[1] < spans[0]);
  }
}

TEST_CASE("schedules respect dependencies and never beat the exhaustive optimum") {
  gen::Rng rng(99);
  for (int i = 0; i < 30; ++i) {
    const auto job = gen::random_toy_job(rng, 16, 16);
    const auto hw = gen::toy_hw(job.instance, 16, 16);
    const auto best = oracle::optimal_makespan(job.instance);
    for (auto policy : {Policy::RoundRobin, Policy::HeterogeneityAware}) {
      std::vector<Booking> bookings;
      const auto span = gen::run_toy(job, hw, policy, &bookings);
      CHECK(best <= span);
      std::map<std::uint32_t, Booking> by_id;
      for (auto& b : bookings) by_id[b.task_id] = b;
      std::uint32_t id = 0;
      for (const auto& q : job.instance.queues) {
        for (std::size_t k = 0; k < q.size(); ++k, ++id) {
          if (k > 0) CHECK(by_id.at(id).t_start >= by_id.at(id - 1).t_end);
          if (policy == Policy::RoundRobin) {
            CHECK((by_id.at(id).kind == ProcessorKind::Systolic) == q[k].matrix);
          }
        }
      }
      // Processor exclusivity.
      for (auto& a : bookings) {
        for (auto& b : bookings) {
          if (a.task_id < b.task_id && a.kind == b.kind && a.processor == b.processor) {
            CHECK((a.t_end <= b.t_start || b.t_end <= a.t_start));
          }
        }
      }
    }
  }
}

TEST_CASE("exhaustive search finds a known optimum") {
  oracle::ToyInstance inst;
  inst.arrays = 1;
  inst.vectors = 1;
  // Two matrix tasks that could share the array; sending one to the vector
  // unit finishes at 60 instead of 100.
  inst.queues = {{{true, 50, 60}}, {{true, 50, 200}}};
  CHECK(oracle::optimal_makespan(inst) == 60);
  inst.queues = {{{false, 0, 10}, {true, 20, 100}}, {{true, 30, 30}}};
  CHECK(oracle::optimal_makespan(inst) == 40);
}

TEST_CASE("policy names") {
  CHECK(parse_policy("rr") == Policy::RoundRobin);
  CHECK(parse_policy("has") == Policy::HeterogeneityAware);
  CHECK_THROWS_AS(parse_policy("fifo"), Error);
}
