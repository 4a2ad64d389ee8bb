#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "hsv/error.hpp"
#include "hsv/sim.hpp"
#include "oracles.hpp"

using namespace hsv;
using namespace hsv::sim;
using arch::ProcessorKind;

namespace {

std::uint64_t transfer_oracle(std::uint64_t bytes) { return 100 + (bytes + 319) / 320; }

model::ModelGraph single_gemm(std::uint32_t m, std::uint32_t k, std::uint32_t n) {
  model::GraphBuilder b("gemm", model::ModelClass::CNN, umf::Precision::INT8);
  b.gemm("fc", b.input({m, k}), n);
  return std::move(b).build();
}

workload::Workload requests_of(const std::string& model, std::uint32_t count) {
  workload::Workload w;
  w.name = "custom";
  w.request_count = count;
  for (std::uint32_t i = 0; i < count; ++i) w.requests.push_back({i, model, 0});
  return w;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("empty workload") {
  const auto hw = arch::make_config(1, 16, 1, 16, 45, 1);
  ModelLibrary lib(1);
  const auto res = simulate(requests_of("alexnet", 0), hw, sched::Policy::HeterogeneityAware, lib);
  CHECK(res.trace.tasks.empty());
  CHECK(res.trace.makespan == 0);
  CHECK(res.report.tops == 0.0);
  CHECK(res.report.joules == 0.0);
  const auto doc = nlohmann::json::parse(trace_event_json(res.trace, hw));
  for (const auto& e : doc["traceEvents"]) CHECK(e["ph"] == "M");
}

TEST_CASE("single GEMM end to end matches composed oracles") {
  const auto hw = arch::make_config(1, 16, 1, 16, 45, 1);
  ModelLibrary lib(1);
  lib.add("gemm", single_gemm(16, 16, 16));
  const auto res = simulate(requests_of("gemm", 1), hw, sched::Policy::HeterogeneityAware, lib);
  REQUIRE(res.trace.tasks.size() == 1);
  std::vector<std::int64_t> a(256, 1), b(256, 1);
  const auto compute = oracle::run_weight_stationary(16, 16, 16, 16, a, b).cycles;
  const auto fetch = transfer_oracle(16 * 16) + transfer_oracle(16 * 16);  // weights, then the input
  CHECK(res.trace.tasks[0].kind == ProcessorKind::Systolic);
  CHECK(res.trace.makespan == fetch + compute);
  CHECK(res.report.total_ops == 2 * 16 * 16 * 16);
  REQUIRE(res.trace.requests.size() == 1);
  CHECK(res.trace.requests[0].complete == fetch + compute);
}

TEST_CASE("report arithmetic") {
  const auto hw = arch::make_config(1, 16, 1, 16, 45, 1);
  const auto phys = arch::PhysicalModel::standard();
  TraceLog t;
  t.makespan = 8'000'000;  // 0.01 s
  TaskRecord r;
  r.ops = 1'000'000'000;
  r.t_start = 0;
  r.t_end = 3'840'000;
  t.tasks.push_back(r);
  const auto rep = compute_report(t, hw, phys);
  CHECK(rep.seconds == doctest::Approx(0.01));
  CHECK(rep.tops == doctest::Approx(0.1));
  CHECK(rep.resources[0].utilization_pct == doctest::Approx(48.0));
  CHECK(rep.resources[1].busy == 0);
}

TEST_CASE("compute energy is exact") {
  const auto hw = arch::make_config(1, 32, 1, 16, 45, 1);
  ModelLibrary lib(1);
  model::GraphBuilder b("mix", model::ModelClass::Transformer, umf::Precision::INT8);
  auto x = b.gemm("fc", b.input({64, 128}), 128);
  x = b.activation("act", x);
  x = b.softmax("sm", x);
  b.layer_norm("ln", x);
  const auto g = std::move(b).build();
  lib.add("mix", g);
  const auto res = simulate(requests_of("mix", 2), hw, sched::Policy::RoundRobin, lib);
  CHECK(res.report.compute_energy_fj == 2 * oracle::dedicated_energy_fj(g, 32, 16));
}

TEST_CASE("determinism") {
  const auto hw = arch::make_config(2, 32, 4, 32, 45, 1);
  ModelLibrary lib(4);
  const auto w = workload::generate(0.5, 6, 3);
  const auto a = simulate(w, hw, sched::Policy::HeterogeneityAware, lib, {{}, 3});
  const auto b = simulate(w, hw, sched::Policy::HeterogeneityAware, lib, {{}, 3});
  CHECK(trace_hash(a.trace) == trace_hash(b.trace));
  const auto dir = std::filesystem::temp_directory_path() / "hsv_determinism";
  std::filesystem::create_directories(dir);
  export_trace(a.trace, hw, (dir / "a.json").string());
  export_trace(b.trace, hw, (dir / "b.json").string());
  CHECK(slurp((dir / "a.json").string()) == slurp((dir / "b.json").string()));
  CHECK(decision_log(a.trace) == decision_log(b.trace));
  std::filesystem::remove_all(dir);
}

TEST_CASE("trace export") {
  const auto hw = arch::make_config(1, 16, 2, 16, 45, 1);
  ModelLibrary lib(6);

  SUBCASE("one task gives one duration event") {
    lib.add("gemm", single_gemm(16, 16, 16));
    const auto res = simulate(requests_of("gemm", 1), hw, sched::Policy::HeterogeneityAware, lib);
    const auto doc = nlohmann::json::parse(trace_event_json(res.trace, hw));
    int compute = 0;
    for (const auto& e : doc["traceEvents"]) {
      if (e["ph"] != "X" || e["cat"] != "compute") continue;
      ++compute;
      CHECK(e["ts"].get<std::uint64_t>() == res.trace.tasks[0].t_start);
      CHECK(e["dur"].get<std::uint64_t>() == 48);
    }
    CHECK(compute == 1);
  }

  SUBCASE("busy intervals survive a re-parse") {
    const auto res = simulate(workload::generate(0.5, 4, 1), hw, sched::Policy::HeterogeneityAware, lib);
    const auto path = (std::filesystem::temp_directory_path() / "hsv_trace_reparse.json").string();
    export_trace(res.trace, hw, path);
    const auto doc = nlohmann::json::parse(slurp(path));
    std::map<std::pair<int, int>, std::vector<std::pair<std::uint64_t, std::uint64_t>>> from_file, from_trace;
    for (const auto& e : doc["traceEvents"]) {
      if (e["ph"] != "X" || e["cat"] != "compute") continue;
      const auto ts = e["ts"].get<std::uint64_t>();
      from_file[{e["pid"].get<int>(), e["tid"].get<int>()}].push_back({ts, ts + e["dur"].get<std::uint64_t>()});
    }
    for (const auto& t : res.trace.tasks) {
      const int tid = t.kind == ProcessorKind::Systolic ? int(t.processor) : 100 + int(t.processor);
      from_trace[{int(t.cluster), tid}].push_back({t.t_start, t.t_end});
    }
    for (auto* m : {&from_file, &from_trace}) {
      for (auto& [k, v] : *m) std::sort(v.begin(), v.end());
    }
    CHECK(from_file == from_trace);
    std::filesystem::remove(path);
  }
}

TEST_CASE("trace checker") {
  const auto hw = arch::make_config(2, 32, 4, 32, 45, 1);
  ModelLibrary lib(4);
  for (auto policy : {sched::Policy::RoundRobin, sched::Policy::HeterogeneityAware}) {
    auto res = simulate(workload::generate(0.3, 8, 2), hw, policy, lib);
    CHECK(check_trace(res.trace, hw).empty());
    // Busy time plus idle time covers the span on every resource.
    for (const auto& r : res.report.resources) CHECK(r.busy <= res.trace.makespan);

    auto broken = res.trace;
    REQUIRE(broken.tasks.size() > 2);
    // Put a task on top of another one on the same processor.
    auto& a = broken.tasks[0];
    for (auto& b : broken.tasks) {
      if (&b != &a && b.kind == a.kind) {
        b.processor = a.processor;
        b.t_start = a.t_start;
        b.t_end = std::max(b.t_end, a.t_start + 1);
        break;
      }
    }
    CHECK(!check_trace(broken, hw).empty());
  }
}

TEST_CASE("multi-cluster runs spread requests") {
  const auto hw = arch::make_config(1, 32, 2, 32, 45, 2);
  ModelLibrary lib(6);
  const auto res = simulate(workload::generate(0.5, 8, 4), hw, sched::Policy::HeterogeneityAware, lib);
  std::map<std::uint32_t, int> per_cluster;
  for (const auto& r : res.trace.requests) ++per_cluster[r.cluster];
  CHECK(per_cluster.size() == 2);
  CHECK(check_trace(res.trace, hw).empty());
}

TEST_CASE("unknown models and oversize layers fail loudly") {
  const auto hw = arch::make_config(1, 16, 1, 16, 1, 1);
  ModelLibrary lib(1);
  CHECK_THROWS_AS(simulate(requests_of("nosuch", 1), hw, sched::Policy::HeterogeneityAware, lib), Error);
  model::GraphBuilder b("wide", model::ModelClass::Transformer, umf::Precision::FP32);
  b.softmax("sm", b.input({1, 1 << 20}));
  lib.add("wide", std::move(b).build());
  try {
    simulate(requests_of("wide", 1), hw, sched::Policy::HeterogeneityAware, lib);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnpartitionableLayer);
  }
}
