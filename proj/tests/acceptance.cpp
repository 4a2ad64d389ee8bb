// Acceptance runner: one PASS/FAIL line per criterion.
//
//   acceptance            run all ten
//   acceptance 3 7        run a subset
//
// Criterion 10 runs the full 3,564-point sweep; HSV_ACCEPT_OUT names the
// directory for its results (default: ./acceptance_out).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "gen.hpp"
#include "hsv/arch.hpp"
#include "hsv/cost.hpp"
#include "hsv/dse.hpp"
#include "hsv/error.hpp"
#include "hsv/sim.hpp"
#include "hsv/umf.hpp"
#include "hsv/workload.hpp"
#include "oracles.hpp"

using namespace hsv;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

Outcome codec_soundness() {
  const auto t0 = Clock::now();
  gen::Rng rng(20240601);
  int failures = 0;
  std::vector<std::vector<std::uint8_t>> encodings;
  for (int i = 0; i < 1000; ++i) {
    const auto f = gen::random_frame(rng);
    const auto bytes = umf::encode_frame(f);
    const auto back = umf::decode_frame(bytes);
    if (!(back == f)) ++failures;
    if (umf::encode_frame(back) != bytes) ++failures;
    encodings.push_back(bytes);
  }
  int prefix_failures = 0;
  for (int i = 0; i < 100; ++i) {
    const auto& bytes = encodings[rng() % encodings.size()];
    const std::size_t cut = rng() % bytes.size();
    try {
      umf::decode_frame(std::span(bytes.data(), cut));
      ++prefix_failures;
    } catch (const Error&) {
    }
  }
  const double secs = seconds_since(t0);
  return {failures == 0 && prefix_failures == 0 && secs < 10,
          "1000 frames, " + std::to_string(failures) + " round-trip failures; 100 truncations, " +
              std::to_string(prefix_failures) + " accepted; " + fmt("%.2f s", secs)};
}

Outcome cost_fidelity() {
  const auto t0 = Clock::now();
  gen::Rng rng(4242);
  const std::uint32_t dims[] = {16, 32, 64};
  double worst = 0;
  int wrong_products = 0;
  for (int i = 0; i < 50; ++i) {
    const std::uint32_t d = dims[rng() % 3];
    const auto M = gen::pick(rng, 1, 256), K = gen::pick(rng, 1, 256), N = gen::pick(rng, 1, 256);
    std::vector<std::int64_t> A(std::size_t(M) * K), B(std::size_t(K) * N);
    for (auto& x : A) x = std::int64_t(rng() % 255) - 127;
    for (auto& x : B) x = std::int64_t(rng() % 255) - 127;
    const auto ref = oracle::run_weight_stationary(d, M, K, N, A, B);
    if (ref.c != oracle::reference_product(M, K, N, A, B)) ++wrong_products;
    const auto model = cost::systolic_cycles(model::MatrixWork{1, M, K, N}, d);
    worst = std::max(worst, std::abs(double(model) - double(ref.cycles)) / double(ref.cycles));
  }
  const double secs = seconds_since(t0);
  return {worst <= 0.01 && wrong_products == 0 && secs < 60,
          "50 shapes, worst deviation " + fmt("%.4f%%", 100 * worst) + ", " + std::to_string(wrong_products) +
              " oracle product errors; " + fmt("%.1f s", secs)};
}

Outcome peak_performance() {
  // Published peak GOPS per processor size.
  const std::pair<double, double> systolic[] = {{16, 409.6}, {32, 1638.4}, {64, 6553.6}};
  const std::pair<double, double> vector[] = {{16, 25.6}, {32, 51.2}, {64, 102.4}};
  int exact = 0;
  for (auto [size, gops] : systolic) {
    exact += std::abs(arch::SystolicArraySpec{std::uint32_t(size)}.peak_gops() - gops) < 1e-9;
  }
  for (auto [size, gops] : vector) {
    exact += std::abs(arch::VectorProcessorSpec{std::uint32_t(size)}.peak_gops() - gops) < 1e-9;
  }
  std::string detail = std::to_string(exact) + "/6 cells exact; sustained GEMM:";
  bool sustained = true;
  for (auto [size, gops] : systolic) {
    const auto hw = arch::make_config(1, std::uint32_t(size), 1, 16, 45, 1);
    sim::ModelLibrary lib(1);
    model::GraphBuilder b("gemm", model::ModelClass::CNN, umf::Precision::INT8);
    b.gemm("fc", b.input({4096, 1024}), 1024);
    lib.add("gemm", std::move(b).build());
    workload::Workload w;
    w.requests = {{0, "gemm", 0}};
    const auto res = sim::simulate(w, hw, sched::Policy::HeterogeneityAware, lib);
    const double frac = res.report.tops * 1000 / gops;
    sustained = sustained && frac >= 0.9;
    detail += " " + std::to_string(int(size)) + "x" + std::to_string(int(size)) + "=" + fmt("%.1f%%", 100 * frac);
  }
  return {exact == 6 && sustained, detail};
}

Outcome energy_exactness() {
  // Every compute op kind, on arrays and vector units of different sizes.
  model::GraphBuilder b("mixed", model::ModelClass::Transformer, umf::Precision::INT8);
  auto x = b.conv("conv", b.input({1, 8, 34, 34}), 16, 3);
  x = b.activation("relu", x);
  x = b.pool("pool", x, 2, 2);
  x = b.reshape("flat", x, {16, 256});
  auto q = b.gemm("proj", x, 256);
  auto kt = b.transpose("kt", q, {256, 16});
  auto s = b.matmul("scores", q, kt);
  s = b.softmax("softmax", s);
  auto y = b.matmul("mix", s, q);
  y = b.residual_add("add", y, q);
  b.layer_norm("norm", y);
  const auto g = std::move(b).build();

  bool ok = true;
  std::string detail;
  for (auto [dim, lanes] : {std::pair<std::uint32_t, std::uint32_t>{16, 64}, {64, 16}, {32, 32}}) {
    const auto hw = arch::make_config(2, dim, 2, lanes, 45, 1);
    sim::ModelLibrary lib(1);
    lib.add("mixed", g);
    workload::Workload w;
    for (std::uint32_t i = 0; i < 3; ++i) w.requests.push_back({i, "mixed", 0});
    const auto trace = sim::run(w, hw, sched::Policy::RoundRobin, lib);
    auto phys = arch::PhysicalModel::standard();
    phys.sram_fj_per_byte = 0;
    phys.hbm_fj_per_byte = 0;
    const auto rep = sim::compute_report(trace, hw, phys);
    const std::uint64_t expect = 3 * oracle::dedicated_energy_fj(g, dim, lanes);
    const bool exact = rep.compute_energy_fj == expect && rep.memory_energy_fj == 0 &&
                       rep.joules == double(expect) * 1e-15;
    ok = ok && exact;
    detail += (detail.empty() ? "" : "; ") + std::to_string(dim) + "/" + std::to_string(lanes) + ": " +
              std::to_string(rep.compute_energy_fj) + " fJ vs " + std::to_string(expect) + " fJ";
  }
  return {ok, detail};
}

// Suite runs shared by criteria 5, 6 and 9.
struct SuiteRun {
  std::string name;
  double transformer_fraction = 0;
  double cnn_ratio = 0;
  sim::SimResult rr, has;
  std::size_t violations = 0;
};

const arch::HardwareConfig& desk_hw() {
  static const auto hw = arch::make_config(4, 32, 8, 32, 45, 1);
  return hw;
}

const std::vector<SuiteRun>& suite_runs() {
  static std::vector<SuiteRun> runs = [] {
    std::vector<SuiteRun> out;
    sim::ModelLibrary lib(4);
    sim::RunOptions opts;
    opts.record_events = false;
    for (const auto& w : workload::standard_suite()) {
      SuiteRun r;
      r.name = w.name;
      r.transformer_fraction = workload::transformer_fraction(w);
      r.cnn_ratio = w.cnn_ratio;
      r.rr = sim::simulate(w, desk_hw(), sched::Policy::RoundRobin, lib, opts);
      r.has = sim::simulate(w, desk_hw(), sched::Policy::HeterogeneityAware, lib, opts);
      r.violations = sim::check_trace(r.rr.trace, desk_hw()).size() + sim::check_trace(r.has.trace, desk_hw()).size();
      out.push_back(std::move(r));
    }
    return out;
  }();
  return runs;
}

double speedup(const SuiteRun& r) {
  // Same ops on both sides, so the throughput ratio is the makespan ratio.
  return double(r.rr.report.makespan_cycles) / double(r.has.report.makespan_cycles);
}

Outcome has_vs_rr() {
  const auto t0 = Clock::now();
  const auto& runs = suite_runs();
  int worse = 0;
  double min_speedup = 1e9;
  std::vector<double> mid;
  for (const auto& r : runs) {
    const double s = speedup(r);
    worse += s < 1.0;
    min_speedup = std::min(min_speedup, s);
    if (r.cnn_ratio > 0.25 && r.cnn_ratio < 0.75) mid.push_back(s);
  }
  const double gm = dse::geometric_mean(mid);
  const double all = [&] {
    std::vector<double> v;
    for (const auto& r : runs) v.push_back(speedup(r));
    return dse::geometric_mean(v);
  }();
  const double secs = seconds_since(t0);
  return {worse == 0 && gm >= 1.3 && secs < 600,
          std::to_string(runs.size()) + " workloads, " + std::to_string(worse) + " with HAS slower; min " +
              fmt("%.3fx", min_speedup) + ", geomean over CNN ratio 0.3-0.7 " + fmt("%.3fx", gm) + " (" +
              std::to_string(mid.size()) + " workloads), overall " + fmt("%.3fx", all) + "; " + fmt("%.0f s", secs)};
}

Outcome has_trend() {
  const auto& runs = suite_runs();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = double(runs.size());
  for (const auto& r : runs) {
    const double x = r.transformer_fraction, y = speedup(r);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return {slope < 0, "slope of speedup vs transformer fraction " + fmt("%.4f", slope)};
}

Outcome cluster_scaling() {
  // 64 requests per cluster at four clusters. One cluster given 64 requests
  // is already within a few percent of its throughput plateau.
  constexpr std::uint32_t kPerCluster = 64;
  const auto w = workload::generate(0.5, 4 * kPerCluster, 7);
  sim::ModelLibrary lib(4);
  sim::RunOptions opts;
  opts.record_events = false;
  std::map<std::uint32_t, sim::PerfReport> reps;
  for (std::uint32_t c : {1u, 2u, 4u}) {
    const auto hw = arch::make_config(4, 32, 8, 32, 45, c);
    reps[c] = sim::simulate(w, hw, sched::Policy::HeterogeneityAware, lib, opts).report;
  }
  const auto share = workload::generate(0.5, kPerCluster, 7);
  const double per_cluster_load =
      sim::simulate(share, arch::make_config(4, 32, 8, 32, 45, 1), sched::Policy::HeterogeneityAware, lib, opts)
          .report.tops /
      reps[1].tops;
  const double scale = reps[4].tops / reps[1].tops;
  double eff_dev = 0;
  for (std::uint32_t c : {2u, 4u}) {
    eff_dev = std::max(eff_dev, std::abs(reps[c].tops_per_watt / reps[1].tops_per_watt - 1));
  }
  std::string detail = std::to_string(w.requests.size()) + " requests (a " + std::to_string(kPerCluster) +
                       "-request share reaches " + fmt("%.1f%%", 100 * per_cluster_load) +
                       " of single-cluster throughput), 4-cluster/1-cluster throughput " + fmt("%.3fx", scale) +
                       "; TOPS/W";
  for (auto& [c, r] : reps) detail += " c" + std::to_string(c) + "=" + fmt("%.3f", r.tops_per_watt);
  detail += " (max deviation " + fmt("%.1f%%", 100 * eff_dev) + ")";
  return {scale >= 3.5 && eff_dev <= 0.10, detail};
}

Outcome scheduler_optimality() {
  const auto t0 = Clock::now();
  gen::Rng rng(7);
  int opt_violations = 0, has_worse = 0, has_better = 0;
  std::string worst;
  for (int i = 0; i < 100; ++i) {
    const auto job = gen::random_toy_job(rng, 16, 16);
    const auto hw = gen::toy_hw(job.instance, 16, 16);
    const auto best = oracle::optimal_makespan(job.instance);
    const auto rr = gen::run_toy(job, hw, sched::Policy::RoundRobin);
    const auto has = gen::run_toy(job, hw, sched::Policy::HeterogeneityAware);
    opt_violations += best > has;
    if (has > rr) {
      ++has_worse;
      worst += " #" + std::to_string(i) + "(has " + std::to_string(has) + " > rr " + std::to_string(rr) + ")";
    }
    has_better += has < rr;
  }
  const double secs = seconds_since(t0);
  return {opt_violations == 0 && has_worse == 0 && has_better >= 30 && secs < 120,
          "100 instances: optimum above HAS " + std::to_string(opt_violations) + ", HAS above RR " +
              std::to_string(has_worse) + worst + ", HAS strictly better " + std::to_string(has_better) + "; " +
              fmt("%.2f s", secs)};
}

Outcome invariants() {
  const auto& runs = suite_runs();
  std::size_t violations = 0, tasks = 0;
  for (const auto& r : runs) {
    violations += r.violations;
    tasks += r.rr.trace.tasks.size() + r.has.trace.tasks.size();
  }
  return {violations == 0, std::to_string(runs.size() * 2) + " traces, " + std::to_string(tasks) + " tasks, " +
                               std::to_string(violations) + " violations"};
}

Outcome dse_shape() {
  const auto t0 = Clock::now();
  const char* env = std::getenv("HSV_ACCEPT_OUT");
  const std::string out = env ? env : "acceptance_out";
  std::filesystem::remove_all(out + "/sweep");
  const auto spec = dse::standard_spec();
  const auto suite = workload::standard_suite(spec.request_count, spec.seeds_per_ratio);
  dse::SweepOptions opts;
  opts.parallelism = std::max(1u, std::thread::hardware_concurrency());
  opts.out_dir = out + "/sweep";
  opts.resume = false;
  const auto result = dse::sweep(spec, suite, opts);
  const double secs = seconds_since(t0);

  // Suite-level performance and area per configuration.
  struct Agg {
    std::vector<double> tops;
    double area = 0;
    std::uint32_t arrays = 0, dim = 0;
    std::string rest;  // vector, memory and cluster part of the key
  };
  std::map<std::string, Agg> by_config;
  for (const auto& r : result.rows) {
    auto& a = by_config[r.config];
    a.tops.push_back(r.tops);
    a.area = r.area_mm2;
    a.arrays = r.arrays;
    a.dim = r.array_dim;
    a.rest = r.config.substr(r.config.find('_'));
  }
  std::vector<std::pair<double, double>> big, small;  // (suite TOPS, TOPS per mm^2)
  for (const auto& [key, a] : by_config) {
    const double tops = dse::geometric_mean(a.tops);
    if (a.arrays == 2 && a.dim == 64) big.push_back({tops, tops / a.area});
    if (a.arrays == 8 && a.dim == 16) small.push_back({tops, tops / a.area});
  }
  int pairs = 0, big_wins = 0;
  for (const auto& [bt, bd] : big) {
    for (const auto& [st, sd] : small) {
      if (bt / st > 1.25 || st / bt > 1.25) continue;
      ++pairs;
      big_wins += bd > sd;
    }
  }
  // Same vector and memory options on both sides, regardless of performance.
  std::vector<double> density_ratio, tops_ratio;
  for (const auto& [key, a] : by_config) {
    if (a.arrays != 2 || a.dim != 64) continue;
    const auto it = by_config.find("a8x16" + a.rest);
    if (it == by_config.end()) continue;
    const double ta = dse::geometric_mean(a.tops), tb = dse::geometric_mean(it->second.tops);
    tops_ratio.push_back(ta / tb);
    density_ratio.push_back((ta / a.area) / (tb / it->second.area));
  }
  const bool shape = result.rows.size() == 3564 && result.failures.empty();
  const bool direction = pairs > 0 && 2 * big_wins > pairs;
  return {shape && direction && secs < 7200,
          std::to_string(result.rows.size()) + " rows, " + std::to_string(result.failures.size()) +
              " failures; comparable 2x64 vs 8x16 pairs " + std::to_string(pairs) + ", 2x64 denser in " +
              std::to_string(big_wins) + "; matched options (" + std::to_string(tops_ratio.size()) +
              "): 2x64/8x16 TOPS " + fmt("%.2fx", dse::geometric_mean(tops_ratio)) + ", TOPS/mm2 " +
              fmt("%.2fx", dse::geometric_mean(density_ratio)) + "; " + fmt("%.0f s", secs) + " at parallelism " +
              std::to_string(opts.parallelism)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"UMF codec soundness", codec_soundness},
      {"cost-model fidelity", cost_fidelity},
      {"peak-performance reproduction", peak_performance},
      {"energy accounting exactness", energy_exactness},
      {"HAS vs RR throughput", has_vs_rr},
      {"HAS gain trend", has_trend},
      {"cluster scalability", cluster_scaling},
      {"scheduler optimality sanity", scheduler_optimality},
      {"capacity/dependency invariants", invariants},
      {"DSE reproduction shape", dse_shape},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = int(i) + 1;
    if (!only.empty() && !only.count(n)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] %2d %s: %s\n", o.pass ? "PASS" : "FAIL", n, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
