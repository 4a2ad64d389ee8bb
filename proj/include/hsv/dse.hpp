#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hsv/arch.hpp"
#include "hsv/scheduler.hpp"
#include "hsv/workload.hpp"

namespace hsv::dse {

struct ArrayOption {
  std::uint32_t count = 0;
  std::uint32_t dim = 0;
};

struct VectorOption {
  std::uint32_t count = 0;
  std::uint32_t lanes = 0;
};

struct SweepSpec {
  std::vector<ArrayOption> arrays;
  std::vector<VectorOption> vectors;
  std::vector<std::uint64_t> shared_mem_mb;
  std::vector<std::uint32_t> clusters;
  std::string scheduler = "has";
  std::uint32_t keep_every = 4;
  std::uint32_t request_count = workload::kDefaultRequestCount;
  std::uint32_t seeds_per_ratio = 3;
  double sample = 1.0;  // fraction of (config, workload) points to run
};

// Six array options x six vector options x {45, 65, 105} MB, one cluster.
SweepSpec standard_spec();
SweepSpec parse_sweep_spec(const std::string& json_text);  // throws ConfigError
SweepSpec load_sweep_spec(const std::string& path);

struct ConfigPoint {
  std::string key;  // e.g. "a4x32_v8x32_sm45_c1"
  ArrayOption arrays;
  VectorOption vectors;
  std::uint64_t shared_mem_mb = 0;
  std::uint32_t clusters = 1;
  arch::HardwareConfig hw;
};

std::vector<ConfigPoint> expand(const SweepSpec& spec);

struct SweepRow {
  std::string config;
  std::string workload;
  double cnn_ratio = 0;
  std::string scheduler;
  std::uint32_t arrays = 0;
  std::uint32_t array_dim = 0;
  std::uint32_t vectors = 0;
  std::uint32_t lanes = 0;
  std::uint64_t shared_mem_mb = 0;
  std::uint32_t clusters = 0;
  std::uint64_t makespan_cycles = 0;
  std::uint64_t total_ops = 0;
  double tops = 0;
  double joules = 0;
  double watts = 0;
  double tops_per_watt = 0;
  double area_mm2 = 0;
  bool operator==(const SweepRow&) const = default;
};

SweepRow run_point(const ConfigPoint& point, const workload::Workload& w, sched::Policy policy,
                   std::uint32_t keep_every);

struct SweepOptions {
  std::uint32_t parallelism = 1;
  std::string out_dir;  // empty: keep results in memory only
  bool resume = true;   // reuse per-point records found in out_dir
};

struct SweepOutcome {
  std::vector<SweepRow> rows;          // config-major, then workload order
  std::vector<std::string> failures;   // "config/workload: message"
  std::size_t reused = 0;
};

// Runs every selected point on a bounded worker pool. With an output
// directory, each point is written to points/<config>__<workload>.json as it
// finishes and the merged table to results.csv.
SweepOutcome sweep(const SweepSpec& spec, const std::vector<workload::Workload>& suite,
                   const SweepOptions& opts = {});

std::string csv_header();
std::string to_csv(const std::vector<SweepRow>& rows);
std::vector<SweepRow> parse_csv(const std::string& text);  // throws SchemaError
std::vector<SweepRow> load_csv(const std::string& path);

struct CompareRow {
  std::string config;
  std::string workload;
  double cnn_ratio = 0;
  double speedup = 0;           // throughput A / throughput B
  double efficiency_ratio = 0;  // TOPS/W A / TOPS/W B
};

struct Comparison {
  std::vector<CompareRow> rows;
  double geomean_speedup = 0;
  double geomean_efficiency = 0;
};

// Throws KeyMismatch unless both tables hold the same (config, workload) keys.
Comparison compare(const std::vector<SweepRow>& a, const std::vector<SweepRow>& b);
std::string to_csv(const Comparison& c);

double geometric_mean(const std::vector<double>& xs);

}  // namespace hsv::dse
