#include "hsv/dse.hpp"

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "hsv/error.hpp"
#include "hsv/sim.hpp"

namespace hsv::dse {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json row_json(const SweepRow& r) {
  return json{{"config", r.config},       {"workload", r.workload},
              {"cnn_ratio", r.cnn_ratio}, {"scheduler", r.scheduler},
              {"arrays", r.arrays},       {"array_dim", r.array_dim},
              {"vectors", r.vectors},     {"lanes", r.lanes},
              {"shared_mem_mb", r.shared_mem_mb}, {"clusters", r.clusters},
              {"makespan_cycles", r.makespan_cycles}, {"total_ops", r.total_ops},
              {"tops", r.tops},           {"joules", r.joules},
              {"watts", r.watts},         {"tops_per_watt", r.tops_per_watt},
              {"area_mm2", r.area_mm2}};
}

SweepRow row_from_json(const json& j) {
  SweepRow r;
  r.config = j.at("config").get<std::string>();
  r.workload = j.at("workload").get<std::string>();
  r.cnn_ratio = j.at("cnn_ratio").get<double>();
  r.scheduler = j.at("scheduler").get<std::string>();
  r.arrays = j.at("arrays").get<std::uint32_t>();
  r.array_dim = j.at("array_dim").get<std::uint32_t>();
  r.vectors = j.at("vectors").get<std::uint32_t>();
  r.lanes = j.at("lanes").get<std::uint32_t>();
  r.shared_mem_mb = j.at("shared_mem_mb").get<std::uint64_t>();
  r.clusters = j.at("clusters").get<std::uint32_t>();
  r.makespan_cycles = j.at("makespan_cycles").get<std::uint64_t>();
  r.total_ops = j.at("total_ops").get<std::uint64_t>();
  r.tops = j.at("tops").get<double>();
  r.joules = j.at("joules").get<double>();
  r.watts = j.at("watts").get<double>();
  r.tops_per_watt = j.at("tops_per_watt").get<double>();
  r.area_mm2 = j.at("area_mm2").get<double>();
  return r;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out << text;
  }
  fs::rename(tmp, path);
}

}  // namespace

SweepSpec standard_spec() {
  SweepSpec s;
  s.arrays = {{8, 16}, {2, 32}, {4, 32}, {8, 32}, {2, 64}, {4, 64}};
  s.vectors = {{8, 16}, {4, 32}, {8, 32}, {2, 64}, {4, 64}, {8, 64}};
  s.shared_mem_mb = {45, 65, 105};
  s.clusters = {1};
  return s;
}

SweepSpec parse_sweep_spec(const std::string& json_text) {
  try {
    const json j = json::parse(json_text);
    SweepSpec s = standard_spec();
    if (j.contains("arrays")) {
      s.arrays.clear();
      for (const auto& a : j["arrays"]) s.arrays.push_back({a.at("count").get<std::uint32_t>(), a.at("dim").get<std::uint32_t>()});
    }
    if (j.contains("vectors")) {
      s.vectors.clear();
      for (const auto& v : j["vectors"]) {
        s.vectors.push_back({v.at("count").get<std::uint32_t>(), v.at("lanes").get<std::uint32_t>()});
      }
    }
    if (j.contains("shared_mem_mb")) s.shared_mem_mb = j["shared_mem_mb"].get<std::vector<std::uint64_t>>();
    if (j.contains("clusters")) s.clusters = j["clusters"].get<std::vector<std::uint32_t>>();
    s.scheduler = j.value("scheduler", s.scheduler);
    s.keep_every = j.value("keep_every", s.keep_every);
    s.request_count = j.value("request_count", s.request_count);
    s.seeds_per_ratio = j.value("seeds_per_ratio", s.seeds_per_ratio);
    s.sample = j.value("sample", s.sample);
    if (s.arrays.empty() || s.vectors.empty() || s.shared_mem_mb.empty() || s.clusters.empty()) {
      throw Error(ErrorCode::ConfigError, "sweep spec has an empty option list");
    }
    if (!(s.sample > 0 && s.sample <= 1)) throw Error(ErrorCode::ConfigError, "sample must be in (0, 1]");
    if (s.keep_every == 0 || s.request_count == 0 || s.seeds_per_ratio == 0) {
      throw Error(ErrorCode::ConfigError, "keep_every, request_count and seeds_per_ratio must be positive");
    }
    sched::parse_policy(s.scheduler);
    for (const auto& p : expand(s)) arch::validate(p.hw);
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("sweep spec: ") + e.what());
  }
}

SweepSpec load_sweep_spec(const std::string& path) { return parse_sweep_spec(read_text(path)); }

std::vector<ConfigPoint> expand(const SweepSpec& spec) {
  std::vector<ConfigPoint> out;
  for (auto clusters : spec.clusters) {
    for (const auto& a : spec.arrays) {
      for (const auto& v : spec.vectors) {
        for (auto sm : spec.shared_mem_mb) {
          ConfigPoint p;
          p.arrays = a;
          p.vectors = v;
          p.shared_mem_mb = sm;
          p.clusters = clusters;
          p.key = "a" + std::to_string(a.count) + "x" + std::to_string(a.dim) + "_v" + std::to_string(v.count) + "x" +
                  std::to_string(v.lanes) + "_sm" + std::to_string(sm) + "_c" + std::to_string(clusters);
          p.hw = arch::make_config(a.count, a.dim, v.count, v.lanes, sm, clusters);
          out.push_back(std::move(p));
        }
      }
    }
  }
  return out;
}

SweepRow run_point(const ConfigPoint& point, const workload::Workload& w, sched::Policy policy,
                   std::uint32_t keep_every) {
  thread_local std::map<std::uint32_t, sim::ModelLibrary> libraries;
  auto& models = libraries.try_emplace(keep_every, keep_every).first->second;
  sim::RunOptions opts;
  opts.record_events = false;
  const auto result = sim::simulate(w, point.hw, policy, models, opts);
  const auto& r = result.report;
  SweepRow row;
  row.config = point.key;
  row.workload = w.name;
  row.cnn_ratio = w.cnn_ratio;
  row.scheduler = sched::to_string(policy);
  row.arrays = point.arrays.count;
  row.array_dim = point.arrays.dim;
  row.vectors = point.vectors.count;
  row.lanes = point.vectors.lanes;
  row.shared_mem_mb = point.shared_mem_mb;
  row.clusters = point.clusters;
  row.makespan_cycles = r.makespan_cycles;
  row.total_ops = r.total_ops;
  row.tops = r.tops;
  row.joules = r.joules;
  row.watts = r.watts;
  row.tops_per_watt = r.tops_per_watt;
  row.area_mm2 = r.area_mm2;
  return row;
}

SweepOutcome sweep(const SweepSpec& spec, const std::vector<workload::Workload>& suite, const SweepOptions& opts) {
  const auto policy = sched::parse_policy(spec.scheduler);
  const auto configs = expand(spec);
  struct Job {
    std::size_t config;
    std::size_t workload;
  };
  std::vector<Job> jobs;
  const auto stride = static_cast<std::size_t>(std::llround(1.0 / spec.sample));
  std::size_t index = 0;
  for (std::size_t c = 0; c < configs.size(); ++c) {
    for (std::size_t w = 0; w < suite.size(); ++w, ++index) {
      if (index % stride == 0) jobs.push_back({c, w});
    }
  }

  fs::path points;
  if (!opts.out_dir.empty()) {
    points = fs::path(opts.out_dir) / "points";
    fs::create_directories(points);
  }
  auto record_path = [&](const Job& j) {
    return points / (configs[j.config].key + "__" + suite[j.workload].name + ".json");
  };

  std::vector<std::optional<SweepRow>> rows(jobs.size());
  std::vector<std::string> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> reused{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const Job& j = jobs[i];
      const auto& point = configs[j.config];
      const auto& w = suite[j.workload];
      try {
        if (!points.empty() && opts.resume && fs::exists(record_path(j))) {
          try {
            auto row = row_from_json(json::parse(read_text(record_path(j).string())));
            if (row.config == point.key && row.workload == w.name && row.scheduler == spec.scheduler) {
              rows[i] = std::move(row);
              ++reused;
              continue;
            }
          } catch (const std::exception&) {
            // unreadable record: recompute
          }
        }
        rows[i] = run_point(point, w, policy, spec.keep_every);
        if (!points.empty()) write_text(record_path(j), row_json(*rows[i]).dump() + "\n");
      } catch (const std::exception& e) {
        errors[i] = point.key + "/" + w.name + ": " + e.what();
      }
    }
  };
  const std::uint32_t n = std::max<std::uint32_t>(1, opts.parallelism);
  std::vector<std::thread> pool;
  for (std::uint32_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  SweepOutcome out;
  out.reused = reused;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (rows[i]) {
      out.rows.push_back(std::move(*rows[i]));
    } else {
      out.failures.push_back(errors[i]);
    }
  }
  if (!opts.out_dir.empty()) write_text(fs::path(opts.out_dir) / "results.csv", to_csv(out.rows));
  return out;
}

std::string csv_header() {
  return "config,workload,cnn_ratio,scheduler,arrays,array_dim,vectors,lanes,shared_mem_mb,clusters,"
         "makespan_cycles,total_ops,tops,joules,watts,tops_per_watt,area_mm2";
}

std::string to_csv(const std::vector<SweepRow>& rows) {
  std::string out = csv_header() + "\n";
  for (const auto& r : rows) {
    out += r.config + "," + r.workload + "," + fmt_double(r.cnn_ratio) + "," + r.scheduler + "," +
           std::to_string(r.arrays) + "," + std::to_string(r.array_dim) + "," + std::to_string(r.vectors) + "," +
           std::to_string(r.lanes) + "," + std::to_string(r.shared_mem_mb) + "," + std::to_string(r.clusters) + "," +
           std::to_string(r.makespan_cycles) + "," + std::to_string(r.total_ops) + "," + fmt_double(r.tops) + "," +
           fmt_double(r.joules) + "," + fmt_double(r.watts) + "," + fmt_double(r.tops_per_watt) + "," +
           fmt_double(r.area_mm2) + "\n";
  }
  return out;
}

std::vector<SweepRow> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != csv_header()) {
    throw Error(ErrorCode::SchemaError, "results table does not start with the expected header");
  }
  std::vector<SweepRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 17) {
      throw Error(ErrorCode::SchemaError, "line " + std::to_string(lineno) + ": expected 17 fields");
    }
    try {
      SweepRow r;
      r.config = f[0];
      r.workload = f[1];
      r.cnn_ratio = std::stod(f[2]);
      r.scheduler = f[3];
      r.arrays = static_cast<std::uint32_t>(std::stoul(f[4]));
      r.array_dim = static_cast<std::uint32_t>(std::stoul(f[5]));
      r.vectors = static_cast<std::uint32_t>(std::stoul(f[6]));
      r.lanes = static_cast<std::uint32_t>(std::stoul(f[7]));
      r.shared_mem_mb = std::stoull(f[8]);
      r.clusters = static_cast<std::uint32_t>(std::stoul(f[9]));
      r.makespan_cycles = std::stoull(f[10]);
      r.total_ops = std::stoull(f[11]);
      r.tops = std::stod(f[12]);
      r.joules = std::stod(f[13]);
      r.watts = std::stod(f[14]);
      r.tops_per_watt = std::stod(f[15]);
      r.area_mm2 = std::stod(f[16]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::SchemaError, "line " + std::to_string(lineno) + ": malformed number");
    }
  }
  return rows;
}

std::vector<SweepRow> load_csv(const std::string& path) { return parse_csv(read_text(path)); }

double geometric_mean(const std::vector<double>& xs) {
  if (xs.empty()) return 0;
  double s = 0;
  for (double x : xs) s += std::log(x);
  return std::exp(s / double(xs.size()));
}

Comparison compare(const std::vector<SweepRow>& a, const std::vector<SweepRow>& b) {
  std::map<std::pair<std::string, std::string>, const SweepRow*> rhs;
  for (const auto& r : b) rhs[{r.config, r.workload}] = &r;
  if (rhs.size() != b.size()) throw Error(ErrorCode::KeyMismatch, "second table repeats a (config, workload) key");
  Comparison c;
  std::vector<double> speed, eff;
  std::size_t matched = 0;
  for (const auto& r : a) {
    auto it = rhs.find({r.config, r.workload});
    if (it == rhs.end()) {
      throw Error(ErrorCode::KeyMismatch, "(" + r.config + ", " + r.workload + ") is missing from the second table");
    }
    ++matched;
    const SweepRow& o = *it->second;
    CompareRow row{r.config, r.workload, r.cnn_ratio, 0, 0};
    row.speedup = o.tops > 0 ? r.tops / o.tops : 0;
    row.efficiency_ratio = o.tops_per_watt > 0 ? r.tops_per_watt / o.tops_per_watt : 0;
    if (row.speedup > 0) speed.push_back(row.speedup);
    if (row.efficiency_ratio > 0) eff.push_back(row.efficiency_ratio);
    c.rows.push_back(std::move(row));
  }
  if (matched != b.size() || a.size() != b.size()) {
    throw Error(ErrorCode::KeyMismatch, "tables hold different (config, workload) keys");
  }
  c.geomean_speedup = geometric_mean(speed);
  c.geomean_efficiency = geometric_mean(eff);
  return c;
}

std::string to_csv(const Comparison& c) {
  std::string out = "config,workload,cnn_ratio,speedup,efficiency_ratio\n";
  for (const auto& r : c.rows) {
    out += r.config + "," + r.workload + "," + fmt_double(r.cnn_ratio) + "," + fmt_double(r.speedup) + "," +
           fmt_double(r.efficiency_ratio) + "\n";
  }
  out += "geomean,,," + fmt_double(c.geomean_speedup) + "," + fmt_double(c.geomean_efficiency) + "\n";
  return out;
}

}  // namespace hsv::dse
