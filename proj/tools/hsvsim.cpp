// hsvsim: model conversion, simulation and design-space sweeps for the
// heterogeneous systolic-vector accelerator model.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hsv/arch.hpp"
#include "hsv/dse.hpp"
#include "hsv/error.hpp"
#include "hsv/model.hpp"
#include "hsv/sim.hpp"
#include "hsv/umf.hpp"
#include "hsv/workload.hpp"

namespace fs = std::filesystem;
using namespace hsv;

namespace {

enum Exit : int {
  kOk = 0,
  kFailure = 1,
  kSchema = 3,
  kCodec = 4,
  kConfig = 5,
  kDeadlock = 6,
  kSweepPartial = 7,
  kKeyMismatch = 8,
};

int exit_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::BadMagic:
    case ErrorCode::UnknownVersion:
    case ErrorCode::TruncatedFrame:
    case ErrorCode::SizeChainMismatch:
    case ErrorCode::InvariantViolation:
    case ErrorCode::WrongPacketType:
      return kCodec;
    case ErrorCode::SchemaError:
    case ErrorCode::CycleDetected:
    case ErrorCode::ShapeMismatch:
    case ErrorCode::UnknownModel:
    case ErrorCode::DanglingTensorRef:
    case ErrorCode::UnsupportedOp:
      return kSchema;
    case ErrorCode::ConfigError:
    case ErrorCode::UndefinedOpForProcessor:
      return kConfig;
    case ErrorCode::CapacityDeadlock:
    case ErrorCode::UnpartitionableLayer:
    case ErrorCode::NoReadyTask:
      return kDeadlock;
    case ErrorCode::KeyMismatch:
      return kKeyMismatch;
    case ErrorCode::IoError:
      return kFailure;
  }
  return kFailure;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// "builtin:<name>", a .umf frame, or a JSON model description.
model::ModelGraph load_model(const std::string& source) {
  if (source.rfind("builtin:", 0) == 0) return model::builtin_model(source.substr(8));
  if (ends_with(source, ".umf")) {
    auto g = model::from_umf(umf::decode_frame(umf::read_file(source)));
    g.name = fs::path(source).stem().string();
    return g;
  }
  try {
    return model::ingest_graph_file(source);
  } catch (const Error& e) {
    throw Error(e.code(), source + ": " + e.message());
  }
}

std::string default_out_dir() {
  const char* env = std::getenv("HSVSIM_OUT_DIR");
  return env && *env ? env : ".";
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
}

arch::HardwareConfig default_hardware() { return arch::make_config(4, 32, 8, 32, 45, 1); }

std::string describe(const model::ModelGraph& g) {
  std::string out = g.name + " (" + model::to_string(g.model_class) + ", model id " + std::to_string(g.model_id) +
                    "): " + std::to_string(g.layers.size()) + " layers, " + std::to_string(g.total_param_bytes()) +
                    " parameter bytes\n";
  std::uint64_t ops = 0;
  for (const auto& l : g.layers) {
    const auto w = model::layer_work(g, l);
    ops += model::layer_ops(w);
    const auto& shape = g.tensor(l.outputs.at(0)).shape;
    std::string dims;
    for (std::size_t i = 0; i < shape.size(); ++i) dims += (i ? "x" : "") + std::to_string(shape[i]);
    char line[256];
    std::snprintf(line, sizeof line, "  %4u %-14s %-28s out %-18s params %llu\n", l.id, umf::to_string(l.op),
                  l.name.substr(0, 28).c_str(), dims.c_str(), (unsigned long long)g.layer_param_bytes(l));
    out += line;
  }
  out += "  total ops " + std::to_string(ops) + "\n";
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heterogeneous systolic-vector accelerator simulator"};
  app.require_subcommand(1);

  // convert
  auto* convert = app.add_subcommand("convert", "Convert a model description to a UMF ModelLoad frame");
  std::string conv_in, conv_out;
  std::uint32_t user_id = 0, transaction_id = 0;
  bool with_bodies = false;
  convert->add_option("model", conv_in, "JSON model description, .umf file, or builtin:<name>")->required();
  convert->add_option("-o,--output", conv_out, "Output .umf path")->required();
  convert->add_option("--user-id", user_id, "Header user id");
  convert->add_option("--transaction-id", transaction_id, "Header transaction id");
  convert->add_flag("--with-bodies", with_bodies, "Emit zero-filled weight bodies");

  // inspect
  auto* inspect = app.add_subcommand("inspect", "Summarize the model held in a UMF file or description");
  std::string insp_in;
  inspect->add_option("model", insp_in, "Model source")->required();

  // umf dump
  auto* umf_cmd = app.add_subcommand("umf", "Frame-level UMF utilities");
  umf_cmd->require_subcommand(1);
  auto* dump = umf_cmd->add_subcommand("dump", "List the header and packets of a UMF file");
  std::string dump_in;
  dump->add_option("file", dump_in, "UMF file")->required();

  // generate
  auto* generate = app.add_subcommand("generate", "Write workload manifests");
  double gen_ratio = 0.5;
  std::uint32_t gen_count = workload::kDefaultRequestCount;
  std::uint64_t gen_seed = 1;
  std::uint64_t gen_interval = 0;
  std::string gen_out;
  bool gen_suite = false;
  generate->add_option("--ratio", gen_ratio, "CNN ratio on the 10% grid");
  generate->add_option("--count", gen_count, "Requests per workload");
  generate->add_option("--seed", gen_seed, "Generator seed");
  generate->add_option("--interval", gen_interval, "Cycles between arrivals (0: all at cycle 0)");
  generate->add_flag("--suite", gen_suite, "Write the 33-workload suite into the output directory");
  generate->add_option("-o,--output", gen_out, "Manifest path, or directory with --suite")->required();

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Run one workload and write report, trace and decision log");
  std::string sim_workload, sim_hw, sim_sched = "has", sim_out, sim_model;
  std::vector<std::string> sim_model_files;
  std::uint32_t sim_requests = 1, sim_keep = 4;
  std::uint64_t sim_seed = 0;
  simulate->add_option("-w,--workload", sim_workload, "Workload manifest");
  simulate->add_option("-m,--model", sim_model, "Run --requests copies of one model instead of a manifest");
  simulate->add_option("-n,--requests", sim_requests, "Request count for --model");
  simulate->add_option("--model-file", sim_model_files, "Register a model description or .umf under its name");
  simulate->add_option("--hw", sim_hw, "Hardware config file (default: one cluster, 4x 32x32, 8x 32-lane, 45 MB)");
  simulate->add_option("-s,--scheduler", sim_sched, "rr or has");
  simulate->add_option("--seed", sim_seed, "Recorded in the trace");
  simulate->add_option("--keep-every", sim_keep, "Keep every k-th layer of builtin models (1: full depth)");
  simulate->add_option("-o,--out-dir", sim_out, "Output directory (default: $HSVSIM_OUT_DIR or .)");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Run the design-space sweep");
  std::string sweep_spec, sweep_out, sweep_sched;
  std::uint32_t sweep_par = 1;
  double sweep_sample = 0;
  bool no_resume = false;
  sweep->add_option("--spec", sweep_spec, "Sweep spec file (default: 108 single-cluster configs)");
  sweep->add_option("-o,--out-dir", sweep_out, "Output directory (default: $HSVSIM_OUT_DIR or .)");
  sweep->add_option("-j,--parallelism", sweep_par, "Worker threads");
  sweep->add_option("--sample", sweep_sample, "Fraction of points to run, e.g. 0.1");
  sweep->add_option("-s,--scheduler", sweep_sched, "rr or has (overrides the spec)");
  sweep->add_flag("--no-resume", no_resume, "Recompute points already recorded in the output directory");

  // compare
  auto* compare = app.add_subcommand("compare", "Ratio table of two sweep result tables (A over B)");
  std::string cmp_a, cmp_b, cmp_out;
  compare->add_option("a", cmp_a, "results.csv A")->required();
  compare->add_option("b", cmp_b, "results.csv B")->required();
  compare->add_option("-o,--output", cmp_out, "Write the comparison table here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*convert) {
      const auto g = load_model(conv_in);
      const auto bytes = umf::encode_frame(model::to_umf(g, {user_id, transaction_id, with_bodies}));
      umf::write_file(conv_out, bytes);
      std::cout << "wrote " << conv_out << " (" << bytes.size() << " bytes, " << g.layers.size() << " layers)\n";
    } else if (*inspect) {
      std::cout << describe(load_model(insp_in));
    } else if (*dump) {
      std::cout << umf::inspect_frame(umf::read_file(dump_in));
    } else if (*generate) {
      if (gen_suite) {
        fs::create_directories(gen_out);
        for (const auto& w : workload::standard_suite(gen_count)) {
          workload::save_workload(w, (fs::path(gen_out) / (w.name + ".json")).string());
        }
        std::cout << "wrote 33 manifests to " << gen_out << "\n";
      } else {
        workload::ArrivalSpec arrivals;
        if (gen_interval > 0) arrivals = {workload::ArrivalModel::FixedRate, gen_interval};
        workload::save_workload(workload::generate(gen_ratio, gen_count, gen_seed, arrivals), gen_out);
      }
    } else if (*simulate) {
      const auto policy = sched::parse_policy(sim_sched);
      const auto hw = sim_hw.empty() ? default_hardware() : arch::load_config(sim_hw);
      sim::ModelLibrary models(sim_keep);
      for (const auto& f : sim_model_files) {
        auto g = load_model(f);
        const std::string name = g.name;
        models.add(name, std::move(g));
      }
      workload::Workload w;
      if (!sim_workload.empty()) {
        w = workload::load_workload(sim_workload);
      } else if (!sim_model.empty()) {
        w.name = sim_model;
        w.request_count = sim_requests;
        for (std::uint32_t i = 0; i < sim_requests; ++i) w.requests.push_back({i, sim_model, 0});
      } else {
        throw Error(ErrorCode::ConfigError, "simulate needs --workload or --model");
      }
      sim::RunOptions opts;
      opts.seed = sim_seed;
      const auto result = sim::simulate(w, hw, policy, models, opts);
      const fs::path out = sim_out.empty() ? default_out_dir() : sim_out;
      fs::create_directories(out);
      const std::string summary = sim::summary_json(result.report);
      write_text(out / "report.json", summary + "\n");
      write_text(out / "decisions.jsonl", sim::decision_log(result.trace));
      sim::export_trace(result.trace, hw, (out / "trace.json").string());
      std::cout << summary << "\n";
    } else if (*sweep) {
      auto spec = sweep_spec.empty() ? dse::standard_spec() : dse::load_sweep_spec(sweep_spec);
      if (!sweep_sched.empty()) {
        sched::parse_policy(sweep_sched);
        spec.scheduler = sweep_sched;
      }
      if (sweep_sample > 0) spec.sample = sweep_sample;
      const auto suite = workload::standard_suite(spec.request_count, spec.seeds_per_ratio);
      dse::SweepOptions opts;
      opts.parallelism = sweep_par;
      opts.out_dir = sweep_out.empty() ? default_out_dir() : sweep_out;
      opts.resume = !no_resume;
      const auto outcome = dse::sweep(spec, suite, opts);
      std::cout << outcome.rows.size() << " rows (" << outcome.reused << " reused) -> "
                << (fs::path(opts.out_dir) / "results.csv").string() << "\n";
      if (!outcome.failures.empty()) {
        std::cerr << outcome.failures.size() << " point(s) failed:\n";
        for (const auto& f : outcome.failures) std::cerr << "  " << f << "\n";
        return kSweepPartial;
      }
    } else if (*compare) {
      const auto c = dse::compare(dse::load_csv(cmp_a), dse::load_csv(cmp_b));
      if (cmp_out.empty()) {
        std::cout << dse::to_csv(c);
      } else {
        write_text(cmp_out, dse::to_csv(c));
        std::printf("geomean speedup %.4f, efficiency %.4f\n", c.geomean_speedup, c.geomean_efficiency);
      }
    }
  } catch (const Error& e) {
    std::cerr << "hsvsim: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "hsvsim: " << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}
