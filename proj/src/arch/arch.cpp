#include "hsv/arch.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hsv/error.hpp"

namespace hsv::arch {

namespace {

using nlohmann::json;

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); }

int size_index(std::uint32_t size) {
  switch (size) {
    case 16: return 0;
    case 32: return 1;
    case 64: return 2;
    default: return -1;
  }
}

// Rows: MAC, Pooling, LUT, Reduction, Softmax, etc. Columns: 16/32/64.
constexpr std::uint64_t kVectorFj[kEnergyOpCount][3] = {
    {6110, 6160, 6190},       {17900, 18000, 18100},    {21700, 21900, 22000},
    {27300, 27600, 27700},    {155800, 157300, 158000}, {33700, 34000, 34100}};
constexpr std::uint64_t kSystolicMacFj[3] = {2070, 1330, 380};
constexpr double kVectorArea[3] = {1.25, 2.53, 5.08};
constexpr double kSystolicArea[3] = {1.69, 4.35, 13.00};

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    config_error(std::string("key '") + key + "': " + e.what());
  }
}

std::uint32_t read_count(const json& entry) {
  const auto count = get_or<std::int64_t>(entry, "count", 1);
  if (count < 1 || count > 1024) config_error("processor count must be in [1, 1024]");
  return static_cast<std::uint32_t>(count);
}

}  // namespace

const char* to_string(ProcessorKind k) { return k == ProcessorKind::Vector ? "vector" : "systolic"; }

const char* to_string(EnergyOp op) {
  switch (op) {
    case EnergyOp::MAC: return "MAC";
    case EnergyOp::Pooling: return "Pooling";
    case EnergyOp::LUT: return "LUT";
    case EnergyOp::Reduction: return "Reduction";
    case EnergyOp::Softmax: return "Softmax";
    case EnergyOp::Etc: return "etc";
  }
  return "?";
}

void validate(const HardwareConfig& hw) {
  if (hw.clusters.empty()) config_error("at least one cluster is required");
  if (!(hw.hbm_bandwidth_bytes_per_s > 0)) config_error("HBM bandwidth must be positive");
  if (!(hw.clock_hz > 0)) config_error("clock must be positive");
  const auto& vc = hw.vector_costs;
  if (vc.cpe_elementwise == 0 || vc.cpe_pool == 0 || vc.cpe_lut == 0 || vc.cpe_layernorm == 0 ||
      vc.c_exp + vc.c_acc + vc.c_div == 0) {
    config_error("vector cycle costs must be positive");
  }
  for (std::size_t c = 0; c < hw.clusters.size(); ++c) {
    const auto& cl = hw.clusters[c];
    const std::string where = "cluster " + std::to_string(c) + ": ";
    if (cl.arrays.empty()) config_error(where + "needs at least one systolic array");
    if (cl.vectors.empty()) config_error(where + "needs at least one vector processor");
    if (cl.shared_mem_bytes == 0) config_error(where + "shared memory must be non-empty");
    if (cl.num_task_queues == 0) config_error(where + "needs at least one task queue");
    for (const auto& a : cl.arrays) {
      if (size_index(a.dim) < 0) config_error(where + "array dim must be 16, 32 or 64");
      if (a.dim != cl.arrays.front().dim) config_error(where + "arrays in a cluster must share one size");
      if (a.clock_hz != hw.clock_hz) config_error(where + "processor clock differs from global clock");
    }
    for (const auto& v : cl.vectors) {
      if (size_index(v.lanes) < 0) config_error(where + "vector lanes must be 16, 32 or 64");
      if (v.lanes != cl.vectors.front().lanes) config_error(where + "vector processors in a cluster must share one size");
      if (v.clock_hz != hw.clock_hz) config_error(where + "processor clock differs from global clock");
    }
  }
}

HardwareConfig parse_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    config_error(std::string("malformed hardware config: ") + e.what());
  }
  if (!doc.is_object()) config_error("hardware config must be an object");
  HardwareConfig hw;
  hw.clock_hz = get_or<double>(doc, "clock_mhz", 800.0) * 1e6;
  hw.hbm_bandwidth_bytes_per_s = get_or<double>(doc, "hbm_gbps", 256.0) * 1e9;
  hw.hbm_latency_cycles = get_or<std::uint64_t>(doc, "hbm_latency_cycles", 100);
  if (doc.contains("vector_costs")) {
    const auto& v = doc["vector_costs"];
    auto& vc = hw.vector_costs;
    vc.cpe_elementwise = get_or(v, "cpe_elementwise", vc.cpe_elementwise);
    vc.cpe_pool = get_or(v, "cpe_pool", vc.cpe_pool);
    vc.cpe_lut = get_or(v, "cpe_lut", vc.cpe_lut);
    vc.cpe_layernorm = get_or(v, "cpe_layernorm", vc.cpe_layernorm);
    vc.c_exp = get_or(v, "c_exp", vc.c_exp);
    vc.c_acc = get_or(v, "c_acc", vc.c_acc);
    vc.c_div = get_or(v, "c_div", vc.c_div);
  }
  if (!doc.contains("clusters") || !doc["clusters"].is_array()) config_error("'clusters' array is required");
  for (const auto& c : doc["clusters"]) {
    ClusterConfig cl;
    if (!c.contains("arrays") || !c["arrays"].is_array()) config_error("cluster needs 'arrays'");
    if (!c.contains("vectors") || !c["vectors"].is_array()) config_error("cluster needs 'vectors'");
    for (const auto& a : c["arrays"]) {
      SystolicArraySpec spec;
      spec.dim = get_or<std::uint32_t>(a, "dim", 0);
      spec.clock_hz = hw.clock_hz;
      spec.input_buffer_bytes = spec.weight_buffer_bytes = spec.dim * 2048ULL;
      spec.output_buffer_bytes = spec.dim * 4096ULL;
      cl.arrays.insert(cl.arrays.end(), read_count(a), spec);
    }
    for (const auto& v : c["vectors"]) {
      VectorProcessorSpec spec;
      spec.lanes = get_or<std::uint32_t>(v, "lanes", 0);
      spec.clock_hz = hw.clock_hz;
      spec.io_buffer_bytes = spec.lanes * 2048ULL;
      cl.vectors.insert(cl.vectors.end(), read_count(v), spec);
    }
    const double mb = get_or<double>(c, "shared_mem_mb", 45.0);
    if (!(mb > 0)) config_error("shared_mem_mb must be positive");
    cl.shared_mem_bytes = static_cast<std::uint64_t>(mb * double(kMiB));
    cl.num_task_queues = get_or<std::uint32_t>(c, "num_task_queues", 8);
    const auto replicate = get_or<std::int64_t>(c, "replicate", 1);
    if (replicate < 1 || replicate > 256) config_error("replicate must be in [1, 256]");
    hw.clusters.insert(hw.clusters.end(), static_cast<std::size_t>(replicate), cl);
  }
  validate(hw);
  return hw;
}

HardwareConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.message());
  }
}

std::string to_json(const HardwareConfig& hw) {
  json doc;
  doc["clock_mhz"] = hw.clock_hz / 1e6;
  doc["hbm_gbps"] = hw.hbm_bandwidth_bytes_per_s / 1e9;
  doc["hbm_latency_cycles"] = hw.hbm_latency_cycles;
  const auto& vc = hw.vector_costs;
  doc["vector_costs"] = {{"cpe_elementwise", vc.cpe_elementwise}, {"cpe_pool", vc.cpe_pool},
                         {"cpe_lut", vc.cpe_lut}, {"cpe_layernorm", vc.cpe_layernorm},
                         {"c_exp", vc.c_exp}, {"c_acc", vc.c_acc}, {"c_div", vc.c_div}};
  doc["clusters"] = json::array();
  for (const auto& cl : hw.clusters) {
    json c;
    c["arrays"] = {{{"dim", cl.arrays.front().dim}, {"count", cl.arrays.size()}}};
    c["vectors"] = {{{"lanes", cl.vectors.front().lanes}, {"count", cl.vectors.size()}}};
    c["shared_mem_mb"] = double(cl.shared_mem_bytes) / double(kMiB);
    c["num_task_queues"] = cl.num_task_queues;
    doc["clusters"].push_back(c);
  }
  return doc.dump(2);
}

HardwareConfig make_config(std::uint32_t array_count, std::uint32_t dim, std::uint32_t vector_count,
                           std::uint32_t lanes, std::uint64_t shared_mem_mb, std::uint32_t clusters) {
  HardwareConfig hw;
  ClusterConfig cl;
  SystolicArraySpec a;
  a.dim = dim;
  a.input_buffer_bytes = a.weight_buffer_bytes = dim * 2048ULL;
  a.output_buffer_bytes = dim * 4096ULL;
  VectorProcessorSpec v;
  v.lanes = lanes;
  v.io_buffer_bytes = lanes * 2048ULL;
  cl.arrays.assign(array_count, a);
  cl.vectors.assign(vector_count, v);
  cl.shared_mem_bytes = shared_mem_mb * kMiB;
  hw.clusters.assign(clusters, cl);
  validate(hw);
  return hw;
}

double peak_performance_gops(const ClusterConfig& cluster) {
  double total = 0;
  for (const auto& a : cluster.arrays) total += a.peak_gops();
  for (const auto& v : cluster.vectors) total += v.peak_gops();
  return total;
}

double peak_performance_gops(const HardwareConfig& hw) {
  double total = 0;
  for (const auto& c : hw.clusters) total += peak_performance_gops(c);
  return total;
}

PhysicalModel PhysicalModel::standard() {
  PhysicalModel m;
  // Calibrated so 4 x (4 x 64x64 + 8 x 64-lane + 40 MiB) totals 633.8 mm^2.
  m.shared_mem_mm2_per_mib = 1.64525;
  m.sram_fj_per_byte = 800;    // 0.1 pJ/bit
  m.hbm_fj_per_byte = 31200;   // 3.9 pJ/bit
  return m;
}

double PhysicalModel::systolic_area_mm2(std::uint32_t dim) const {
  const int i = size_index(dim);
  if (i < 0) config_error("no area data for " + std::to_string(dim) + "x" + std::to_string(dim) + " array");
  return kSystolicArea[i];
}

double PhysicalModel::vector_area_mm2(std::uint32_t lanes) const {
  const int i = size_index(lanes);
  if (i < 0) config_error("no area data for " + std::to_string(lanes) + "-lane vector processor");
  return kVectorArea[i];
}

double PhysicalModel::shared_mem_area_mm2(std::uint64_t bytes) const {
  return double(bytes) / double(kMiB) * shared_mem_mm2_per_mib;
}

std::uint64_t PhysicalModel::energy_fj(EnergyOp op, ProcessorKind kind, std::uint32_t size) const {
  const int i = size_index(size);
  if (i < 0) config_error("no energy data for processor size " + std::to_string(size));
  if (kind == ProcessorKind::Systolic) {
    if (op != EnergyOp::MAC) {
      throw Error(ErrorCode::UndefinedOpForProcessor,
                  std::string(to_string(op)) + " is not executable on a systolic array");
    }
    return kSystolicMacFj[i];
  }
  return kVectorFj[static_cast<int>(op)][i];
}

double PhysicalModel::energy_of(EnergyOp op, std::uint64_t count, ProcessorKind kind,
                                std::uint32_t size) const {
  return double(count) * double(energy_fj(op, kind, size)) * 1e-15;
}

double total_area_mm2(const HardwareConfig& hw, const PhysicalModel& phys) {
  double total = 0;
  for (const auto& c : hw.clusters) {
    for (const auto& a : c.arrays) total += phys.systolic_area_mm2(a.dim);
    for (const auto& v : c.vectors) total += phys.vector_area_mm2(v.lanes);
    total += phys.shared_mem_area_mm2(c.shared_mem_bytes);
  }
  return total;
}

}  // namespace hsv::arch
