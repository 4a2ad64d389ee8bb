#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hsv::arch {

inline constexpr std::uint64_t kMiB = 1ULL << 20;

struct SystolicArraySpec {
  std::uint32_t dim = 16;  // dim x dim PEs
  double clock_hz = 800e6;
  std::uint64_t input_buffer_bytes = 16 * 2048;
  std::uint64_t weight_buffer_bytes = 16 * 2048;
  std::uint64_t output_buffer_bytes = 16 * 4096;

  double peak_gops() const { return double(dim) * dim * 2.0 * clock_hz / 1e9; }
  bool operator==(const SystolicArraySpec&) const = default;
};

struct VectorProcessorSpec {
  std::uint32_t lanes = 16;
  double clock_hz = 800e6;
  std::uint64_t io_buffer_bytes = 16 * 2048;

  double peak_gops() const { return double(lanes) * 2.0 * clock_hz / 1e9; }
  bool operator==(const VectorProcessorSpec&) const = default;
};

// Cycle costs of the vector lanes' multi-cycle units.
struct VectorCosts {
  std::uint32_t cpe_elementwise = 1;
  std::uint32_t cpe_pool = 1;
  std::uint32_t cpe_lut = 1;
  std::uint32_t cpe_layernorm = 4;
  std::uint32_t c_exp = 4;
  std::uint32_t c_acc = 1;
  std::uint32_t c_div = 8;
  bool operator==(const VectorCosts&) const = default;
};

struct ClusterConfig {
  std::vector<SystolicArraySpec> arrays;
  std::vector<VectorProcessorSpec> vectors;
  std::uint64_t shared_mem_bytes = 45 * kMiB;
  std::uint32_t num_task_queues = 8;
  bool operator==(const ClusterConfig&) const = default;
};

struct HardwareConfig {
  std::vector<ClusterConfig> clusters;
  double clock_hz = 800e6;
  double hbm_bandwidth_bytes_per_s = 256e9;  // per cluster-attached channel
  std::uint64_t hbm_latency_cycles = 100;
  VectorCosts vector_costs;
  bool operator==(const HardwareConfig&) const = default;
};

// Throws Error(ConfigError).
void validate(const HardwareConfig& hw);

HardwareConfig parse_config(const std::string& json_text);
HardwareConfig load_config(const std::string& path);
std::string to_json(const HardwareConfig& hw);

// Uniform cluster: `arrays` x (dim x dim), `vectors` x lanes, replicated.
HardwareConfig make_config(std::uint32_t array_count, std::uint32_t dim, std::uint32_t vector_count,
                           std::uint32_t lanes, std::uint64_t shared_mem_mb,
                           std::uint32_t clusters = 1);

double peak_performance_gops(const HardwareConfig& hw);
double peak_performance_gops(const ClusterConfig& cluster);

enum class ProcessorKind { Vector, Systolic };
const char* to_string(ProcessorKind k);

enum class EnergyOp { MAC, Pooling, LUT, Reduction, Softmax, Etc };
inline constexpr int kEnergyOpCount = 6;
const char* to_string(EnergyOp op);

// Area and per-operation energy of the 28nm processor implementations.
// Energies are held in femtojoules so accumulated totals are exact integers.
class PhysicalModel {
 public:
  static PhysicalModel standard();

  double systolic_area_mm2(std::uint32_t dim) const;
  double vector_area_mm2(std::uint32_t lanes) const;
  double shared_mem_area_mm2(std::uint64_t bytes) const;

  // Throws UndefinedOpForProcessor for table dashes and ConfigError for
  // unsupported sizes.
  std::uint64_t energy_fj(EnergyOp op, ProcessorKind kind, std::uint32_t size) const;
  double energy_pj(EnergyOp op, ProcessorKind kind, std::uint32_t size) const {
    return double(energy_fj(op, kind, size)) / 1000.0;
  }
  double energy_of(EnergyOp op, std::uint64_t count, ProcessorKind kind, std::uint32_t size) const;

  double shared_mem_mm2_per_mib = 0;
  std::uint64_t sram_fj_per_byte = 0;
  std::uint64_t hbm_fj_per_byte = 0;
};

double total_area_mm2(const HardwareConfig& hw, const PhysicalModel& phys);

}  // namespace hsv::arch
