#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hsv::workload {

struct Request {
  std::uint32_t request_id = 0;
  std::string model;          // builtin model name
  std::uint64_t arrival = 0;  // cycles
  bool operator==(const Request&) const = default;
};

enum class ArrivalModel { Batch, FixedRate };

struct ArrivalSpec {
  ArrivalModel model = ArrivalModel::Batch;  // every request at cycle 0
  std::uint64_t interval = 0;                // FixedRate: cycles between arrivals
};

struct Workload {
  std::string name;
  std::uint64_t seed = 0;
  double cnn_ratio = 0;
  std::uint32_t request_count = 0;
  std::vector<Request> requests;
  bool operator==(const Workload&) const = default;
};

inline constexpr std::uint32_t kDefaultRequestCount = 16;

// cnn_ratio must lie on the 10% grid. CNN and transformer models are drawn
// uniformly from the four builtins of each class and interleaved at random.
Workload generate(double cnn_ratio, std::uint32_t request_count, std::uint64_t seed,
                  const ArrivalSpec& arrivals = {});

// 11 ratios x `seeds_per_ratio` workloads, named "cnn030_s1" and so on.
std::vector<Workload> standard_suite(std::uint32_t request_count = kDefaultRequestCount,
                                     std::uint32_t seeds_per_ratio = 3);

std::uint32_t cnn_requests(const Workload& w);
double transformer_fraction(const Workload& w);

std::string to_json(const Workload& w);
Workload parse_workload(const std::string& json_text);  // throws SchemaError
Workload load_workload(const std::string& path);
void save_workload(const Workload& w, const std::string& path);

}  // namespace hsv::workload
