#include "hsv/workload.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "hsv/error.hpp"
#include "hsv/model.hpp"

namespace hsv::workload {

namespace {

using nlohmann::json;

const std::vector<std::string>& class_models(bool cnn) {
  static const std::vector<std::string> cnns = [] {
    std::vector<std::string> v;
    for (const auto& n : model::builtin_names()) {
      if (model::is_cnn_name(n)) v.push_back(n);
    }
    return v;
  }();
  static const std::vector<std::string> transformers = [] {
    std::vector<std::string> v;
    for (const auto& n : model::builtin_names()) {
      if (!model::is_cnn_name(n)) v.push_back(n);
    }
    return v;
  }();
  return cnn ? cnns : transformers;
}

int ratio_step(double ratio) {
  const double scaled = ratio * 10.0;
  const long step = std::lround(scaled);
  if (step < 0 || step > 10 || std::fabs(scaled - double(step)) > 1e-6) {
    throw Error(ErrorCode::ConfigError, "cnn ratio must be one of 0.0, 0.1, ..., 1.0");
  }
  return static_cast<int>(step);
}

std::string suite_name(int step, std::uint32_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "cnn%03d_s%u", step * 10, index);
  return buf;
}

}  // namespace

Workload generate(double cnn_ratio, std::uint32_t request_count, std::uint64_t seed,
                  const ArrivalSpec& arrivals) {
  if (request_count == 0) throw Error(ErrorCode::ConfigError, "request count must be at least 1");
  const int step = ratio_step(cnn_ratio);
  Workload w;
  w.seed = seed;
  w.cnn_ratio = step / 10.0;
  w.request_count = request_count;
  w.name = suite_name(step, 0);

  const auto cnn = static_cast<std::uint32_t>(std::lround(double(step) * request_count / 10.0));
  std::mt19937_64 rng(seed);
  std::vector<bool> is_cnn(request_count, false);
  for (std::uint32_t i = 0; i < cnn; ++i) is_cnn[i] = true;
  for (std::uint32_t i = request_count; i > 1; --i) {
    const auto j = static_cast<std::uint32_t>(rng() % i);
    std::swap(is_cnn[i - 1], is_cnn[j]);
  }
  for (std::uint32_t i = 0; i < request_count; ++i) {
    const auto& pool = class_models(is_cnn[i]);
    Request r;
    r.request_id = i;
    r.model = pool[rng() % pool.size()];
    r.arrival = arrivals.model == ArrivalModel::FixedRate ? i * arrivals.interval : 0;
    w.requests.push_back(r);
  }
  return w;
}

std::vector<Workload> standard_suite(std::uint32_t request_count, std::uint32_t seeds_per_ratio) {
  std::vector<Workload> suite;
  for (int step = 0; step <= 10; ++step) {
    for (std::uint32_t s = 1; s <= seeds_per_ratio; ++s) {
      const std::uint64_t seed = 1000ULL * step + s;
      Workload w = generate(step / 10.0, request_count, seed);
      w.name = suite_name(step, s);
      suite.push_back(std::move(w));
    }
  }
  return suite;
}

std::uint32_t cnn_requests(const Workload& w) {
  std::uint32_t n = 0;
  for (const auto& r : w.requests) n += model::is_cnn_name(r.model) ? 1 : 0;
  return n;
}

double transformer_fraction(const Workload& w) {
  if (w.requests.empty()) return 0;
  return 1.0 - double(cnn_requests(w)) / double(w.requests.size());
}

std::string to_json(const Workload& w) {
  nlohmann::ordered_json j;
  j["name"] = w.name;
  j["seed"] = w.seed;
  j["cnn_ratio"] = w.cnn_ratio;
  j["request_count"] = w.request_count;
  j["requests"] = nlohmann::ordered_json::array();
  for (const auto& r : w.requests) {
    j["requests"].push_back({{"id", r.request_id}, {"model", r.model}, {"arrival", r.arrival}});
  }
  return j.dump(2);
}

Workload parse_workload(const std::string& json_text) {
  try {
    const json j = json::parse(json_text);
    Workload w;
    w.name = j.value("name", std::string("workload"));
    w.seed = j.value("seed", std::uint64_t{0});
    w.cnn_ratio = j.value("cnn_ratio", 0.0);
    const auto& reqs = j.at("requests");
    std::uint64_t last = 0;
    for (std::size_t i = 0; i < reqs.size(); ++i) {
      Request r;
      r.request_id = reqs[i].value("id", static_cast<std::uint32_t>(i));
      r.model = reqs[i].at("model").get<std::string>();
      r.arrival = reqs[i].value("arrival", std::uint64_t{0});
      if (r.arrival < last) {
        throw Error(ErrorCode::SchemaError, "requests[" + std::to_string(i) + "]: arrivals must be non-decreasing");
      }
      last = r.arrival;
      w.requests.push_back(std::move(r));
    }
    w.request_count = j.value("request_count", static_cast<std::uint32_t>(w.requests.size()));
    if (w.request_count != w.requests.size()) {
      throw Error(ErrorCode::SchemaError, "request_count does not match the request list");
    }
    return w;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("workload manifest: ") + e.what());
  }
}

Workload load_workload(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_workload(ss.str());
}

void save_workload(const Workload& w, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << to_json(w) << '\n';
}

}  // namespace hsv::workload
