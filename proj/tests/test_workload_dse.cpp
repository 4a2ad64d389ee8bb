#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <set>

#include "hsv/dse.hpp"
#include "hsv/error.hpp"
#include "hsv/model.hpp"
#include "hsv/workload.hpp"

using namespace hsv;
using namespace hsv::workload;

namespace {

std::pair<std::uint32_t, std::uint32_t> recount(const Workload& w) {
  std::uint32_t cnn = 0, tf = 0;
  for (const auto& r : w.requests) (model::is_cnn_name(r.model) ? cnn : tf)++;
  return {cnn, tf};
}

dse::SweepSpec tiny_spec() {
  dse::SweepSpec s;
  s.arrays = {{1, 16}, {2, 32}};
  s.vectors = {{2, 16}};
  s.shared_mem_mb = {45};
  s.clusters = {1};
  s.keep_every = 8;
  return s;
}

std::vector<Workload> tiny_suite() { return {generate(0.5, 2, 1), generate(1.0, 2, 2)}; }

ErrorCode error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error");
  return ErrorCode::IoError;
}

}  // namespace

TEST_CASE("workload mix") {
  CHECK(recount(generate(1.0, 20, 1)) == std::pair<std::uint32_t, std::uint32_t>{20, 0});
  CHECK(recount(generate(0.5, 20, 1)) == std::pair<std::uint32_t, std::uint32_t>{10, 10});
  CHECK(recount(generate(0.0, 7, 1)) == std::pair<std::uint32_t, std::uint32_t>{0, 7});
  CHECK(generate(0.3, 16, 9) == generate(0.3, 16, 9));
  CHECK(generate(0.3, 16, 9).requests != generate(0.3, 16, 10).requests);
  CHECK(error_of([] { generate(0.35, 10, 1); }) == ErrorCode::ConfigError);
  const auto spaced = generate(0.5, 4, 1, {ArrivalModel::FixedRate, 1000});
  for (std::uint32_t i = 0; i < 4; ++i) CHECK(spaced.requests[i].arrival == i * 1000);
}

TEST_CASE("standard suite") {
  const auto suite = standard_suite();
  CHECK(suite.size() == 33);
  std::set<int> ratios;
  std::set<std::string> names;
  for (const auto& w : suite) {
    ratios.insert(int(std::lround(w.cnn_ratio * 10)));
    names.insert(w.name);
    const auto [cnn, tf] = recount(w);
    CHECK(cnn + tf == kDefaultRequestCount);
    CHECK(cnn == std::uint32_t(std::lround(w.cnn_ratio * kDefaultRequestCount)));
    CHECK(cnn == cnn_requests(w));
    CHECK(transformer_fraction(w) == doctest::Approx(double(tf) / kDefaultRequestCount));
  }
  CHECK(ratios.size() == 11);
  CHECK(*ratios.begin() == 0);
  CHECK(*ratios.rbegin() == 10);
  CHECK(names.size() == 33);
}

TEST_CASE("manifest round trip and errors") {
  const auto w = generate(0.7, 5, 4);
  CHECK(parse_workload(to_json(w)) == w);
  CHECK(error_of([] { parse_workload("{}"); }) == ErrorCode::SchemaError);
  CHECK(error_of([] {
          parse_workload(R"({"name": "x", "requests": [{"model": "alexnet", "arrival": 5},
                                                       {"model": "gpt2", "arrival": 1}]})");
        }) == ErrorCode::SchemaError);
}

TEST_CASE("sweep expansion") {
  const auto points = dse::expand(dse::standard_spec());
  CHECK(points.size() == 108);
  CHECK(points.size() * standard_suite().size() == 3564);
  std::set<std::string> keys;
  for (const auto& p : points) keys.insert(p.key);
  CHECK(keys.size() == 108);
  CHECK(keys.count("a4x32_v8x32_sm45_c1") == 1);
  CHECK(error_of([] { dse::parse_sweep_spec(R"({"arrays": [{"count": 1, "dim": 48}]})"); }) ==
        ErrorCode::ConfigError);
}

TEST_CASE("sweep runs and rows recompute standalone") {
  auto spec = tiny_spec();
  spec.arrays = {{1, 16}};
  const std::vector<Workload> one{generate(0.5, 2, 1)};
  const auto single = dse::sweep(spec, one);
  REQUIRE(single.rows.size() == 1);
  CHECK(single.failures.empty());

  const auto suite = tiny_suite();
  const auto out = dse::sweep(tiny_spec(), suite, {2, "", false});
  REQUIRE(out.rows.size() == 4);
  const auto points = dse::expand(tiny_spec());
  const auto& row = out.rows[3];
  const auto again = dse::run_point(points[1], suite[1], sched::Policy::HeterogeneityAware, 8);
  CHECK(again == row);
  const auto serial = dse::sweep(tiny_spec(), suite, {1, "", false});
  CHECK(serial.rows == out.rows);
}

TEST_CASE("sweep records and resume") {
  const auto dir = (std::filesystem::temp_directory_path() / "hsv_sweep_resume").string();
  std::filesystem::remove_all(dir);
  const auto first = dse::sweep(tiny_spec(), tiny_suite(), {1, dir, true});
  CHECK(first.reused == 0);
  CHECK(std::filesystem::exists(dir + "/results.csv"));
  const auto second = dse::sweep(tiny_spec(), tiny_suite(), {1, dir, true});
  CHECK(second.reused == 4);
  CHECK(second.rows == first.rows);
  CHECK(dse::load_csv(dir + "/results.csv") == first.rows);
  std::filesystem::remove_all(dir);
}

TEST_CASE("csv and compare") {
  dse::SweepRow a;
  a.config = "a1x16_v1x16_sm45_c1";
  a.workload = "cnn050_s1";
  a.cnn_ratio = 0.5;
  a.scheduler = "has";
  a.tops = 0.123456789012345678;
  a.tops_per_watt = 2.0;
  a.makespan_cycles = 1000;
  auto b = a;
  b.workload = "cnn100_s1";
  b.tops = 3.0;
  b.tops_per_watt = 4.0;
  const std::vector<dse::SweepRow> rows{a, b};
  CHECK(dse::parse_csv(dse::to_csv(rows)) == rows);
  CHECK(error_of([] { dse::parse_csv("nope\n"); }) == ErrorCode::SchemaError);

  const auto same = dse::compare(rows, rows);
  for (const auto& r : same.rows) {
    CHECK(r.speedup == 1.0);
    CHECK(r.efficiency_ratio == 1.0);
  }
  CHECK(same.geomean_speedup == doctest::Approx(1.0));

  // Hand-computed: B runs twice as long on the first row, four times on the second.
  auto slow = rows;
  slow[0].makespan_cycles = 2000;
  slow[0].tops = a.tops / 2;
  slow[0].tops_per_watt = 1.0;
  slow[1].makespan_cycles = 4000;
  slow[1].tops = b.tops / 4;
  slow[1].tops_per_watt = 1.0;
  const auto c = dse::compare(rows, slow);
  REQUIRE(c.rows.size() == 2);
  CHECK(c.rows[0].speedup == doctest::Approx(2.0));
  CHECK(c.rows[1].speedup == doctest::Approx(4.0));
  CHECK(c.rows[1].efficiency_ratio == doctest::Approx(4.0));
  CHECK(c.geomean_speedup == doctest::Approx(std::sqrt(8.0)));

  CHECK(error_of([&] { dse::compare(rows, {a}); }) == ErrorCode::KeyMismatch);
  CHECK(dse::geometric_mean({1.0, 4.0, 16.0}) == doctest::Approx(4.0));
}
