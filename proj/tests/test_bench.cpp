#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "croco/bench.hpp"
#include "croco/error.hpp"
#include "support/fixtures.hpp"
#include "support/oracle.hpp"

using namespace croco;

namespace {

GenerationResult fake_result(const Vector& x, const Vector& delta) {
  GenerationResult r;
  r.method = Method::Croco;
  r.delta = delta;
  r.x_cf = x + delta;
  r.converged = true;
  r.estimate.upper_bound = 0.25;
  return r;
}

SweepOptions small_options() {
  SweepOptions o;
  o.base.noise = NoiseSpec::gaussian(0.005, 2);
  o.base.max_inner_iters = 200;
  o.base.max_outer_steps = 2;
  o.base.allow_unreachable_target = true;
  o.grid.variances = {0.005, 0.02};
  o.grid.targets = {0.25, 0.35};
  o.k_eval = 2000;
  o.base_seed = 5;
  return o;
}

std::string csv(void (*writer)(std::span<const SweepRecord>, std::ostream&),
                std::span<const SweepRecord> records) {
  std::ostringstream out;
  writer(records, out);
  return out.str();
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_SUITE("bench") {

TEST_CASE("evaluation metrics") {
  const auto model = oracle::line_1d(10.0);
  const auto spec = NoiseSpec::gaussian(0.01, 1);
  const Vector x = Vector::Constant(1, -0.3);

  const auto same = evaluate(model, x, fake_result(x, Vector::Zero(1)), 1000, spec, 1);
  CHECK(same.validity == 0);
  CHECK(same.distance == 0.0);

  const auto deep = evaluate(model, x, fake_result(x, Vector::Constant(1, 2.3)), 1000, spec, 1);
  CHECK(deep.validity == 1);
  CHECK(deep.gamma_eval == 0.0);
  CHECK(deep.bound == 0.25);

  const auto flat = oracle::constant(2, -1.0);
  Vector x2 = Vector::Zero(2);
  Vector d(2);
  d << 0.1, -0.2;
  const auto r = evaluate(flat, x2, fake_result(x2, d), 10, NoiseSpec::gaussian(0.01, 2), 1);
  CHECK(r.distance == doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("sweep cardinality and Wachter rows") {
  const auto& s = fixtures::synthetic();
  std::vector<Vector> instances(s.negatives.begin(), s.negatives.begin() + 10);
  auto o = small_options();
  o.methods = {Method::Probe, Method::Croco};
  CHECK(run_sweep(s.model, instances, o).size() == 80);

  o.methods = {Method::Wachter};
  const auto w = run_sweep(s.model, instances, o);
  // generated once per instance, scored under each variance, no target
  REQUIRE(w.size() == 20);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK_FALSE(w[i].target.has_value());
    CHECK(w[i].distance == w[i + 10].distance);
    CHECK(*w[i].variance == 0.005);
    CHECK(*w[i + 10].variance == 0.02);
  }
  const auto tradeoff = csv(write_tradeoff, w);
  CHECK(tradeoff.find("wachter,0.005,NA,10,") != std::string::npos);
  CHECK(tradeoff.find("wachter,0.02,NA,10,") != std::string::npos);
}

TEST_CASE("sweep output is deterministic and independent of jobs") {
  const auto& s = fixtures::synthetic();
  std::vector<Vector> instances(s.negatives.begin(), s.negatives.begin() + 6);
  auto o = small_options();
  const auto a = run_sweep(s.model, instances, o);
  o.jobs = 3;
  const auto b = run_sweep(s.model, instances, o);
  for (auto writer : {write_tradeoff, write_validity_heatmap, write_target_comparison,
                      write_bound_check}) {
    CHECK(csv(writer, a) == csv(writer, b));
  }
  o.base_seed = 6;
  CHECK(csv(write_bound_check, a) != csv(write_bound_check, run_sweep(s.model, instances, o)));
}

TEST_CASE("emitters on empty and single inputs") {
  std::vector<SweepRecord> none;
  CHECK_THROWS_AS(csv(write_tradeoff, none), ConfigError);
  CHECK_THROWS_AS(emit_bound_check(none, "unused.csv"), ConfigError);

  SweepRecord r;
  r.method = Method::Probe;
  r.variance = 0.01;
  r.target = 0.2;
  r.validity = 1;
  r.distance = 0.123456789;
  r.gamma_eval = 0.1;
  r.bound = 0.3;
  std::vector<SweepRecord> one{r};
  CHECK(lines(csv(write_tradeoff, one)) == 2);
  CHECK(lines(csv(write_target_comparison, one)) == 2);
  CHECK(lines(csv(write_bound_check, one)) == 2);
  CHECK(csv(write_bound_check, one) ==
        "method,variance,target,instance,bound,gamma_eval,converged\n"
        "probe,0.01,0.2,0,0.3,0.1,0\n");
  CHECK(csv(write_tradeoff, one) ==
        "method,variance,target,count,mean_distance,sd_distance,mean_gamma,sd_gamma\n"
        "probe,0.01,0.2,1,0.123457,NA,0.1,NA\n");
}

TEST_CASE("heatmap fills missing cells with NA") {
  SweepRecord a;
  a.method = Method::Croco;
  a.variance = 0.005;
  a.target = 0.3;
  a.validity = 1;
  SweepRecord b = a;
  b.variance = 0.02;
  b.target = 0.35;
  b.validity = 0;
  SweepRecord w;
  w.method = Method::Wachter;
  w.variance = 0.02;
  w.validity = 1;
  std::vector<SweepRecord> records{a, b, w};
  CHECK(csv(write_validity_heatmap, records) ==
        "method,target,0.005,0.02\n"
        "wachter,NA,NA,100\n"
        "croco,0.3,100,NA\n"
        "croco,0.35,NA,0\n");
}

TEST_CASE("aggregation ignores record order") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<SweepRecord> records;
  for (std::size_t i = 0; i < 40; ++i) {
    SweepRecord r;
    r.method = i % 2 ? Method::Croco : Method::Probe;
    r.variance = i % 4 < 2 ? 0.005 : 0.02;
    r.target = 0.35;
    r.instance = i;
    r.validity = 1;
    r.distance = u(rng);
    r.gamma_eval = u(rng);
    records.push_back(r);
  }
  const auto before = csv(write_tradeoff, records);
  std::shuffle(records.begin(), records.end(), rng);
  CHECK(csv(write_tradeoff, records) == before);
  CHECK(lines(before) == 5);
}

}  // TEST_SUITE
