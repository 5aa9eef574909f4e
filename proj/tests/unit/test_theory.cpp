#include <doctest.h>

#include <cmath>
#include <set>

#include "sflga/theory.hpp"
#include "support.hpp"

using namespace sflga;
using namespace sflga::theory;

TEST_SUITE("theory") {

TEST_CASE("sampled indices are sorted and distinct") {
  Rng rng(3);
  const auto idx = sample_indices(rng, 50, 20);
  CHECK(idx.size() == 20);
  CHECK(std::is_sorted(idx.begin(), idx.end()));
  CHECK(std::set<std::size_t>(idx.begin(), idx.end()).size() == 20);
  CHECK(idx.back() < 50);
}

TEST_CASE("quadratic constants are exact") {
  const Quadratic task(2.5, 4);
  const std::vector<double> c(4, 0.3);
  CHECK(estimate_L(task, 10, c, 1.0, 7) == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(estimate_sigma2(task, 5, c, 1, 7) == 0.0);
}

TEST_CASE("smoothness estimate grows with the sample set") {
  const auto task = NetworkTask(nn::NetworkSpec::classifier({3, 4, 2}),
                                {test::random_dataset(30, 3, 2, 1), test::random_dataset(20, 3, 2, 2)});
  const auto w = nn::init_params(task.spec(), 1);
  // Same seed: the larger sample set is a superset of point pairs.
  CHECK(estimate_L(task, 12, w.values(), 0.5, 4) >= estimate_L(task, 6, w.values(), 0.5, 4));
}

TEST_CASE("step-size condition boundary") {
  // 2 L^2 eta^2 tau (tau-1) <= 0.2
  CHECK(stepsize_ok(1.0, std::sqrt(0.2 / 4.0), 2));
  CHECK_FALSE(stepsize_ok(1.0, std::sqrt(0.2 / 4.0) * 1.001, 2));
  CHECK(stepsize_ok(100.0, 1.0, 1));
}

TEST_CASE("one-round bound formula") {
  TheoryConstants c;
  c.L = 2.0;
  c.sigma2 = 0.5;
  c.eta = 0.1;
  c.tau = 3;
  c.rho = {0.25, 0.75};
  const double rho2 = 0.0625 + 0.5625;
  const double expect = -(0.1 * 3 / 4.0) * 4.0 + 0.1 * 3 * 0.2 + 2.0 * 0.01 * 3 * 0.5 * rho2 +
                        1.25 * 4.0 * 0.001 * 0.5 * 3 * 2;
  CHECK(lemma1_rhs(c, 4.0, 0.2) == doctest::Approx(expect));
  CHECK(sum_rho_squared(c.rho) == doctest::Approx(rho2));
}

TEST_CASE("averaged bound terms") {
  TheoryConstants c;
  c.L = 2.0;
  c.sigma2 = 0.5;
  c.eta = 0.1;
  c.tau = 2;
  c.rho = {0.5, 0.5};
  const std::vector<double> gammas{0.1, 0.3};
  const auto t = theorem1_rhs(c, 2, 3.0, 1.0, gammas);
  CHECK(t.initialization == doctest::Approx(4.0 * 2.0 / (0.1 * 2 * 2)));
  CHECK(t.cutting_point == doctest::Approx(4.0 / 2.0 * 0.4));
  CHECK(t.variance == doctest::Approx(4 * 2.0 * 0.1 * 0.5 * 0.5 + 5 * 4.0 * 0.01 * 0.5 * 1));
  CHECK(t.total == doctest::Approx(t.initialization + t.cutting_point + t.variance));
}

TEST_CASE("complexity terms") {
  const std::vector<double> gammas{0.2, 0.2};
  const auto k = complexity_terms(1.5, 4, 2, 2, gammas);
  CHECK(k.eta == doctest::Approx(std::sqrt(4.0 / 4.0)));
  CHECK(k.initialization == doctest::Approx(1.0 / std::sqrt(16.0)));
  CHECK(k.variance == doctest::Approx(1.5 / 4.0));
  CHECK(k.drift == doctest::Approx(4.0 * 1.0 * 1.5 / 4.0));
  CHECK(k.cutting_point == doctest::Approx(4.0 / 2.0 * 0.4));
}

TEST_CASE("quadratic trace follows the closed form") {
  const Quadratic task(1.0, 2);
  const auto trace = trace_quadratic(task, {1.0, -2.0}, 0.1, 2, 3);
  REQUIRE(trace.size() == 3);
  // Each round multiplies w by (1 - eta lambda)^tau.
  const double f0 = 0.5 * 5.0;
  const double shrink = std::pow(0.9, 4);
  CHECK(trace[0].loss_before == doctest::Approx(f0));
  CHECK(trace[0].loss_after == doctest::Approx(f0 * shrink));
  CHECK(trace[2].loss_after == doctest::Approx(f0 * std::pow(shrink, 3)));
  CHECK(trace[0].grad_norm2 == doctest::Approx(5.0));
  CHECK(trace[0].gamma == 0.0);
}

TEST_CASE("identical client data leaves no gradient gap") {
  const auto d = test::random_dataset(24, 4, 3, 5);
  const NetworkTask same(nn::NetworkSpec::linear({4, 4, 3}), {d, d});
  const auto init = nn::init_params(same.spec(), 2);
  CHECK(measure_gamma(same, {1, 2, 0.05, 8, 3}, init, 9) == 0.0);
  const NetworkTask diff(nn::NetworkSpec::linear({4, 4, 3}), {d, test::random_dataset(24, 4, 3, 6)});
  CHECK(measure_gamma(diff, {1, 2, 0.05, 8, 3}, init, 9) > 0.0);
}

TEST_CASE("network task gradient matches finite differences") {
  const NetworkTask task(nn::NetworkSpec::classifier({3, 4, 2}),
                         {test::random_dataset(10, 3, 2, 1), test::random_dataset(30, 3, 2, 2)});
  const auto init = nn::init_params(task.spec(), 3);
  std::vector<double> w(init.values().begin(), init.values().end());
  const auto g = task.gradient(w);
  for (std::size_t i = 0; i < w.size(); ++i) {
    auto up = w;
    auto down = w;
    up[i] += 1e-6;
    down[i] -= 1e-6;
    CHECK(g[i] == doctest::Approx((task.loss(up) - task.loss(down)) / 2e-6).epsilon(1e-5));
  }
  CHECK(task.rho()[0] == doctest::Approx(0.25));
}

TEST_CASE("deterministic lemma check flags an impossible improvement") {
  TheoryConstants c;
  c.L = 1.0;
  c.eta = 0.1;
  c.tau = 1;
  c.rho = {1.0};
  Trace bad{{1.0, 2.0, 1.0, 0.0}};  // loss went up
  const Trace seeds[] = {bad};
  CHECK(lemma1_check(c, seeds, true).violations == 1);
}

TEST_CASE("best-loss surrogate never exceeds the start") {
  const Quadratic task(1.0, 2);
  CHECK(best_loss_surrogate(task, {1.0, 1.0}, 0.5, 50) < 1e-10);
}

}
