#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "sflga/blob.hpp"
#include "sflga/error.hpp"
#include "sflga/planner.hpp"

using namespace sflga;
using namespace sflga::planner;

namespace {

Transition make(double tag, int action, double r, bool terminal) {
  return {{tag, 0.5, -0.5}, action, r, {tag + 1.0, -0.25, 0.75}, terminal};
}

// Hand-rolled forward pass of the Q network for the target oracle.
std::vector<double> q_values(const nn::ParamBlock& p, std::span<const double> x0) {
  std::vector<double> x(x0.begin(), x0.end());
  for (int l = p.first_layer(); l <= p.last_layer(); ++l) {
    const auto w = p.weights(l);
    const auto b = p.bias(l);
    std::vector<double> z(p.out_dim(l));
    for (std::size_t j = 0; j < z.size(); ++j) {
      z[j] = b[j];
      for (std::size_t i = 0; i < x.size(); ++i) z[j] += x[i] * w[i * z.size() + j];
      if (p.activation(l) == nn::Activation::Relu) z[j] = std::max(0.0, z[j]);
    }
    x = std::move(z);
  }
  return x;
}

}  // namespace

TEST_SUITE("planner") {

TEST_CASE("analytic gap model scales with the client share") {
  const auto spec = nn::NetworkSpec::classifier({10, 10, 10});
  CHECK(gamma_of_cut({2.0, {}}, spec, 1) == doctest::Approx(2.0 * 110.0 / 220.0));
  CHECK(gamma_of_cut({1.0, {0.7}}, spec, 1) == 0.7);
  CHECK_THROWS_AS(gamma_of_cut({1.0, {0.7, 0.8}}, spec, 1), Error);
}

TEST_CASE("reward is the negated weighted cost or the penalty") {
  CHECK(reward(0.5, 1.0, 2.0, true, 4.0, 1000.0) == -5.0);
  CHECK(reward(0.5, 1.0, 2.0, false, 4.0, 1000.0) == -1000.0);
}

TEST_CASE("replay ring overwrites the oldest entry") {
  ReplayBuffer buf(3);
  for (int i = 0; i < 5; ++i) buf.push(make(i, 1, i, false));
  CHECK(buf.size() == 3);
  CHECK(buf.at(0).reward == 2.0);
  CHECK(buf.at(1).reward == 3.0);
  CHECK(buf.at(2).reward == 4.0);
  Rng rng(1);
  for (const auto& t : buf.sample(rng, 50)) CHECK(t.reward >= 2.0);
}

TEST_CASE("exploration anneals linearly then holds") {
  DdqnConfig cfg;
  CHECK(explore_rate(cfg, 0, 100) == 1.0);
  CHECK(explore_rate(cfg, 30, 100) == doctest::Approx(1.0 - 0.95 * 0.5));
  CHECK(explore_rate(cfg, 60, 100) == doctest::Approx(0.05));
  CHECK(explore_rate(cfg, 99, 100) == doctest::Approx(0.05));
}

TEST_CASE("greedy ties go to the lowest cut") {
  const std::vector<double> v{1.0, 3.0, 3.0};
  CHECK(greedy_action(v) == 2);
}

TEST_CASE("double-Q targets pick with the online net and score with the target") {
  DdqnConfig cfg;
  cfg.hidden = {5};
  auto q = make_qfunction(3, 3, cfg, 11);
  // Make the target net differ from the online one.
  for (double& w : q.target.values()) w *= 0.5;
  const std::vector<Transition> batch{make(0.1, 1, 2.0, false), make(0.3, 2, -1.0, true)};
  const auto y = ddqn_targets(q, batch);
  const auto online = q_values(q.online, batch[0].next_state);
  const auto target = q_values(q.target, batch[0].next_state);
  const auto best = std::max_element(online.begin(), online.end()) - online.begin();
  CHECK(y[0] == doctest::Approx(2.0 + 0.95 * target[static_cast<std::size_t>(best)]));
  CHECK(y[1] == -1.0);
}

TEST_CASE("training reduces TD error on a fixed batch and syncs the target") {
  DdqnConfig cfg;
  cfg.hidden = {8};
  cfg.target_period = 5;
  auto q = make_qfunction(3, 2, cfg, 3);
  const std::vector<Transition> batch{make(0.1, 1, 1.0, true), make(0.4, 2, -1.0, true)};
  const double first = train_on(q, batch, 0.05).loss;
  double last = first;
  for (int i = 0; i < 200; ++i) last = train_on(q, batch, 0.05).loss;
  CHECK(last < 0.1 * first);
  CHECK(q.steps == 201);
  // 201 steps with period 5: the last sync was at step 200.
  auto synced = q;
  train_on(synced, batch, 0.05);
  train_on(synced, batch, 0.05);
  train_on(synced, batch, 0.05);
  train_on(synced, batch, 0.05);
  CHECK(synced.target == synced.online);
}

TEST_CASE("gradient clipping caps the update norm") {
  DdqnConfig cfg;
  cfg.hidden = {4};
  auto a = make_qfunction(3, 2, cfg, 5);
  const auto before = a.online;
  const std::vector<Transition> batch{make(1.0, 1, 500.0, true)};
  const auto s = train_on(a, batch, 0.01, 1.0);
  CHECK(s.grad_norm > 1.0);
  double moved = 0.0;
  for (std::size_t i = 0; i < a.online.size(); ++i) {
    const double d = a.online.values()[i] - before.values()[i];
    moved += d * d;
  }
  CHECK(std::sqrt(moved) == doctest::Approx(0.01).epsilon(1e-9));
}

TEST_CASE("train_step waits for a full minibatch") {
  DdqnConfig cfg;
  auto q = make_qfunction(3, 2, cfg, 1);
  ReplayBuffer buf(100);
  buf.push(make(0.0, 1, 0.0, true));
  Rng rng(1);
  CHECK_FALSE(train_step(q, buf, 4, 1e-3, rng).performed);
  for (int i = 0; i < 4; ++i) buf.push(make(i, 2, 1.0, true));
  CHECK(train_step(q, buf, 4, 1e-3, rng).performed);
}

TEST_CASE("checkpoints round-trip and reject other blobs") {
  DdqnConfig cfg;
  auto q = make_qfunction(4, 3, cfg, 9);
  q.steps = 17;
  const auto path = (std::filesystem::temp_directory_path() / "sflga_q.blob").string();
  save_checkpoint(q, path);
  const auto r = load_checkpoint(path);
  CHECK(r.online == q.online);
  CHECK(r.target == q.target);
  CHECK(r.steps == 17);
  CHECK(r.discount == q.discount);
  blob::write(path, {"other", nlohmann::json::object(), {}});
  CHECK_THROWS_AS(load_checkpoint(path), Error);
  std::remove(path.c_str());
}

TEST_CASE("observations are normalized gains, cost and time") {
  Normalizer norm;
  norm.log_gain_mean = {-10.0, -11.0};
  norm.log_gain_std = {1.0, 2.0};
  norm.cost_scale = 2.0;
  const auto obs = observe(norm, {{1e-10, 1e-10}}, 8.0, 4, 10);
  REQUIRE(obs.size() == 4);
  CHECK(obs[0] == doctest::Approx(0.0));
  CHECK(obs[1] == doctest::Approx(0.5));
  CHECK(obs[2] == doctest::Approx(std::log1p((8.0 / 4.0) / 2.0)));
  CHECK(obs[3] == doctest::Approx(0.4));
}

TEST_CASE("cuts below the privacy floor are priced at the penalty") {
  Scenario s;
  s.spec = nn::NetworkSpec::classifier({10, 10, 10});
  s.profiles = {{100, 0.1e9, 0.3, 0.2}};
  s.system = {20e6, wireless::dbm_to_watts(-174.0), 2.0, 100e9};
  s.epsilon = 0.5;
  const wireless::ChannelState ch{{1e-10}};
  const auto rc = price_cut(s, ch, 1, 1000.0);
  CHECK_FALSE(rc.feasible);
  CHECK(rc.reward == -1000.0);
}

}
