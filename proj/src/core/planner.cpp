#include "sflga/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sflga/blob.hpp"
#include "sflga/error.hpp"

namespace sflga::planner {

double gamma_of_cut(const GammaModel& model, const nn::NetworkSpec& spec, int v) {
  require(v >= 1 && v <= spec.layers() - 1, "cut outside 1..V-1");
  if (!model.table.empty()) {
    require(model.table.size() == static_cast<std::size_t>(spec.layers() - 1),
            "gamma table needs one entry per cut");
    return model.table[static_cast<std::size_t>(v - 1)];
  }
  require(model.kappa >= 0.0, "gamma scale must be non-negative");
  const double phi = static_cast<double>(nn::param_count(spec, 1, v));
  const double q = static_cast<double>(nn::param_count(spec, 1, spec.layers()));
  return model.kappa * phi / q;
}

double reward(double gamma, double chi, double psi, bool privacy_feasible,
              double weight, double penalty) {
  if (!privacy_feasible) return -penalty;
  require(chi >= 0.0 && psi >= 0.0, "latencies must be non-negative");
  return -(weight * gamma + chi + psi);
}

// ---------------------------------------------------------------------------
// Replay

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  require(capacity > 0, "replay capacity must be positive");
  items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(Transition t) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
    return;
  }
  items_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  require(i < items_.size(), "replay index out of range");
  return items_[(head_ + i) % items_.size()];
}

std::vector<Transition> ReplayBuffer::sample(Rng& rng, std::size_t count) const {
  require(!items_.empty(), "cannot sample an empty replay buffer");
  std::vector<Transition> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(items_[uniform_index(rng, items_.size())]);
  return out;
}

// ---------------------------------------------------------------------------
// Q-function

std::vector<double> QFunction::values(std::span<const double> state, bool use_target) const {
  nn::Matrix x(1, state.size());
  std::copy(state.begin(), state.end(), x.data.begin());
  auto out = nn::forward_partial(use_target ? target : online, x).outputs;
  return out.data;
}

QFunction make_qfunction(std::size_t state_dim, int actions, const DdqnConfig& config,
                         std::uint64_t seed) {
  require(actions >= 1, "need at least one action");
  std::vector<std::size_t> dims{state_dim};
  dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
  dims.push_back(static_cast<std::size_t>(actions));
  QFunction q;
  q.spec = nn::NetworkSpec::classifier(dims);
  q.online = nn::init_params(q.spec, seed);
  q.target = q.online;
  q.discount = config.discount;
  q.target_period = config.target_period;
  return q;
}

int greedy_action(std::span<const double> values) {
  require(!values.empty(), "no action values");
  std::size_t best = 0;
  for (std::size_t a = 1; a < values.size(); ++a) {
    if (values[a] > values[best]) best = a;
  }
  return static_cast<int>(best) + 1;
}

int act(const QFunction& q, std::span<const double> state, double explore_rate, Rng& rng) {
  require(explore_rate >= 0.0 && explore_rate <= 1.0, "explore rate outside [0, 1]");
  // Draw the coin on every call so the stream position does not depend on Q.
  const double coin = uniform01(rng);
  const auto pick = uniform_index(rng, static_cast<std::uint64_t>(q.actions()));
  if (coin < explore_rate) return static_cast<int>(pick) + 1;
  return greedy_action(q.values(state));
}

namespace {

nn::Matrix stack(std::span<const Transition> batch, bool next) {
  const std::size_t dim = next ? batch[0].next_state.size() : batch[0].state.size();
  nn::Matrix m(batch.size(), dim);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& s = next ? batch[i].next_state : batch[i].state;
    require(s.size() == dim, "transition states differ in size");
    std::copy(s.begin(), s.end(), m.data.begin() + static_cast<std::ptrdiff_t>(i * dim));
  }
  return m;
}

}  // namespace

std::vector<double> ddqn_targets(const QFunction& q, std::span<const Transition> batch) {
  require(!batch.empty(), "empty transition batch");
  std::vector<double> y(batch.size());
  const nn::Matrix next = stack(batch, true);
  const auto online_next = nn::forward_partial(q.online, next).outputs;
  const auto target_next = nn::forward_partial(q.target, next).outputs;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    y[i] = batch[i].reward;
    if (batch[i].terminal || q.discount == 0.0) continue;
    const int a = greedy_action(online_next.row(i));
    y[i] += q.discount * target_next(i, static_cast<std::size_t>(a - 1));
  }
  return y;
}

TrainStep train_on(QFunction& q, std::span<const Transition> batch, double learning_rate,
                   double grad_clip) {
  require(!batch.empty(), "empty transition batch");
  const auto y = ddqn_targets(q, batch);
  auto fwd = nn::forward_partial(q.online, stack(batch, false));
  nn::Matrix upstream(batch.size(), fwd.outputs.cols);
  const double scale = 1.0 / static_cast<double>(batch.size());
  TrainStep step;
  step.performed = true;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const int a = batch[i].action;
    require(a >= 1 && a <= q.actions(), "transition action out of range");
    const auto col = static_cast<std::size_t>(a - 1);
    const double err = fwd.outputs(i, col) - y[i];
    step.loss += err * err * scale;
    upstream(i, col) = 2.0 * err * scale;
  }
  auto back = nn::backward_partial(q.online, fwd.cache, upstream);
  step.grad_norm = std::sqrt(nn::squared_norm(back.grads.values()));
  if (grad_clip > 0.0 && step.grad_norm > grad_clip) {
    const double shrink = grad_clip / step.grad_norm;
    for (double& g : back.grads.values()) g *= shrink;
  }
  q.online = nn::sgd_step(q.online, back.grads, learning_rate);
  ++q.steps;
  if (q.target_period > 0 && q.steps % static_cast<std::uint64_t>(q.target_period) == 0) {
    q.target = q.online;
  }
  return step;
}

TrainStep train_step(QFunction& q, const ReplayBuffer& replay, std::size_t minibatch,
                     double learning_rate, Rng& rng, double grad_clip) {
  if (minibatch == 0 || replay.size() < minibatch) return {};
  const auto batch = replay.sample(rng, minibatch);
  return train_on(q, batch, learning_rate, grad_clip);
}

double explore_rate(const DdqnConfig& config, int episode, int episodes) {
  const double span = config.explore_fraction * static_cast<double>(episodes);
  if (span <= 0.0) return config.explore_end;
  const double progress = std::min(1.0, static_cast<double>(episode) / span);
  return config.explore_start + (config.explore_end - config.explore_start) * progress;
}

// ---------------------------------------------------------------------------
// Environment

RoundCost price_cut(const Scenario& scenario, const wireless::ChannelState& channel, int v,
                    double penalty) {
  RoundCost rc;
  rc.gamma = gamma_of_cut(scenario.gamma, scenario.spec, v);
  if (!wireless::privacy_ok(scenario.spec, v, scenario.epsilon)) {
    rc.cost = penalty;
    rc.reward = reward(rc.gamma, 0.0, 0.0, false, scenario.weight, penalty);
    return rc;
  }
  try {
    const auto problem = solver::make_problem(scenario.profiles, scenario.system, channel,
                                              scenario.spec, v, scenario.wire, scenario.workload,
                                              scenario.basis, scenario.batch_size);
    rc.allocation = solver::solve_allocation(problem, scenario.tolerances);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::InfeasibleProblem) throw;
    rc.cost = penalty;
    rc.reward = -penalty;
    return rc;
  }
  rc.feasible = true;
  rc.chi = rc.allocation.chi;
  rc.psi = rc.allocation.psi;
  rc.cost = scenario.weight * rc.gamma + rc.chi + rc.psi;
  rc.reward = reward(rc.gamma, rc.chi, rc.psi, true, scenario.weight, penalty);
  return rc;
}

wireless::ChannelState episode_channel(const Scenario& scenario, int episode, int round,
                                       bool evaluation) {
  const Stream stream = evaluation ? Stream::Policy : Stream::Channel;
  const std::uint64_t per_episode =
      derive_seed(scenario.seed, stream, static_cast<std::uint64_t>(episode));
  return wireless::sample_channel(
      scenario.profiles,
      derive_seed(per_episode, Stream::Channel, static_cast<std::uint64_t>(round)));
}

Normalizer calibrate(const Scenario& scenario, double penalty, int draws) {
  require(draws >= 2, "calibration needs at least two draws");
  const std::size_t n = scenario.profiles.size();
  Normalizer norm;
  norm.log_gain_mean.assign(n, 0.0);
  norm.log_gain_std.assign(n, 0.0);
  std::vector<wireless::ChannelState> channels;
  for (int i = 0; i < draws; ++i) {
    channels.push_back(wireless::sample_channel(
        scenario.profiles,
        derive_seed(scenario.seed, Stream::Calibration, static_cast<std::uint64_t>(i))));
  }
  for (const auto& c : channels) {
    for (std::size_t k = 0; k < n; ++k) norm.log_gain_mean[k] += std::log10(c.gains[k]);
  }
  for (double& m : norm.log_gain_mean) m /= draws;
  for (const auto& c : channels) {
    for (std::size_t k = 0; k < n; ++k) {
      const double d = std::log10(c.gains[k]) - norm.log_gain_mean[k];
      norm.log_gain_std[k] += d * d;
    }
  }
  for (double& s : norm.log_gain_std) {
    s = std::sqrt(s / (draws - 1));
    if (!(s > 0.0)) s = 1.0;
  }
  // Typical feasible round cost, averaged over cuts and a few draws.
  double total = 0.0;
  int count = 0;
  const int priced = std::min(draws, 4);
  for (int i = 0; i < priced; ++i) {
    for (int v = 1; v <= scenario.actions(); ++v) {
      const auto rc = price_cut(scenario, channels[static_cast<std::size_t>(i)], v, penalty);
      if (!rc.feasible) continue;
      norm.max_cost = std::max(norm.max_cost, rc.cost);
      total += rc.cost;
      ++count;
    }
  }
  if (count > 0 && total > 0.0) norm.cost_scale = total / count;
  return norm;
}

std::vector<double> observe(const Normalizer& norm, const wireless::ChannelState& channel,
                            double cumulative_cost, int round, int horizon) {
  std::vector<double> s;
  s.reserve(channel.gains.size() + 2);
  for (std::size_t k = 0; k < channel.gains.size(); ++k) {
    s.push_back((std::log10(channel.gains[k]) - norm.log_gain_mean[k]) / norm.log_gain_std[k]);
  }
  // Mean cost so far, in units of a typical round, log-compressed so that a
  // penalty round does not swamp the gain features.
  const double mean_cost = round > 0 ? cumulative_cost / round : 0.0;
  s.push_back(std::log1p(mean_cost / norm.cost_scale));
  s.push_back(horizon > 0 ? static_cast<double>(round) / horizon : 0.0);
  return s;
}

PlanResult run_algorithm1(const Scenario& scenario, const DdqnConfig& config, int episodes,
                          int rounds_per_episode) {
  require(episodes >= 1 && rounds_per_episode >= 1, "need at least one episode and round");
  require(scenario.actions() >= 1, "network has no cut");
  PlanResult result;
  result.normalizer = calibrate(scenario, config.penalty);
  if (config.penalty < 10.0 * result.normalizer.max_cost) {
    fail(ErrorCode::InvalidArgument,
         "penalty " + std::to_string(config.penalty) +
             " must be at least 10x the largest feasible round cost " +
             std::to_string(result.normalizer.max_cost));
  }
  result.policy = make_qfunction(scenario.state_dim(), scenario.actions(), config,
                                 derive_seed(scenario.seed, Stream::Init, 0x9));
  ReplayBuffer replay(config.replay_capacity);
  Rng explore = make_rng(scenario.seed, Stream::Explore);
  Rng sampler = make_rng(scenario.seed, Stream::Replay);
  const Normalizer& norm = result.normalizer;

  for (int e = 0; e < episodes; ++e) {
    const double eps = explore_rate(config, e, episodes);
    auto channel = episode_channel(scenario, e, 0, false);
    double cumulative = 0.0;
    double total = 0.0;
    auto state = observe(norm, channel, cumulative, 0, rounds_per_episode);
    for (int t = 0; t < rounds_per_episode; ++t) {
      const int a = act(result.policy, state, eps, explore);
      const auto rc = price_cut(scenario, channel, a, config.penalty);
      cumulative += rc.cost;
      total += rc.reward;
      auto next_channel = episode_channel(scenario, e, t + 1, false);
      auto next_state = observe(norm, next_channel, cumulative, t + 1, rounds_per_episode);
      replay.push({state, a, rc.reward, next_state, t + 1 == rounds_per_episode});
      train_step(result.policy, replay, config.minibatch, config.learning_rate, sampler,
                 config.grad_clip);
      result.rows.push_back({e, t, a, rc.chi, rc.psi, rc.gamma, rc.reward, eps, rc.feasible});
      state = std::move(next_state);
      channel = std::move(next_channel);
    }
    result.episode_rewards.push_back(total);
  }
  return result;
}

EvaluationResult evaluate_policy(const Scenario& scenario, const PlanResult& plan, int rounds,
                                 int rounds_per_episode, double penalty) {
  require(rounds >= 0 && rounds_per_episode >= 1, "invalid evaluation length");
  EvaluationResult out;
  for (int e = 0; static_cast<int>(out.cuts.size()) < rounds; ++e) {
    auto channel = episode_channel(scenario, e, 0, true);
    double cumulative = 0.0;
    for (int t = 0; t < rounds_per_episode && static_cast<int>(out.cuts.size()) < rounds; ++t) {
      const auto state = observe(plan.normalizer, channel, cumulative, t, rounds_per_episode);
      const int a = greedy_action(plan.policy.values(state));
      const auto rc = price_cut(scenario, channel, a, penalty);
      cumulative += rc.cost;
      out.cuts.push_back(a);
      out.rewards.push_back(rc.reward);
      channel = episode_channel(scenario, e, t + 1, true);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const QFunction& q, const std::string& path) {
  blob::Blob b;
  b.kind = "qfunction";
  std::vector<std::string> acts;
  for (auto a : q.spec.activations) acts.push_back(a == nn::Activation::Relu ? "relu" : "identity");
  b.header = {{"dims", q.spec.layer_dims},
              {"activations", acts},
              {"steps", q.steps},
              {"discount", q.discount},
              {"target_period", q.target_period}};
  const auto on = q.online.values();
  const auto tg = q.target.values();
  b.payload.assign(on.begin(), on.end());
  b.payload.insert(b.payload.end(), tg.begin(), tg.end());
  blob::write(path, b);
}

QFunction load_checkpoint(const std::string& path) {
  const blob::Blob b = blob::read(path);
  if (b.kind != "qfunction") fail(ErrorCode::Parse, "'" + path + "' is not a Q-function checkpoint");
  QFunction q;
  try {
    q.spec.layer_dims = b.header.at("dims").get<std::vector<std::size_t>>();
    for (const auto& a : b.header.at("activations")) {
      q.spec.activations.push_back(a.get<std::string>() == "relu" ? nn::Activation::Relu
                                                                  : nn::Activation::Identity);
    }
    q.steps = b.header.at("steps").get<std::uint64_t>();
    q.discount = b.header.at("discount").get<double>();
    q.target_period = b.header.at("target_period").get<int>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, std::string("checkpoint header: ") + e.what());
  }
  q.spec.validate();
  q.online = nn::ParamBlock(q.spec, 1, q.spec.layers());
  q.target = q.online;
  if (b.payload.size() != 2 * q.online.size()) {
    fail(ErrorCode::Parse, "checkpoint payload does not match its network dims");
  }
  const auto half = static_cast<std::ptrdiff_t>(q.online.size());
  std::copy(b.payload.begin(), b.payload.begin() + half, q.online.values().begin());
  std::copy(b.payload.begin() + half, b.payload.end(), q.target.values().begin());
  return q;
}

}  // namespace sflga::planner
