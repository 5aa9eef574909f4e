#include "sflga/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "sflga/error.hpp"
#include "sflga/protocol.hpp"

namespace sflga::theory {

namespace {

double distance2(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void axpy(std::vector<double>& y, double a, std::span<const double> x) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

}  // namespace

// ---------------------------------------------------------------------------
// Objectives

Quadratic::Quadratic(double lambda, std::size_t dim) : lambda_(lambda), dim_(dim) {
  require(lambda >= 0.0, "curvature must be non-negative");
  require(dim > 0, "dimension must be positive");
}

double Quadratic::loss(std::span<const double> w) const {
  return 0.5 * lambda_ * nn::squared_norm(w);
}

std::vector<double> Quadratic::gradient(std::span<const double> w) const {
  std::vector<double> g(w.begin(), w.end());
  for (double& x : g) x *= lambda_;
  return g;
}

std::vector<double> Quadratic::client_gradient(std::span<const double> w, std::size_t) const {
  return gradient(w);
}

std::vector<double> Quadratic::minibatch_gradient(std::span<const double> w, std::size_t,
                                                  std::size_t, Rng&) const {
  return gradient(w);
}

NetworkTask::NetworkTask(nn::NetworkSpec spec, std::vector<data::Dataset> client_data)
    : spec_(std::move(spec)), data_(std::move(client_data)) {
  spec_.validate();
  require(!data_.empty(), "task needs at least one client");
  std::vector<double> sizes;
  for (const auto& d : data_) {
    require(d.size() > 0, "every client needs data");
    require(d.inputs.cols == spec_.input_dim(), "client data width does not match network");
    sizes.push_back(static_cast<double>(d.size()));
  }
  rho_ = protocol::weights_from_sizes(sizes);
}

std::size_t NetworkTask::dim() const { return nn::param_count(spec_, 1, spec_.layers()); }

nn::ParamBlock NetworkTask::params(std::span<const double> w) const {
  nn::ParamBlock p(spec_, 1, spec_.layers());
  require(w.size() == p.size(), "parameter vector length mismatch");
  std::copy(w.begin(), w.end(), p.values().begin());
  return p;
}

double NetworkTask::loss(std::span<const double> w) const {
  const auto p = params(w);
  double total = 0.0;
  for (std::size_t n = 0; n < data_.size(); ++n) {
    const auto out = nn::forward_partial(p, data_[n].inputs).outputs;
    total += rho_[n] * nn::loss_and_grad_head(out, data_[n].labels).loss;
  }
  return total;
}

std::vector<double> NetworkTask::client_gradient(std::span<const double> w,
                                                 std::size_t client) const {
  require(client < data_.size(), "client index out of range");
  const auto g = nn::full_loss_and_grad(params(w), data_[client].all()).grads;
  return {g.values().begin(), g.values().end()};
}

std::vector<double> NetworkTask::gradient(std::span<const double> w) const {
  std::vector<double> total(w.size(), 0.0);
  for (std::size_t n = 0; n < data_.size(); ++n) axpy(total, rho_[n], client_gradient(w, n));
  return total;
}

std::vector<double> NetworkTask::minibatch_gradient(std::span<const double> w,
                                                    std::size_t client, std::size_t batch,
                                                    Rng& rng) const {
  require(client < data_.size(), "client index out of range");
  const auto idx = sample_indices(rng, data_[client].size(), batch);
  const auto g = nn::full_loss_and_grad(params(w), data_[client].take(idx)).grads;
  return {g.values().begin(), g.values().end()};
}

std::vector<std::size_t> sample_indices(Rng& rng, std::size_t n, std::size_t batch) {
  require(batch >= 1 && batch <= n, "batch must be within 1..dataset size");
  auto order = data::permutation(rng, n);
  order.resize(batch);
  std::sort(order.begin(), order.end());
  return order;
}

// ---------------------------------------------------------------------------
// Constants

double estimate_L(const Objective& task, int samples, std::span<const double> center,
                  double radius, std::uint64_t seed) {
  require(samples >= 2, "need at least two sample points");
  require(center.size() == task.dim(), "center has the wrong dimension");
  Rng rng(seed);
  std::vector<std::vector<double>> points;
  std::vector<std::vector<double>> grads;
  double best = 0.0;
  for (int s = 0; s < samples; ++s) {
    std::vector<double> w(center.begin(), center.end());
    for (double& x : w) x += radius * (2.0 * uniform01(rng) - 1.0);
    auto g = task.gradient(w);
    for (std::size_t j = 0; j < points.size(); ++j) {
      const double dw = distance2(w, points[j]);
      if (dw <= 0.0) continue;
      best = std::max(best, std::sqrt(distance2(g, grads[j]) / dw));
    }
    points.push_back(std::move(w));
    grads.push_back(std::move(g));
  }
  return best;
}

double estimate_sigma2(const Objective& task, int batches, std::span<const double> w,
                       std::size_t batch_size, std::uint64_t seed) {
  require(batches >= 2, "need at least two batches");
  double worst = 0.0;
  for (std::size_t n = 0; n < task.clients(); ++n) {
    Rng rng = make_rng(seed, Stream::Theory, n);
    const auto full = task.client_gradient(w, n);
    double acc = 0.0;
    for (int b = 0; b < batches; ++b) {
      acc += distance2(task.minibatch_gradient(w, n, batch_size, rng), full);
    }
    worst = std::max(worst, acc / batches);
  }
  return worst;
}

bool stepsize_ok(double L, double eta, int tau) {
  require(L >= 0.0 && eta >= 0.0 && tau >= 1, "constants must be non-negative");
  const double t = static_cast<double>(tau);
  return 2.0 * L * L * eta * eta * t * (t - 1.0) <= 0.2;
}

double sum_rho_squared(std::span<const double> rho) {
  double s = 0.0;
  for (double r : rho) s += r * r;
  return s;
}

double lemma1_rhs(const TheoryConstants& c, double grad_norm2, double gamma) {
  const double tau = static_cast<double>(c.tau);
  const double et = c.eta * tau;
  return -et / 4.0 * grad_norm2 + et * gamma +
         c.L * c.eta * c.eta * tau * c.sigma2 * sum_rho_squared(c.rho) +
         1.25 * c.L * c.L * c.eta * c.eta * c.eta * c.sigma2 * tau * (tau - 1.0);
}

Theorem1Terms theorem1_rhs(const TheoryConstants& c, int T, double f_start, double f_star,
                           std::span<const double> gammas) {
  require(T >= 1, "need at least one round");
  require(c.eta > 0.0, "learning rate must be positive");
  const double tau = static_cast<double>(c.tau);
  const double t = static_cast<double>(T);
  Theorem1Terms r;
  r.initialization = 4.0 * (f_start - f_star) / (c.eta * tau * t);
  r.cutting_point = 4.0 / t * std::accumulate(gammas.begin(), gammas.end(), 0.0);
  r.variance = 4.0 * c.L * c.eta * c.sigma2 * sum_rho_squared(c.rho) +
               5.0 * c.L * c.L * c.eta * c.eta * c.sigma2 * (tau - 1.0);
  r.total = r.initialization + r.cutting_point + r.variance;
  return r;
}

ComplexityTerms complexity_terms(double sigma2, int clients, int tau, int T,
                                 std::span<const double> gammas) {
  require(clients >= 1 && tau >= 1 && T >= 1, "counts must be positive");
  const double n = clients;
  const double k = tau;
  const double t = T;
  ComplexityTerms c;
  c.eta = std::sqrt(n / (k * t));
  c.initialization = 1.0 / std::sqrt(k * n * t);
  c.variance = sigma2 / std::sqrt(k * n * t);
  c.drift = n * (k - 1.0) * sigma2 / (k * t);
  c.cutting_point = 4.0 / t * std::accumulate(gammas.begin(), gammas.end(), 0.0);
  return c;
}

// ---------------------------------------------------------------------------
// Runs

Trace trace_quadratic(const Quadratic& task, std::vector<double> w0, double eta, int tau,
                      int rounds) {
  require(w0.size() == task.dim(), "start point has the wrong dimension");
  Trace trace;
  std::vector<double> w = std::move(w0);
  for (int r = 0; r < rounds; ++r) {
    RoundRecord rec;
    rec.loss_before = task.loss(w);
    rec.grad_norm2 = nn::squared_norm(task.gradient(w));
    for (int i = 0; i < tau; ++i) axpy(w, -eta, task.gradient(w));
    rec.loss_after = task.loss(w);
    trace.push_back(rec);
  }
  return trace;
}

namespace {

std::vector<double> flatten(const protocol::FederationState& s) {
  const auto full = protocol::client_full_model(s, 0);
  return {full.values().begin(), full.values().end()};
}

protocol::EpochBatches round_batches(const NetworkTask& task, const SplitRun& run,
                                     std::uint64_t seed, int round) {
  // Every client restarts the same stream, so clients holding identical data
  // also draw identical batches.
  protocol::EpochBatches batches(task.clients());
  for (std::size_t n = 0; n < task.clients(); ++n) {
    Rng rng = make_rng(seed, Stream::Batches, static_cast<std::uint64_t>(round));
    const auto& d = task.client_data(n);
    for (int e = 0; e < run.tau; ++e) {
      batches[n].push_back(d.take(sample_indices(rng, d.size(), run.batch)));
    }
  }
  return batches;
}

}  // namespace

Trace trace_sflga(const NetworkTask& task, const SplitRun& run, const nn::ParamBlock& init,
                  std::uint64_t seed) {
  auto state = protocol::make_state(task.spec(), init, run.cut, run.tau, run.eta,
                                    {task.rho().begin(), task.rho().end()});
  protocol::RoundOptions options;
  options.track_gradient_gap = true;
  Trace trace;
  for (int r = 0; r < run.rounds; ++r) {
    const auto w = flatten(state);
    RoundRecord rec;
    rec.loss_before = task.loss(w);
    rec.grad_norm2 = nn::squared_norm(task.gradient(w));

    const auto batches = round_batches(task, run, seed, r);
    auto result = protocol::run_round_sflga(state, batches, options);
    state = std::move(result.state);
    rec.loss_after = task.loss(flatten(state));
    const auto& gap = result.metrics.gradient_gap;
    rec.gamma = gap.empty() ? 0.0 : *std::max_element(gap.begin(), gap.end());
    trace.push_back(rec);
  }
  return trace;
}

double measure_gamma(const NetworkTask& task, const SplitRun& run, const nn::ParamBlock& init,
                     std::uint64_t seed) {
  auto state = protocol::make_state(task.spec(), init, run.cut, run.tau, run.eta,
                                    {task.rho().begin(), task.rho().end()});
  protocol::RoundOptions options;
  options.track_gradient_gap = true;
  double total = 0.0;
  std::size_t count = 0;
  for (int r = 0; r < run.rounds; ++r) {
    const auto batches = round_batches(task, run, seed, r);
    auto result = protocol::run_round_sflga(state, batches, options);
    for (double g : result.metrics.gradient_gap) {
      total += g;
      ++count;
    }
    state = std::move(result.state);
  }
  return count > 0 ? total / static_cast<double>(count) : 0.0;
}

// ---------------------------------------------------------------------------
// Checks

Lemma1Report lemma1_check(const TheoryConstants& c, std::span<const Trace> seeds,
                          bool deterministic) {
  require(!seeds.empty(), "need at least one trace");
  const std::size_t rounds = seeds.front().size();
  for (const auto& t : seeds) require(t.size() == rounds, "traces differ in length");
  const double k = static_cast<double>(seeds.size());
  Lemma1Report rep;
  rep.rounds = static_cast<int>(rounds);
  rep.max_excess = -std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < rounds; ++r) {
    double emp = 0.0;
    double bound = 0.0;
    std::vector<double> diff;
    for (const auto& t : seeds) {
      const auto& rec = t[r];
      const double e = rec.loss_after - rec.loss_before;
      const double b = lemma1_rhs(c, rec.grad_norm2, rec.gamma);
      emp += e;
      bound += b;
      diff.push_back(e - b);
    }
    emp /= k;
    bound /= k;
    rep.empirical.push_back(emp);
    rep.bound.push_back(bound);
    double excess = emp - bound;
    if (deterministic) {
      excess -= 1e-9;
    } else if (seeds.size() > 1) {
      const double mean = std::accumulate(diff.begin(), diff.end(), 0.0) / k;
      double var = 0.0;
      for (double d : diff) var += (d - mean) * (d - mean);
      var /= (k - 1.0);
      excess = mean - 3.0 * std::sqrt(var / k);
    }
    rep.max_excess = std::max(rep.max_excess, excess);
    if (excess > 0.0) ++rep.violations;
  }
  return rep;
}

Theorem1Report theorem1_check(const TheoryConstants& c, std::span<const Trace> seeds,
                              double f_star) {
  Theorem1Report rep;
  for (const auto& t : seeds) {
    require(!t.empty(), "empty trace");
    double mean = 0.0;
    std::vector<double> gammas;
    for (const auto& rec : t) {
      mean += rec.grad_norm2;
      gammas.push_back(rec.gamma);
    }
    mean /= static_cast<double>(t.size());
    const auto rhs = theorem1_rhs(c, static_cast<int>(t.size()), t.front().loss_before, f_star,
                                  gammas);
    rep.mean_grad_norm2.push_back(mean);
    rep.rhs.push_back(rhs);
    if (mean > rhs.total) rep.holds = false;
  }
  return rep;
}

double best_loss_surrogate(const Objective& task, std::vector<double> w0, double eta,
                           int steps) {
  require(eta > 0.0 && steps >= 0, "invalid descent settings");
  double best = task.loss(w0);
  std::vector<double> w = std::move(w0);
  for (int s = 0; s < steps; ++s) {
    axpy(w, -eta, task.gradient(w));
    best = std::min(best, task.loss(w));
  }
  return best;
}

}  // namespace sflga::theory
