#pragma once

// Empirical checks of the convergence analysis: smoothness and gradient
// variance estimates, the gradient gap between aggregated and per-client
// client-side updates, the one-round improvement bound and the averaged
// gradient-norm bound.

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "sflga/dataset.hpp"
#include "sflga/nn.hpp"
#include "sflga/random.hpp"

namespace sflga::theory {

// A differentiable objective over a flat parameter vector, split into
// clients with weights rho.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual std::size_t dim() const = 0;
  virtual std::size_t clients() const = 0;
  virtual std::span<const double> rho() const = 0;
  virtual double loss(std::span<const double> w) const = 0;
  virtual std::vector<double> gradient(std::span<const double> w) const = 0;
  // Full local gradient of one client.
  virtual std::vector<double> client_gradient(std::span<const double> w,
                                              std::size_t client) const = 0;
  // Gradient on `batch` local samples drawn without replacement.
  virtual std::vector<double> minibatch_gradient(std::span<const double> w,
                                                 std::size_t client, std::size_t batch,
                                                 Rng& rng) const = 0;
};

// F(w) = lambda/2 |w|^2 for one client; every mini-batch gradient is exact.
class Quadratic final : public Objective {
 public:
  Quadratic(double lambda, std::size_t dim);
  std::size_t dim() const override { return dim_; }
  std::size_t clients() const override { return 1; }
  std::span<const double> rho() const override { return rho_; }
  double loss(std::span<const double> w) const override;
  std::vector<double> gradient(std::span<const double> w) const override;
  std::vector<double> client_gradient(std::span<const double> w, std::size_t) const override;
  std::vector<double> minibatch_gradient(std::span<const double> w, std::size_t, std::size_t,
                                         Rng&) const override;
  double lambda() const { return lambda_; }

 private:
  double lambda_;
  std::size_t dim_;
  std::vector<double> rho_{1.0};
};

// Softmax cross-entropy of a dense network, averaged per client and weighted
// by rho across clients. Parameters are the flat full-model vector.
class NetworkTask final : public Objective {
 public:
  NetworkTask(nn::NetworkSpec spec, std::vector<data::Dataset> client_data);
  std::size_t dim() const override;
  std::size_t clients() const override { return data_.size(); }
  std::span<const double> rho() const override { return rho_; }
  double loss(std::span<const double> w) const override;
  std::vector<double> gradient(std::span<const double> w) const override;
  std::vector<double> client_gradient(std::span<const double> w,
                                      std::size_t client) const override;
  std::vector<double> minibatch_gradient(std::span<const double> w, std::size_t client,
                                         std::size_t batch, Rng& rng) const override;

  const nn::NetworkSpec& spec() const { return spec_; }
  const data::Dataset& client_data(std::size_t n) const { return data_[n]; }
  nn::ParamBlock params(std::span<const double> w) const;

 private:
  nn::NetworkSpec spec_;
  std::vector<data::Dataset> data_;
  std::vector<double> rho_;
};

// Sorted draw of `batch` distinct indices from [0, n).
std::vector<std::size_t> sample_indices(Rng& rng, std::size_t n, std::size_t batch);

// Max of |grad(w) - grad(w')| / |w - w'| over all pairs among `samples`
// points drawn uniformly from the box center +- radius.
double estimate_L(const Objective& task, int samples, std::span<const double> center,
                  double radius, std::uint64_t seed);

// Max over clients of the mean of |g_batch - g_local|^2 over `batches` draws
// at point w.
double estimate_sigma2(const Objective& task, int batches, std::span<const double> w,
                       std::size_t batch_size, std::uint64_t seed);

bool stepsize_ok(double L, double eta, int tau);

struct TheoryConstants {
  double L = 0.0;
  double sigma2 = 0.0;
  double eta = 0.0;
  int tau = 1;
  std::vector<double> rho;
  std::vector<double> gamma_curve;  // measured gap per cut, index v-1
};

double sum_rho_squared(std::span<const double> rho);

// -(eta tau / 4)|grad F|^2 + eta tau Gamma + L eta^2 tau sigma^2 sum rho^2
//   + (5/4) L^2 eta^3 sigma^2 tau (tau - 1)
double lemma1_rhs(const TheoryConstants& c, double grad_norm2, double gamma);

struct Theorem1Terms {
  double initialization = 0.0;  // 4 (F_start - F*) / (eta tau T)
  double cutting_point = 0.0;   // (4/T) sum_t Gamma_t
  double variance = 0.0;        // 4 L eta sigma^2 sum rho^2 + 5 L^2 eta^2 sigma^2 (tau-1)
  double total = 0.0;
};

Theorem1Terms theorem1_rhs(const TheoryConstants& c, int T, double f_start, double f_star,
                           std::span<const double> gammas);

// Orders of the averaged bound with rho = 1/N and eta = sqrt(N / (tau T)).
struct ComplexityTerms {
  double eta = 0.0;
  double initialization = 0.0;  // 1 / sqrt(tau N T)
  double variance = 0.0;        // sigma^2 / sqrt(tau N T)
  double drift = 0.0;           // N (tau - 1) sigma^2 / (tau T)
  double cutting_point = 0.0;   // (4/T) sum_t Gamma_t
};

ComplexityTerms complexity_terms(double sigma2, int clients, int tau, int T,
                                 std::span<const double> gammas);

struct RoundRecord {
  double loss_before = 0.0;
  double loss_after = 0.0;
  double grad_norm2 = 0.0;  // |grad F(w_t)|^2 at the start of the round
  double gamma = 0.0;       // largest per-epoch gradient gap in the round
};
using Trace = std::vector<RoundRecord>;

// tau plain gradient steps per round on the quadratic.
Trace trace_quadratic(const Quadratic& task, std::vector<double> w0, double eta, int tau,
                      int rounds);

struct SplitRun {
  int cut = 1;
  int tau = 1;
  double eta = 0.01;
  std::size_t batch = 8;
  int rounds = 10;
};

// SFL-GA rounds through the protocol engine; mini-batches come from the
// seed, the initial model is shared.
Trace trace_sflga(const NetworkTask& task, const SplitRun& run, const nn::ParamBlock& init,
                  std::uint64_t seed);

// Mean over rounds and clients of the squared gap between the applied
// (aggregated) client-side gradient and each client's own one.
double measure_gamma(const NetworkTask& task, const SplitRun& run, const nn::ParamBlock& init,
                     std::uint64_t seed);

struct Lemma1Report {
  int rounds = 0;
  int violations = 0;
  double max_excess = 0.0;  // max over rounds of empirical - bound (- 3 se)
  std::vector<double> empirical;  // seed-mean improvement per round
  std::vector<double> bound;      // seed-mean bound per round
};

// Deterministic: violation when empirical > bound + 1e-9. Stochastic: when
// the seed-mean of (improvement - bound) exceeds 3 standard errors.
Lemma1Report lemma1_check(const TheoryConstants& c, std::span<const Trace> seeds,
                          bool deterministic);

struct Theorem1Report {
  std::vector<double> mean_grad_norm2;  // per seed
  std::vector<Theorem1Terms> rhs;       // per seed
  bool holds = true;
};

// Compares each seed's average |grad F(w_t)|^2 with the bound evaluated at
// that seed's starting loss and measured gaps.
Theorem1Report theorem1_check(const TheoryConstants& c, std::span<const Trace> seeds,
                              double f_star);

// Best full-batch loss seen along `steps` of centralized gradient descent;
// an upper estimate of F*.
double best_loss_surrogate(const Objective& task, std::vector<double> w0, double eta,
                           int steps);

}  // namespace sflga::theory
