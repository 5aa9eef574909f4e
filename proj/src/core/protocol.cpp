#include "sflga/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "sflga/error.hpp"

namespace sflga::protocol {

namespace {

void check_rho(std::span<const double> rho, std::size_t count) {
  require(rho.size() == count, "one weight per client required");
  require(count > 0, "nothing to aggregate");
  double sum = 0.0;
  for (double r : rho) {
    require(r >= 0.0 && std::isfinite(r), "client weights must be non-negative");
    sum += r;
  }
  require(std::abs(sum - 1.0) <= 1e-12, "client weights must sum to 1");
}

// out = a_0 + sum_n rho_n (a_n - a_0), element by element, clients in order.
template <typename Get>
void anchored_sum(std::span<double> out, std::size_t count,
                  std::span<const double> rho, Get get) {
  const auto anchor = get(0);
  std::copy(anchor.begin(), anchor.end(), out.begin());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double acc = anchor[i];
    for (std::size_t n = 0; n < count; ++n) acc += rho[n] * (get(n)[i] - anchor[i]);
    out[i] = acc;
  }
}

std::uint64_t to_bits(double bits) { return static_cast<std::uint64_t>(std::llround(bits)); }

const Batch& epoch_batch(const EpochBatches& batches, std::size_t n, int epoch) {
  const auto& mine = batches[n];
  return mine.size() == 1 ? mine.front() : mine[static_cast<std::size_t>(epoch)];
}

void check_inputs(const FederationState& state, const EpochBatches& batches,
                  const RoundOptions& options) {
  state.validate();
  require(batches.size() == state.clients(), "one batch list per client required");
  for (const auto& list : batches) {
    require(list.size() == 1 || list.size() == static_cast<std::size_t>(state.epochs),
            "each client needs one batch or one per epoch");
    for (const auto& b : list) require(b.size() > 0, "empty client batch");
  }
  if (!wireless::privacy_ok(state.spec, state.cut, options.epsilon)) {
    fail(ErrorCode::ConstraintViolation,
         "cut " + std::to_string(state.cut) + " violates privacy threshold " +
             std::to_string(options.epsilon));
  }
}

// Per-client results of the client forward + server forward/backward of one
// epoch.
struct ServerPass {
  std::vector<nn::ActivationCache> client_caches;
  std::vector<Matrix> smashed_grads;
  std::vector<double> losses;
};

ServerPass server_pass(std::vector<ParamBlock>& client_models,
                       std::vector<ParamBlock>& server_models,
                       const EpochBatches& batches, int epoch, double eta,
                       const RoundOptions& options, RoundMetrics& metrics,
                       const nn::NetworkSpec& spec, int cut) {
  ServerPass pass;
  for (std::size_t n = 0; n < client_models.size(); ++n) {
    const Batch& batch = epoch_batch(batches, n, epoch);
    auto client_fwd = nn::forward_partial(client_models[n], batch.inputs);
    const double b = static_cast<double>(batch.size());
    metrics.traffic[n].uplink_bits +=
        to_bits(wireless::payload_bits(spec, cut, b, options.wire));

    auto server_fwd = nn::forward_partial(server_models[n], client_fwd.outputs);
    auto head = nn::loss_and_grad_head(server_fwd.outputs, batch.labels);
    auto server_bwd = nn::backward_partial(server_models[n], server_fwd.cache, head.dlogits);
    server_models[n] = nn::sgd_step(server_models[n], server_bwd.grads, eta);

    pass.client_caches.push_back(std::move(client_fwd.cache));
    pass.smashed_grads.push_back(std::move(server_bwd.input_grad));
    pass.losses.push_back(head.loss);
  }
  return pass;
}

void record_losses(RoundMetrics& metrics, const std::vector<double>& losses,
                   std::span<const double> rho) {
  metrics.client_losses = losses;
  metrics.train_loss = 0.0;
  for (std::size_t n = 0; n < losses.size(); ++n) metrics.train_loss += rho[n] * losses[n];
}

RoundMetrics empty_metrics(std::size_t clients) {
  RoundMetrics m;
  m.traffic.resize(clients);
  m.client_grad_norms.assign(clients, 0.0);
  return m;
}

enum class Downlink { Broadcast, Unicast };

// Shared driver for the three split protocols. SFL-GA applies one common
// client-side gradient; SFL and PSL backpropagate each client's own smashed
// gradient, and SFL additionally averages the client models at the end.
RoundResult run_split_round(const FederationState& state, const EpochBatches& batches,
                            const RoundOptions& options, Protocol protocol) {
  check_inputs(state, batches, options);
  const std::size_t clients = state.clients();
  const bool aggregated = protocol == Protocol::SflGa;

  RoundResult out{state, empty_metrics(clients)};
  FederationState& next = out.state;
  RoundMetrics& metrics = out.metrics;
  next.server_models.assign(clients, state.server_model);

  const std::size_t batch0 = epoch_batch(batches, 0, 0).size();
  std::vector<double> last_losses;

  for (int epoch = 0; epoch < state.epochs; ++epoch) {
    auto pass = server_pass(next.client_models, next.server_models, batches, epoch,
                            state.eta, options, metrics, state.spec, state.cut);
    last_losses = pass.losses;

    if (aggregated) {
      for (std::size_t n = 0; n < clients; ++n) {
        require(epoch_batch(batches, n, epoch).size() == batch0,
                "gradient aggregation needs equal mini-batch sizes");
      }
      const Matrix common = aggregate_smashed_grads(pass.smashed_grads, state.rho);
      metrics.broadcast_bits +=
          to_bits(wireless::gradient_payload_bits(state.spec, state.cut,
                                                  static_cast<double>(batch0),
                                                  options.wire));
      metrics.downlink_gradient_transfers += 1;

      std::vector<std::vector<double>> grads;
      grads.reserve(clients);
      for (std::size_t n = 0; n < clients; ++n) {
        auto back = nn::backward_partial(next.client_models[n], pass.client_caches[n], common);
        auto g = back.grads.values();
        grads.emplace_back(g.begin(), g.end());
      }
      const auto applied = aggregate_vectors(grads, state.rho);

      if (options.track_gradient_gap) {
        double gap = 0.0;
        for (std::size_t n = 0; n < clients; ++n) {
          auto own = nn::backward_partial(next.client_models[n], pass.client_caches[n],
                                          pass.smashed_grads[n]);
          const auto g = own.grads.values();
          double d2 = 0.0;
          for (std::size_t i = 0; i < g.size(); ++i) {
            const double d = applied[i] - g[i];
            d2 += d * d;
          }
          gap += d2;
        }
        metrics.gradient_gap.push_back(gap / static_cast<double>(clients));
      }

      for (std::size_t n = 0; n < clients; ++n) {
        ParamBlock g = next.client_models[n].zeros_like();
        std::copy(applied.begin(), applied.end(), g.values().begin());
        metrics.client_grad_norms[n] = std::sqrt(nn::squared_norm(applied));
        next.client_models[n] = nn::sgd_step(next.client_models[n], g, state.eta);
      }
    } else {
      for (std::size_t n = 0; n < clients; ++n) {
        const double b = static_cast<double>(epoch_batch(batches, n, epoch).size());
        metrics.traffic[n].downlink_bits += to_bits(
            wireless::gradient_payload_bits(state.spec, state.cut, b, options.wire));
        metrics.downlink_gradient_transfers += 1;
        auto back = nn::backward_partial(next.client_models[n], pass.client_caches[n],
                                         pass.smashed_grads[n]);
        metrics.client_grad_norms[n] = std::sqrt(nn::squared_norm(back.grads.values()));
        next.client_models[n] = nn::sgd_step(next.client_models[n], back.grads, state.eta);
      }
    }
  }

  record_losses(metrics, last_losses, state.rho);
  next.server_model = aggregate_server_models(next.server_models, state.rho);

  if (protocol == Protocol::Sfl) {
    const ParamBlock avg = aggregate_server_models(next.client_models, state.rho);
    for (auto& m : next.client_models) m = avg;
    const std::uint64_t model_bits =
        static_cast<std::uint64_t>(nn::param_count(state.spec, 1, state.cut)) *
        static_cast<std::uint64_t>(options.param_bits);
    for (std::size_t n = 0; n < clients; ++n) {
      metrics.aggregation_up_bits += model_bits;
      metrics.aggregation_down_bits += model_bits;
    }
  }
  next.round = state.round + 1;
  return out;
}

}  // namespace

Matrix aggregate_smashed_grads(std::span<const Matrix> grads,
                               std::span<const double> rho) {
  check_rho(rho, grads.size());
  for (const auto& g : grads) {
    require(g.rows == grads[0].rows && g.cols == grads[0].cols,
            "smashed gradients differ in shape");
  }
  Matrix out(grads[0].rows, grads[0].cols);
  anchored_sum(out.data, grads.size(), rho, [&](std::size_t n) {
    return std::span<const double>(grads[n].data);
  });
  return out;
}

ParamBlock aggregate_server_models(std::span<const ParamBlock> models,
                                   std::span<const double> rho) {
  check_rho(rho, models.size());
  for (const auto& m : models) {
    require(m.same_shape(models[0]), "models differ in shape");
  }
  ParamBlock out = models[0];
  anchored_sum(out.values(), models.size(), rho,
               [&](std::size_t n) { return models[n].values(); });
  return out;
}

std::vector<double> aggregate_vectors(std::span<const std::vector<double>> items,
                                      std::span<const double> rho) {
  check_rho(rho, items.size());
  for (const auto& v : items) require(v.size() == items[0].size(), "vectors differ in length");
  std::vector<double> out(items[0].size());
  anchored_sum(out, items.size(), rho,
               [&](std::size_t n) { return std::span<const double>(items[n]); });
  return out;
}

std::vector<double> weights_from_sizes(std::span<const double> sizes) {
  require(!sizes.empty(), "no clients");
  double total = 0.0;
  for (double d : sizes) {
    require(d >= 0.0, "dataset sizes must be non-negative");
    total += d;
  }
  require(total > 0.0, "total dataset size must be positive");
  std::vector<double> rho;
  for (double d : sizes) rho.push_back(d / total);
  // Push the rounding residue onto the largest weight so the sum is 1 within
  // one ulp.
  double sum = std::accumulate(rho.begin(), rho.end(), 0.0);
  auto largest = std::max_element(rho.begin(), rho.end());
  *largest += 1.0 - sum;
  return rho;
}

void FederationState::validate() const {
  spec.validate();
  require(cut >= 1 && cut <= spec.layers() - 1, "cut outside 1..V-1");
  require(epochs >= 1, "epochs must be at least 1");
  require(eta > 0.0, "learning rate must be positive");
  check_rho(rho, rho.size());
  require(client_models.size() == rho.size(), "one client model per client");
  for (const auto& m : client_models) {
    require(m.first_layer() == 1 && m.last_layer() == cut, "client model range mismatch");
  }
  require(server_model.first_layer() == cut + 1 &&
              server_model.last_layer() == spec.layers(),
          "server model range mismatch");
}

FederationState make_state(const nn::NetworkSpec& spec, const ParamBlock& init,
                           int cut, int epochs, double eta, std::vector<double> rho) {
  FederationState s;
  s.spec = spec;
  s.cut = cut;
  s.epochs = epochs;
  s.eta = eta;
  s.rho = std::move(rho);
  auto [client, server] = nn::split(init, cut);
  s.client_models.assign(s.rho.size(), client);
  s.server_models.assign(s.rho.size(), server);
  s.server_model = server;
  s.validate();
  return s;
}

FederationState recut(const FederationState& state, int cut) {
  if (cut == state.cut) return state;
  for (const auto& m : state.client_models) {
    require(m == state.client_models.front(),
            "cannot move the cut while client models differ");
  }
  FederationState s = state;
  const ParamBlock full = state.client_models.front().concat(state.server_model);
  auto [client, server] = nn::split(full, cut);
  s.cut = cut;
  s.client_models.assign(s.rho.size(), client);
  s.server_models.assign(s.rho.size(), server);
  s.server_model = server;
  s.validate();
  return s;
}

ParamBlock client_full_model(const FederationState& state, std::size_t n) {
  require(n < state.clients(), "client index out of range");
  return state.client_models[n].concat(state.server_model);
}

std::uint64_t RoundMetrics::uplink_bits() const {
  std::uint64_t total = aggregation_up_bits;
  for (const auto& t : traffic) total += t.uplink_bits;
  return total;
}

std::uint64_t RoundMetrics::downlink_bits() const {
  std::uint64_t total = broadcast_bits + aggregation_down_bits;
  for (const auto& t : traffic) total += t.downlink_bits;
  return total;
}

RoundResult run_round_sflga(const FederationState& state, const EpochBatches& batches,
                            const RoundOptions& options) {
  return run_split_round(state, batches, options, Protocol::SflGa);
}

RoundResult run_round_sfl(const FederationState& state, const EpochBatches& batches,
                          const RoundOptions& options) {
  return run_split_round(state, batches, options, Protocol::Sfl);
}

RoundResult run_round_psl(const FederationState& state, const EpochBatches& batches,
                          const RoundOptions& options) {
  return run_split_round(state, batches, options, Protocol::Psl);
}

RoundResult run_round_fl(const FederationState& state, const EpochBatches& batches,
                         const RoundOptions& options) {
  state.validate();
  require(batches.size() == state.clients(), "one batch list per client required");
  const std::size_t clients = state.clients();
  RoundResult out{state, empty_metrics(clients)};
  RoundMetrics& metrics = out.metrics;

  const std::uint64_t model_bits =
      static_cast<std::uint64_t>(nn::param_count(state.spec, 1, state.spec.layers())) *
      static_cast<std::uint64_t>(options.param_bits);
  std::vector<ParamBlock> fulls;
  std::vector<double> losses;
  for (std::size_t n = 0; n < clients; ++n) {
    require(batches[n].size() == 1 || batches[n].size() == static_cast<std::size_t>(state.epochs),
            "each client needs one batch or one per epoch");
    ParamBlock w = client_full_model(state, n);
    double loss = 0.0;
    for (int epoch = 0; epoch < state.epochs; ++epoch) {
      auto lg = nn::full_loss_and_grad(w, epoch_batch(batches, n, epoch));
      loss = lg.loss;
      metrics.client_grad_norms[n] = std::sqrt(nn::squared_norm(lg.grads.values()));
      w = nn::sgd_step(w, lg.grads, state.eta);
    }
    metrics.traffic[n].uplink_bits += model_bits;
    metrics.traffic[n].downlink_bits += model_bits;
    fulls.push_back(std::move(w));
    losses.push_back(loss);
  }
  record_losses(metrics, losses, state.rho);
  const ParamBlock avg = aggregate_server_models(fulls, state.rho);
  auto [client, server] = nn::split(avg, state.cut);
  out.state.client_models.assign(clients, client);
  out.state.server_models.assign(clients, server);
  out.state.server_model = server;
  out.state.round = state.round + 1;
  return out;
}

RoundResult run_round(Protocol protocol, const FederationState& state,
                      const EpochBatches& batches, const RoundOptions& options) {
  switch (protocol) {
    case Protocol::SflGa: return run_round_sflga(state, batches, options);
    case Protocol::Sfl: return run_round_sfl(state, batches, options);
    case Protocol::Psl: return run_round_psl(state, batches, options);
    case Protocol::Fl: return run_round_fl(state, batches, options);
  }
  fail(ErrorCode::InvalidArgument, "unknown protocol");
}

Evaluation evaluate(const FederationState& state, const Batch& eval_set) {
  require(eval_set.size() > 0, "evaluation set is empty");
  Evaluation e;
  const auto server_fwd = [&](const ParamBlock& client) {
    auto smashed = nn::forward_partial(client, eval_set.inputs);
    return nn::forward_partial(state.server_model, smashed.outputs).outputs;
  };
  // Identical client models need one evaluation only.
  std::size_t n = 0;
  while (n < state.clients()) {
    std::size_t m = n + 1;
    double weight = state.rho[n];
    while (m < state.clients() && state.client_models[m] == state.client_models[n]) {
      weight += state.rho[m];
      ++m;
    }
    const Matrix logits = server_fwd(state.client_models[n]);
    const double loss = nn::loss_and_grad_head(logits, eval_set.labels).loss;
    const auto pred = nn::argmax_rows(logits);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == eval_set.labels[i];
    e.loss += weight * loss;
    e.accuracy += weight * static_cast<double>(hits) / static_cast<double>(pred.size());
    n = m;
  }
  return e;
}

double global_loss(const FederationState& state, const Batch& eval_set) {
  return evaluate(state, eval_set).loss;
}

}  // namespace sflga::protocol
