#pragma once

// One communication round of split federated training, for SFL-GA and the
// three baselines (traditional SFL, parallel SL, plain FL), with exact
// counting of every transfer.

#include <cstdint>
#include <span>
#include <vector>

#include "sflga/nn.hpp"
#include "sflga/wireless.hpp"

namespace sflga::protocol {

using nn::Batch;
using nn::Matrix;
using nn::ParamBlock;

// Weighted sums are anchored on the first element:
//   a_0 + sum_n rho_n (a_n - a_0)
// evaluated left to right in client order. This equals sum_n rho_n a_n in
// exact arithmetic, and returns a_0 bit-for-bit when every a_n is a_0, which
// is what makes equal-data runs of different protocols match exactly.
Matrix aggregate_smashed_grads(std::span<const Matrix> grads,
                               std::span<const double> rho);
ParamBlock aggregate_server_models(std::span<const ParamBlock> models,
                                   std::span<const double> rho);
// Same reduction over plain vectors (used for parameter-shaped gradients).
std::vector<double> aggregate_vectors(std::span<const std::vector<double>> items,
                                      std::span<const double> rho);

// rho_n = D_n / sum D.
std::vector<double> weights_from_sizes(std::span<const double> sizes);

struct FederationState {
  nn::NetworkSpec spec;
  int round = 0;
  int cut = 1;
  int epochs = 1;
  double eta = 0.01;
  std::vector<double> rho;
  std::vector<ParamBlock> client_models;  // one per client, layers 1..cut
  std::vector<ParamBlock> server_models;  // per-client copies after a round
  ParamBlock server_model;                // aggregated, layers cut+1..V

  std::size_t clients() const { return rho.size(); }
  void validate() const;
};

// Every client starts from the same split of one initial model.
FederationState make_state(const nn::NetworkSpec& spec, const ParamBlock& init,
                           int cut, int epochs, double eta,
                           std::vector<double> rho);

// Moves the cut of a state whose client models are identical (SFL-GA, SFL,
// FL). The full model is reassembled and split again.
FederationState recut(const FederationState& state, int cut);

// Full model seen by client n.
ParamBlock client_full_model(const FederationState& state, std::size_t n);

struct ClientTraffic {
  std::uint64_t uplink_bits = 0;     // smashed data + labels, model uploads
  std::uint64_t downlink_bits = 0;   // unicast gradients, model downloads
};

struct RoundMetrics {
  double train_loss = 0.0;  // rho-weighted mean of per-client batch losses
  std::vector<double> client_losses;
  std::vector<ClientTraffic> traffic;
  std::uint64_t broadcast_bits = 0;        // one copy per broadcast
  std::uint64_t aggregation_up_bits = 0;   // client-model aggregation traffic
  std::uint64_t aggregation_down_bits = 0;
  int downlink_gradient_transfers = 0;     // broadcasts or unicasts
  std::vector<double> client_grad_norms;   // last-epoch client-side gradient
  // Per epoch, mean over clients of |common client gradient - own gradient|^2.
  std::vector<double> gradient_gap;

  std::uint64_t uplink_bits() const;
  std::uint64_t downlink_bits() const;
  std::uint64_t total_bits() const { return uplink_bits() + downlink_bits(); }
};

// batches[n][i] is client n's mini-batch for epoch i. When a client holds a
// single batch it is reused for every epoch.
using EpochBatches = std::vector<std::vector<Batch>>;

struct RoundOptions {
  wireless::WireFormat wire;
  int param_bits = 64;
  // Privacy threshold; the round fails with constraint-violation when the
  // state's cut does not meet it.
  double epsilon = 0.0;
  // Fill RoundMetrics::gradient_gap (one extra client backward per epoch).
  bool track_gradient_gap = false;
};

struct RoundResult {
  FederationState state;
  RoundMetrics metrics;
};

RoundResult run_round_sflga(const FederationState& state,
                            const EpochBatches& batches,
                            const RoundOptions& options = {});
RoundResult run_round_sfl(const FederationState& state,
                          const EpochBatches& batches,
                          const RoundOptions& options = {});
RoundResult run_round_psl(const FederationState& state,
                          const EpochBatches& batches,
                          const RoundOptions& options = {});
RoundResult run_round_fl(const FederationState& state,
                         const EpochBatches& batches,
                         const RoundOptions& options = {});

RoundResult run_round(Protocol protocol, const FederationState& state,
                      const EpochBatches& batches,
                      const RoundOptions& options = {});

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

// sum_n rho_n F(w^n) on the evaluation set, plus the same weighting of top-1
// accuracy.
Evaluation evaluate(const FederationState& state, const Batch& eval_set);
double global_loss(const FederationState& state, const Batch& eval_set);

}  // namespace sflga::protocol
