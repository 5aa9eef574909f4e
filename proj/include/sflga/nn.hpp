#pragma once

// Dense feed-forward network with explicit forward/backward passes that can
// run on any contiguous range of layers. Layers are numbered 1..V; a cut at v
// puts layers 1..v on the client and v+1..V on the server.

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace sflga::nn {

enum class Activation { Relu, Identity };

enum class Direction { Forward, Backward };

struct NetworkSpec {
  std::vector<std::size_t> layer_dims;   // input, hidden..., output
  std::vector<Activation> activations;   // one per layer; the last feeds the
                                         // softmax cross-entropy head

  // Relu hidden layers and identity logits.
  static NetworkSpec classifier(std::vector<std::size_t> dims);
  // Identity activations everywhere (a deep linear model).
  static NetworkSpec linear(std::vector<std::size_t> dims);

  int layers() const { return static_cast<int>(activations.size()); }
  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t output_dim() const { return layer_dims.back(); }
  // Width of the activations leaving layer v.
  std::size_t cut_dim(int v) const;

  void validate() const;
};

std::size_t param_count(const NetworkSpec& spec, int from_layer, int to_layer);
double flops_per_sample(const NetworkSpec& spec, int from_layer, int to_layer,
                        Direction direction);

// Row-major real matrix. Rows are samples.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }

  bool operator==(const Matrix&) const = default;
};

struct Batch {
  Matrix inputs;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

// Parameters of layers [first, last]. Each layer stores its weight matrix
// (in_dim x out_dim, row-major) followed by its bias, all in one flat array.
class ParamBlock {
 public:
  ParamBlock() = default;
  ParamBlock(const NetworkSpec& spec, int first_layer, int last_layer);

  int first_layer() const { return first_; }
  int last_layer() const { return first_ + static_cast<int>(acts_.size()) - 1; }
  bool empty() const { return acts_.empty(); }

  std::size_t in_dim(int layer) const { return dims_[local(layer)]; }
  std::size_t out_dim(int layer) const { return dims_[local(layer) + 1]; }
  Activation activation(int layer) const { return acts_[local(layer)]; }

  std::span<double> weights(int layer);
  std::span<const double> weights(int layer) const;
  std::span<double> bias(int layer);
  std::span<const double> bias(int layer) const;

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }

  // Same layer range and dimensions.
  bool same_shape(const ParamBlock& other) const;
  bool operator==(const ParamBlock& other) const {
    return same_shape(other) && values_ == other.values_;
  }

  ParamBlock zeros_like() const;

  // Sub-range [from, to] of this block.
  ParamBlock slice(int from, int to) const;
  // Concatenate this block with one that starts right after it.
  ParamBlock concat(const ParamBlock& next) const;

 private:
  std::size_t local(int layer) const;

  int first_ = 1;
  std::vector<std::size_t> dims_;
  std::vector<Activation> acts_;
  std::vector<std::size_t> offsets_;
  std::vector<double> values_;
};

// Glorot-uniform weights, zero biases, for all layers 1..V.
ParamBlock init_params(const NetworkSpec& spec, std::uint64_t seed);

// Splits a full model at cut v into (client 1..v, server v+1..V).
std::pair<ParamBlock, ParamBlock> split(const ParamBlock& full, int v);

struct ActivationCache {
  std::size_t batch_size = 0;
  std::vector<Matrix> inputs;          // input to each layer of the range
  std::vector<Matrix> pre_activations; // affine output of each layer
};

struct ForwardResult {
  Matrix outputs;
  ActivationCache cache;
};

ForwardResult forward_partial(const ParamBlock& params, const Matrix& inputs);

struct HeadResult {
  double loss = 0.0;
  Matrix dlogits;
};

// Mean softmax cross-entropy over the batch and its gradient w.r.t. logits.
HeadResult loss_and_grad_head(const Matrix& logits, std::span<const int> labels);

struct BackwardResult {
  ParamBlock grads;
  Matrix input_grad;
};

BackwardResult backward_partial(const ParamBlock& params,
                                const ActivationCache& cache,
                                const Matrix& upstream);

ParamBlock sgd_step(const ParamBlock& params, const ParamBlock& grads,
                    double eta);

// Full-network convenience: forward, head, backward.
struct LossGradient {
  double loss = 0.0;
  ParamBlock grads;
};
LossGradient full_loss_and_grad(const ParamBlock& params, const Batch& batch);

// Top-1 predictions for a logits matrix.
std::vector<int> argmax_rows(const Matrix& logits);

double squared_norm(std::span<const double> v);

}  // namespace sflga::nn
