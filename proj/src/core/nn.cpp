#include "sflga/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sflga/error.hpp"
#include "sflga/random.hpp"

namespace sflga::nn {

NetworkSpec NetworkSpec::classifier(std::vector<std::size_t> dims) {
  NetworkSpec spec;
  spec.layer_dims = std::move(dims);
  const std::size_t layers =
      spec.layer_dims.empty() ? 0 : spec.layer_dims.size() - 1;
  spec.activations.assign(layers, Activation::Relu);
  if (layers > 0) spec.activations.back() = Activation::Identity;
  spec.validate();
  return spec;
}

NetworkSpec NetworkSpec::linear(std::vector<std::size_t> dims) {
  NetworkSpec spec;
  spec.layer_dims = std::move(dims);
  const std::size_t layers =
      spec.layer_dims.empty() ? 0 : spec.layer_dims.size() - 1;
  spec.activations.assign(layers, Activation::Identity);
  spec.validate();
  return spec;
}

std::size_t NetworkSpec::cut_dim(int v) const {
  require(v >= 1 && v <= layers(), "cut layer " + std::to_string(v) +
                                       " outside 1.." + std::to_string(layers()));
  return layer_dims[static_cast<std::size_t>(v)];
}

void NetworkSpec::validate() const {
  require(layer_dims.size() >= 2, "network needs at least one layer");
  require(activations.size() + 1 == layer_dims.size(),
          "layer_dims length must equal layer count + 1");
  for (std::size_t d : layer_dims) require(d > 0, "layer dims must be positive");
}

namespace {

void check_range(const NetworkSpec& spec, int from, int to) {
  if (from < 1 || to > spec.layers() || from > to) {
    fail(ErrorCode::InvalidArgument,
         "layer range [" + std::to_string(from) + ", " + std::to_string(to) +
             "] invalid for a " + std::to_string(spec.layers()) +
             "-layer network");
  }
}

}  // namespace

std::size_t param_count(const NetworkSpec& spec, int from_layer, int to_layer) {
  check_range(spec, from_layer, to_layer);
  std::size_t total = 0;
  for (int l = from_layer; l <= to_layer; ++l) {
    const std::size_t in = spec.layer_dims[static_cast<std::size_t>(l - 1)];
    const std::size_t out = spec.layer_dims[static_cast<std::size_t>(l)];
    total += in * out + out;
  }
  return total;
}

double flops_per_sample(const NetworkSpec& spec, int from_layer, int to_layer,
                        Direction direction) {
  check_range(spec, from_layer, to_layer);
  double forward = 0.0;
  for (int l = from_layer; l <= to_layer; ++l) {
    const double in = static_cast<double>(spec.layer_dims[static_cast<std::size_t>(l - 1)]);
    const double out = static_cast<double>(spec.layer_dims[static_cast<std::size_t>(l)]);
    forward += 2.0 * in * out;
  }
  return direction == Direction::Forward ? forward : 2.0 * forward;
}

// ---------------------------------------------------------------------------
// ParamBlock

ParamBlock::ParamBlock(const NetworkSpec& spec, int first_layer, int last_layer) {
  check_range(spec, first_layer, last_layer);
  first_ = first_layer;
  std::size_t offset = 0;
  for (int l = first_layer; l <= last_layer; ++l) {
    const auto idx = static_cast<std::size_t>(l);
    if (l == first_layer) dims_.push_back(spec.layer_dims[idx - 1]);
    dims_.push_back(spec.layer_dims[idx]);
    acts_.push_back(spec.activations[idx - 1]);
    offsets_.push_back(offset);
    offset += spec.layer_dims[idx - 1] * spec.layer_dims[idx] + spec.layer_dims[idx];
  }
  values_.assign(offset, 0.0);
}

std::size_t ParamBlock::local(int layer) const {
  if (layer < first_ || layer > last_layer()) {
    fail(ErrorCode::InvalidArgument,
         "layer " + std::to_string(layer) + " not held by this parameter block");
  }
  return static_cast<std::size_t>(layer - first_);
}

std::span<double> ParamBlock::weights(int layer) {
  const std::size_t i = local(layer);
  return {values_.data() + offsets_[i], dims_[i] * dims_[i + 1]};
}

std::span<const double> ParamBlock::weights(int layer) const {
  const std::size_t i = local(layer);
  return {values_.data() + offsets_[i], dims_[i] * dims_[i + 1]};
}

std::span<double> ParamBlock::bias(int layer) {
  const std::size_t i = local(layer);
  return {values_.data() + offsets_[i] + dims_[i] * dims_[i + 1], dims_[i + 1]};
}

std::span<const double> ParamBlock::bias(int layer) const {
  const std::size_t i = local(layer);
  return {values_.data() + offsets_[i] + dims_[i] * dims_[i + 1], dims_[i + 1]};
}

bool ParamBlock::same_shape(const ParamBlock& other) const {
  return first_ == other.first_ && dims_ == other.dims_ && acts_ == other.acts_;
}

ParamBlock ParamBlock::zeros_like() const {
  ParamBlock out = *this;
  std::fill(out.values_.begin(), out.values_.end(), 0.0);
  return out;
}

ParamBlock ParamBlock::slice(int from, int to) const {
  require(from >= first_ && to <= last_layer() && from <= to,
          "slice range outside parameter block");
  ParamBlock out;
  out.first_ = from;
  const std::size_t a = local(from);
  const std::size_t b = local(to);
  out.dims_.assign(dims_.begin() + static_cast<std::ptrdiff_t>(a),
                   dims_.begin() + static_cast<std::ptrdiff_t>(b + 2));
  out.acts_.assign(acts_.begin() + static_cast<std::ptrdiff_t>(a),
                   acts_.begin() + static_cast<std::ptrdiff_t>(b + 1));
  const std::size_t begin = offsets_[a];
  const std::size_t end = b + 1 < offsets_.size() ? offsets_[b + 1] : values_.size();
  for (std::size_t i = a; i <= b; ++i) out.offsets_.push_back(offsets_[i] - begin);
  out.values_.assign(values_.begin() + static_cast<std::ptrdiff_t>(begin),
                     values_.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

ParamBlock ParamBlock::concat(const ParamBlock& next) const {
  if (empty()) return next;
  if (next.empty()) return *this;
  require(next.first_ == last_layer() + 1 && next.dims_.front() == dims_.back(),
          "parameter blocks are not adjacent");
  ParamBlock out = *this;
  const std::size_t shift = values_.size();
  out.dims_.insert(out.dims_.end(), next.dims_.begin() + 1, next.dims_.end());
  out.acts_.insert(out.acts_.end(), next.acts_.begin(), next.acts_.end());
  for (std::size_t o : next.offsets_) out.offsets_.push_back(o + shift);
  out.values_.insert(out.values_.end(), next.values_.begin(), next.values_.end());
  return out;
}

ParamBlock init_params(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  ParamBlock params(spec, 1, spec.layers());
  Rng rng(seed);
  for (int l = 1; l <= spec.layers(); ++l) {
    const double in = static_cast<double>(params.in_dim(l));
    const double out = static_cast<double>(params.out_dim(l));
    const double a = std::sqrt(6.0 / (in + out));
    for (double& w : params.weights(l)) w = (2.0 * uniform01(rng) - 1.0) * a;
  }
  return params;
}

std::pair<ParamBlock, ParamBlock> split(const ParamBlock& full, int v) {
  require(v >= full.first_layer() && v < full.last_layer(),
          "cut " + std::to_string(v) + " must leave layers on both sides");
  return {full.slice(full.first_layer(), v), full.slice(v + 1, full.last_layer())};
}

// ---------------------------------------------------------------------------
// Passes

ForwardResult forward_partial(const ParamBlock& params, const Matrix& inputs) {
  require(!params.empty(), "empty parameter block");
  const int first = params.first_layer();
  if (inputs.cols != params.in_dim(first)) {
    fail(ErrorCode::InvalidArgument,
         "input width " + std::to_string(inputs.cols) + " != layer " +
             std::to_string(first) + " input " +
             std::to_string(params.in_dim(first)));
  }
  ForwardResult result;
  result.cache.batch_size = inputs.rows;
  Matrix current = inputs;
  for (int l = first; l <= params.last_layer(); ++l) {
    const std::size_t in = params.in_dim(l);
    const std::size_t out = params.out_dim(l);
    const auto w = params.weights(l);
    const auto b = params.bias(l);
    Matrix z(current.rows, out);
    for (std::size_t i = 0; i < current.rows; ++i) {
      double* zi = &z.data[i * out];
      std::copy(b.begin(), b.end(), zi);
      const double* xi = &current.data[i * in];
      for (std::size_t k = 0; k < in; ++k) {
        const double x = xi[k];
        if (x == 0.0) continue;
        const double* wk = &w[k * out];
        for (std::size_t j = 0; j < out; ++j) zi[j] += x * wk[j];
      }
    }
    Matrix a = z;
    if (params.activation(l) == Activation::Relu) {
      for (double& value : a.data) value = value > 0.0 ? value : 0.0;
    }
    result.cache.inputs.push_back(std::move(current));
    result.cache.pre_activations.push_back(std::move(z));
    current = std::move(a);
  }
  for (double value : current.data) {
    if (!std::isfinite(value)) {
      fail(ErrorCode::NumericOverflow, "non-finite activation in forward pass");
    }
  }
  result.outputs = std::move(current);
  return result;
}

HeadResult loss_and_grad_head(const Matrix& logits, std::span<const int> labels) {
  require(logits.rows == labels.size(), "logits rows must equal label count");
  require(logits.rows > 0, "empty batch");
  HeadResult result;
  result.dlogits = Matrix(logits.rows, logits.cols);
  const double inv_batch = 1.0 / static_cast<double>(logits.rows);
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows; ++i) {
    const int label = labels[i];
    require(label >= 0 && static_cast<std::size_t>(label) < logits.cols,
            "label out of range");
    const auto row = logits.row(i);
    const double peak = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double z : row) sum += std::exp(z - peak);
    const double log_sum = std::log(sum) + peak;
    total += log_sum - row[static_cast<std::size_t>(label)];
    for (std::size_t j = 0; j < logits.cols; ++j) {
      const double p = std::exp(row[j] - log_sum);
      const double onehot = j == static_cast<std::size_t>(label) ? 1.0 : 0.0;
      result.dlogits(i, j) = (p - onehot) * inv_batch;
    }
  }
  result.loss = total * inv_batch;
  return result;
}

BackwardResult backward_partial(const ParamBlock& params,
                                const ActivationCache& cache,
                                const Matrix& upstream) {
  const int first = params.first_layer();
  const int last = params.last_layer();
  const auto layers = static_cast<std::size_t>(last - first + 1);
  if (cache.inputs.size() != layers || cache.pre_activations.size() != layers) {
    fail(ErrorCode::InvalidArgument, "activation cache does not match parameters");
  }
  if (upstream.rows != cache.batch_size || upstream.cols != params.out_dim(last)) {
    fail(ErrorCode::InvalidArgument, "upstream gradient shape mismatch");
  }
  BackwardResult result{params.zeros_like(), {}};
  Matrix delta = upstream;
  for (int l = last; l >= first; --l) {
    const auto idx = static_cast<std::size_t>(l - first);
    const Matrix& x = cache.inputs[idx];
    const Matrix& z = cache.pre_activations[idx];
    const std::size_t in = params.in_dim(l);
    const std::size_t out = params.out_dim(l);
    if (x.cols != in || z.cols != out || x.rows != delta.rows) {
      fail(ErrorCode::InvalidArgument, "activation cache does not match parameters");
    }
    if (params.activation(l) == Activation::Relu) {
      for (std::size_t i = 0; i < delta.data.size(); ++i) {
        if (!(z.data[i] > 0.0)) delta.data[i] = 0.0;
      }
    }
    auto gw = result.grads.weights(l);
    auto gb = result.grads.bias(l);
    for (std::size_t i = 0; i < delta.rows; ++i) {
      const double* di = &delta.data[i * out];
      const double* xi = &x.data[i * in];
      for (std::size_t k = 0; k < in; ++k) {
        const double xv = xi[k];
        if (xv == 0.0) continue;
        double* gk = &gw[k * out];
        for (std::size_t j = 0; j < out; ++j) gk[j] += xv * di[j];
      }
      for (std::size_t j = 0; j < out; ++j) gb[j] += di[j];
    }
    const auto w = params.weights(l);
    Matrix dx(delta.rows, in);
    for (std::size_t i = 0; i < delta.rows; ++i) {
      const double* di = &delta.data[i * out];
      double* dxi = &dx.data[i * in];
      for (std::size_t k = 0; k < in; ++k) {
        const double* wk = &w[k * out];
        double acc = 0.0;
        for (std::size_t j = 0; j < out; ++j) acc += wk[j] * di[j];
        dxi[k] = acc;
      }
    }
    delta = std::move(dx);
  }
  result.input_grad = std::move(delta);
  return result;
}

ParamBlock sgd_step(const ParamBlock& params, const ParamBlock& grads, double eta) {
  require(params.same_shape(grads), "gradient shape does not match parameters");
  require(eta > 0.0, "learning rate must be positive");
  ParamBlock out = params;
  auto dst = out.values();
  const auto g = grads.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= eta * g[i];
  return out;
}

LossGradient full_loss_and_grad(const ParamBlock& params, const Batch& batch) {
  auto fwd = forward_partial(params, batch.inputs);
  auto head = loss_and_grad_head(fwd.outputs, batch.labels);
  auto back = backward_partial(params, fwd.cache, head.dlogits);
  return {head.loss, std::move(back.grads)};
}

std::vector<int> argmax_rows(const Matrix& logits) {
  std::vector<int> out(logits.rows);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    const auto row = logits.row(i);
    out[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

}  // namespace sflga::nn
