#include <doctest.h>

#include <cmath>
#include <numeric>

#include "sflga/error.hpp"
#include "sflga/nn.hpp"
#include "support.hpp"

using namespace sflga;
using nn::Activation;
using nn::Direction;
using nn::NetworkSpec;

namespace {

// Straightforward reference: per-sample loops, no shared code with nn.cpp.
double reference_loss(const NetworkSpec& spec, std::span<const double> w, const nn::Batch& b) {
  double total = 0.0;
  for (std::size_t s = 0; s < b.size(); ++s) {
    std::vector<double> x(b.inputs.row(s).begin(), b.inputs.row(s).end());
    std::size_t off = 0;
    for (int l = 0; l < spec.layers(); ++l) {
      const std::size_t in = spec.layer_dims[l];
      const std::size_t out = spec.layer_dims[l + 1];
      std::vector<double> z(out, 0.0);
      for (std::size_t j = 0; j < out; ++j) {
        double acc = w[off + in * out + j];
        for (std::size_t i = 0; i < in; ++i) acc += x[i] * w[off + i * out + j];
        z[j] = acc;
      }
      off += in * out + out;
      if (spec.activations[l] == Activation::Relu) {
        for (double& v : z) v = std::max(0.0, v);
      }
      x = std::move(z);
    }
    const double mx = *std::max_element(x.begin(), x.end());
    double se = 0.0;
    for (double v : x) se += std::exp(v - mx);
    total += -(x[b.labels[s]] - mx - std::log(se));
  }
  return total / static_cast<double>(b.size());
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("parameter counts and flops follow the layer sums") {
  const auto spec = NetworkSpec::classifier({784, 128, 10});
  CHECK(nn::param_count(spec, 1, 2) == 784 * 128 + 128 + 128 * 10 + 10);
  CHECK(nn::param_count(spec, 1, 1) == 784 * 128 + 128);
  CHECK(nn::flops_per_sample(spec, 1, 1, Direction::Forward) == doctest::Approx(2.0 * 784 * 128));
  CHECK(nn::flops_per_sample(spec, 2, 2, Direction::Backward) == doctest::Approx(4.0 * 128 * 10));
  CHECK(spec.cut_dim(1) == 128);
}

TEST_CASE("bad specs are rejected") {
  NetworkSpec spec;
  spec.layer_dims = {3};
  CHECK_THROWS_AS(spec.validate(), Error);
  CHECK_THROWS_AS(NetworkSpec::classifier({3, 0, 2}), Error);
}

TEST_CASE("glorot init stays inside its bound with zero biases") {
  const auto spec = NetworkSpec::classifier({20, 30, 5});
  const auto p = nn::init_params(spec, 7);
  for (int l = 1; l <= 2; ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(p.in_dim(l) + p.out_dim(l)));
    for (double w : p.weights(l)) CHECK(std::abs(w) <= bound);
    for (double b : p.bias(l)) CHECK(b == 0.0);
  }
  CHECK(nn::init_params(spec, 7) == p);
  CHECK_FALSE(nn::init_params(spec, 8) == p);
}

TEST_CASE("softmax cross-entropy on equal logits is log K") {
  nn::Matrix logits(4, 5);
  const std::vector<int> labels{0, 1, 2, 4};
  const auto head = nn::loss_and_grad_head(logits, labels);
  CHECK(head.loss == doctest::Approx(std::log(5.0)));
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 5; ++c) {
      const double expect = (0.2 - (static_cast<int>(c) == labels[r] ? 1.0 : 0.0)) / 4.0;
      CHECK(head.dlogits(r, c) == doctest::Approx(expect));
    }
  }
}

TEST_CASE("forward matches the reference loss") {
  const auto spec = NetworkSpec::classifier({6, 5, 4, 3});
  const auto p = nn::init_params(spec, 3);
  const auto b = test::random_batch(9, 6, 3, 4);
  const auto r = nn::full_loss_and_grad(p, b);
  CHECK(r.loss == doctest::Approx(reference_loss(spec, p.values(), b)).epsilon(1e-12));
}

TEST_CASE("split forward and chained backward are bit-exact for every cut") {
  const auto spec = NetworkSpec::classifier({7, 6, 5, 4, 3});
  const auto full = nn::init_params(spec, 11);
  const auto b = test::random_batch(5, 7, 3, 12);
  const auto whole = nn::forward_partial(full, b.inputs);
  const auto head = nn::loss_and_grad_head(whole.outputs, b.labels);
  const auto whole_bwd = nn::backward_partial(full, whole.cache, head.dlogits);
  for (int v = 1; v < spec.layers(); ++v) {
    const auto [client, server] = nn::split(full, v);
    const auto cf = nn::forward_partial(client, b.inputs);
    const auto sf = nn::forward_partial(server, cf.outputs);
    CHECK(sf.outputs == whole.outputs);
    const auto sh = nn::loss_and_grad_head(sf.outputs, b.labels);
    const auto sb = nn::backward_partial(server, sf.cache, sh.dlogits);
    const auto cb = nn::backward_partial(client, cf.cache, sb.input_grad);
    CHECK(cb.grads.concat(sb.grads) == whole_bwd.grads);
    CHECK(client.concat(server) == full);
  }
}

TEST_CASE("gradients match central differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const std::size_t in = 2 + uniform_index(rng, 5);
    const std::size_t hid = 2 + uniform_index(rng, 5);
    const int classes = 2 + static_cast<int>(uniform_index(rng, 3));
    const auto spec = NetworkSpec::classifier({in, hid, static_cast<std::size_t>(classes)});
    auto p = nn::init_params(spec, seed + 100);
    const auto b = test::random_batch(6, in, classes, seed + 200);
    const auto g = nn::full_loss_and_grad(p, b);
    const double h = 1e-6;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double keep = p.values()[i];
      p.values()[i] = keep + h;
      const double up = reference_loss(spec, p.values(), b);
      p.values()[i] = keep - h;
      const double down = reference_loss(spec, p.values(), b);
      p.values()[i] = keep;
      const double fd = (up - down) / (2.0 * h);
      const double an = g.grads.values()[i];
      CHECK(std::abs(fd - an) <= 1e-4 * std::max(1.0, std::abs(fd) + std::abs(an)));
    }
  }
}

TEST_CASE("sgd step subtracts eta times the gradient") {
  const auto spec = NetworkSpec::linear({2, 2});
  auto p = nn::init_params(spec, 1);
  auto g = p.zeros_like();
  for (std::size_t i = 0; i < g.size(); ++i) g.values()[i] = static_cast<double>(i) - 2.0;
  const auto next = nn::sgd_step(p, g, 0.5);
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(next.values()[i] == p.values()[i] - 0.5 * g.values()[i]);
  }
}

TEST_CASE("slice and concat round-trip") {
  const auto spec = NetworkSpec::classifier({3, 4, 5, 2});
  const auto p = nn::init_params(spec, 2);
  CHECK(p.slice(1, 1).concat(p.slice(2, 3)) == p);
  CHECK(p.slice(2, 2).first_layer() == 2);
  CHECK_THROWS_AS(p.slice(1, 1).concat(p.slice(3, 3)), Error);
}

TEST_CASE("argmax picks the first maximum") {
  nn::Matrix m(2, 3);
  m(0, 1) = 1.0;
  m(0, 2) = 1.0;
  m(1, 0) = -1.0;
  CHECK(nn::argmax_rows(m) == std::vector<int>{1, 1});
}

}
