#include "sflga/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>

#include "sflga/error.hpp"

namespace sflga::data {

nn::Batch Dataset::take(std::span<const std::size_t> indices) const {
  nn::Batch b;
  b.inputs = nn::Matrix(indices.size(), inputs.cols);
  b.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    require(src < size(), "sample index out of range");
    const auto row = inputs.row(src);
    std::copy(row.begin(), row.end(), b.inputs.data.begin() + static_cast<std::ptrdiff_t>(i * inputs.cols));
    b.labels.push_back(labels[src]);
  }
  return b;
}

nn::Batch Dataset::all() const { return {inputs, labels}; }

double standard_normal(Rng& rng) {
  // Box-Muller, one value per call.
  const double u1 = 1.0 - uniform01(rng);  // (0, 1]
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double gamma_variate(Rng& rng, double shape) {
  require(shape > 0.0, "gamma shape must be positive");
  if (shape < 1.0) {
    const double u = 1.0 - uniform01(rng);
    return gamma_variate(rng, shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  while (true) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = standard_normal(rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = 1.0 - uniform01(rng);
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
  }
}

std::vector<double> dirichlet(Rng& rng, double concentration, int k) {
  require(k >= 1, "dirichlet needs at least one category");
  std::vector<double> p(static_cast<std::size_t>(k));
  double total = 0.0;
  for (double& x : p) {
    x = gamma_variate(rng, concentration);
    total += x;
  }
  if (!(total > 0.0)) {
    // Every draw underflowed (tiny concentration): put all mass on one class.
    std::fill(p.begin(), p.end(), 0.0);
    p[uniform_index(rng, p.size())] = 1.0;
    return p;
  }
  for (double& x : p) x /= total;
  return p;
}

std::vector<std::size_t> permutation(Rng& rng, std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
  }
  return idx;
}

Dataset gaussian_blobs(const BlobSpec& spec, std::size_t samples, std::uint64_t mean_seed,
                       std::uint64_t sample_seed) {
  require(spec.dim > 0 && spec.classes >= 1, "blob spec needs positive dim and classes");
  Rng mean_rng(mean_seed);
  nn::Matrix means(static_cast<std::size_t>(spec.classes), spec.dim);
  for (double& m : means.data) m = spec.separation * standard_normal(mean_rng);

  Rng rng(sample_seed);
  Dataset d;
  d.classes = spec.classes;
  d.inputs = nn::Matrix(samples, spec.dim);
  std::vector<int> labels(samples);
  for (std::size_t i = 0; i < samples; ++i) labels[i] = static_cast<int>(i % static_cast<std::size_t>(spec.classes));
  const auto order = permutation(rng, samples);
  for (std::size_t i = 0; i < samples; ++i) d.labels.push_back(labels[order[i]]);
  for (std::size_t i = 0; i < samples; ++i) {
    const auto mu = means.row(static_cast<std::size_t>(d.labels[i]));
    for (std::size_t j = 0; j < spec.dim; ++j) {
      d.inputs(i, j) = mu[j] + spec.noise * standard_normal(rng);
    }
  }
  return d;
}

namespace {

std::uint32_t be32(std::string_view bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(bytes[at + i]);
  return v;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

nn::Matrix parse_idx_images(std::string_view bytes) {
  if (bytes.size() < 16) fail(ErrorCode::Parse, "IDX image file is truncated");
  const std::uint32_t magic = be32(bytes, 0);
  if (magic != 2051) {
    fail(ErrorCode::Parse, "bad IDX image magic " + std::to_string(magic) + " (want 2051)");
  }
  const std::size_t count = be32(bytes, 4);
  const std::size_t rows = be32(bytes, 8);
  const std::size_t cols = be32(bytes, 12);
  const std::size_t pixels = rows * cols;
  if (pixels == 0) fail(ErrorCode::Parse, "IDX images have zero size");
  if ((bytes.size() - 16) / pixels < count || bytes.size() - 16 != count * pixels) {
    fail(ErrorCode::Parse, "IDX image file is truncated or has trailing bytes");
  }
  nn::Matrix m(count, pixels);
  for (std::size_t i = 0; i < count * pixels; ++i) {
    m.data[i] = static_cast<unsigned char>(bytes[16 + i]) / 255.0;
  }
  return m;
}

std::vector<int> parse_idx_labels(std::string_view bytes) {
  if (bytes.size() < 8) fail(ErrorCode::Parse, "IDX label file is truncated");
  const std::uint32_t magic = be32(bytes, 0);
  if (magic != 2049) {
    fail(ErrorCode::Parse, "bad IDX label magic " + std::to_string(magic) + " (want 2049)");
  }
  const std::size_t count = be32(bytes, 4);
  if (bytes.size() - 8 != count) {
    fail(ErrorCode::Parse, "IDX label file is truncated or has trailing bytes");
  }
  std::vector<int> labels(count);
  for (std::size_t i = 0; i < count; ++i) labels[i] = static_cast<unsigned char>(bytes[8 + i]);
  return labels;
}

Dataset read_idx(const std::string& images_path, const std::string& labels_path, int classes) {
  Dataset d;
  d.inputs = parse_idx_images(slurp(images_path));
  d.labels = parse_idx_labels(slurp(labels_path));
  d.classes = classes;
  if (d.inputs.rows != d.labels.size()) {
    fail(ErrorCode::Parse, "IDX image count " + std::to_string(d.inputs.rows) +
                               " != label count " + std::to_string(d.labels.size()));
  }
  for (int l : d.labels) {
    if (l >= classes) fail(ErrorCode::Parse, "IDX label " + std::to_string(l) + " >= class count");
  }
  return d;
}

Dataset subsample(const Dataset& d, std::size_t count, Rng& rng) {
  require(count <= d.size(), "cannot subsample more samples than available");
  auto order = permutation(rng, d.size());
  order.resize(count);
  auto b = d.take(order);
  return {std::move(b.inputs), std::move(b.labels), d.classes};
}

Partition partition_iid(std::size_t samples, std::span<const std::size_t> sizes, Rng& rng) {
  const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  require(total <= samples, "client sizes exceed the dataset");
  const auto order = permutation(rng, samples);
  Partition parts;
  std::size_t at = 0;
  for (std::size_t s : sizes) {
    parts.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(at),
                       order.begin() + static_cast<std::ptrdiff_t>(at + s));
    at += s;
  }
  return parts;
}

LabelSkew partition_label_skew(std::span<const int> labels, int classes,
                               std::span<const std::size_t> sizes, double concentration,
                               Rng& rng) {
  require(classes >= 1, "need at least one class");
  require(concentration > 0.0, "concentration must be positive");
  const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  require(total <= labels.size(), "client sizes exceed the dataset");

  // Per-class pools in random order.
  std::vector<std::vector<std::size_t>> pools(static_cast<std::size_t>(classes));
  for (std::size_t i : permutation(rng, labels.size())) {
    require(labels[i] >= 0 && labels[i] < classes, "label out of range");
    pools[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  LabelSkew out;
  for (std::size_t quota : sizes) {
    auto p = dirichlet(rng, concentration, classes);
    out.proportions.push_back(p);
    std::vector<std::size_t> mine;
    mine.reserve(quota);
    while (mine.size() < quota) {
      double mass = 0.0;
      for (std::size_t k = 0; k < p.size(); ++k) {
        if (pools[k].empty()) p[k] = 0.0;
        mass += p[k];
      }
      if (!(mass > 0.0)) {
        // The mix only covers exhausted classes; fall back to what is left.
        for (std::size_t k = 0; k < p.size(); ++k) p[k] = pools[k].empty() ? 0.0 : 1.0;
        mass = std::accumulate(p.begin(), p.end(), 0.0);
      }
      double u = uniform01(rng) * mass;
      std::size_t k = 0;
      while (k + 1 < p.size() && (p[k] == 0.0 || u >= p[k])) {
        u -= p[k];
        ++k;
      }
      if (pools[k].empty()) {
        // Rounding pushed u past the last non-empty class.
        k = static_cast<std::size_t>(std::find_if(pools.rbegin(), pools.rend(),
                                                  [](const auto& v) { return !v.empty(); }) -
                                     pools.rbegin());
        k = pools.size() - 1 - k;
      }
      mine.push_back(pools[k].back());
      pools[k].pop_back();
    }
    out.parts.push_back(std::move(mine));
  }
  return out;
}

}  // namespace sflga::data
