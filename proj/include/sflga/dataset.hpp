#pragma once

// Datasets: synthetic Gaussian blobs, big-endian IDX files, and the client
// partitioners (iid shuffle and Dirichlet label skew).

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sflga/nn.hpp"
#include "sflga/random.hpp"

namespace sflga::data {

struct Dataset {
  nn::Matrix inputs;
  std::vector<int> labels;
  int classes = 0;

  std::size_t size() const { return labels.size(); }
  nn::Batch take(std::span<const std::size_t> indices) const;
  nn::Batch all() const;
};

double standard_normal(Rng& rng);
// Marsaglia-Tsang; shape > 0.
double gamma_variate(Rng& rng, double shape);
std::vector<double> dirichlet(Rng& rng, double concentration, int k);
// Fisher-Yates over [0, n).
std::vector<std::size_t> permutation(Rng& rng, std::size_t n);

struct BlobSpec {
  std::size_t dim = 2;
  int classes = 2;
  double separation = 3.0;  // class means are separation * N(0, I)
  double noise = 1.0;       // per-coordinate standard deviation
};

// Class means come from `mean_seed`, samples from `sample_seed`, so a train
// and an eval split can share the same task.
Dataset gaussian_blobs(const BlobSpec& spec, std::size_t samples, std::uint64_t mean_seed,
                       std::uint64_t sample_seed);

// IDX parsing: images (magic 2051, u8 pixels scaled to [0, 1]) and labels
// (magic 2049).
nn::Matrix parse_idx_images(std::string_view bytes);
std::vector<int> parse_idx_labels(std::string_view bytes);
Dataset read_idx(const std::string& images_path, const std::string& labels_path,
                 int classes = 10);

// First `count` samples of a random permutation.
Dataset subsample(const Dataset& d, std::size_t count, Rng& rng);

using Partition = std::vector<std::vector<std::size_t>>;

// Uniform shuffle, then consecutive slices of the requested sizes.
Partition partition_iid(std::size_t samples, std::span<const std::size_t> sizes, Rng& rng);

struct LabelSkew {
  Partition parts;
  std::vector<std::vector<double>> proportions;  // drawn label mix per client
};

// Each client draws a label mix from Dirichlet(concentration) and fills its
// quota sample by sample from that mix; classes that run dry are dropped
// from the mix and the rest renormalized.
LabelSkew partition_label_skew(std::span<const int> labels, int classes,
                               std::span<const std::size_t> sizes, double concentration,
                               Rng& rng);

}  // namespace sflga::data
