#pragma once

#include <string>
#include <vector>

#include "targetprop/tensor.hpp"

namespace targetprop {

struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

/// Immutable image-classification dataset: N images of h x w x c doubles in
/// [0, 1], flattened (row, col, channel) per sample.
struct Dataset {
  std::vector<double> images;
  std::vector<int> labels;
  std::size_t n = 0, h = 0, w = 0, c = 0;
  int num_classes = 0;

  std::size_t sample_dim() const { return h * w * c; }
  const double* image(std::size_t i) const { return images.data() + i * sample_dim(); }

  /// First n samples (for desk-scale subset runs).
  Dataset subset(std::size_t count) const;
};

/// Big-endian IDX files (magics 0x00000803 / 0x00000801).
Dataset load_mnist(const std::string& image_path, const std::string& label_path);

/// CIFAR-10 binary batches: 3073-byte records, label byte then R/G/B planes.
Dataset load_cifar10(const std::vector<std::string>& batch_paths);

struct AugmentConfig {
  bool enabled = false;
  double flip_prob = 0.5;
  std::size_t crop_pad = 4;
  bool flip_vertical = true;  // top-to-bottom flip; false flips left-right
};

/// Random flip + zero-pad-and-crop of one flattened h x w x c image.
void augment(std::vector<double>& image, std::size_t h, std::size_t w, std::size_t c,
             const AugmentConfig& cfg, SeededRng& rng);

/// One-hot column vector of length k.
Tensor one_hot(int label, int k);

/// Seeded shuffled minibatch index sequence; the final short batch is kept.
std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                              SeededRng& rng);

/// Assembles columns [dim x B] and one-hot labels [k x B] for a batch.
struct Batch {
  Tensor x;
  Tensor q;
  std::vector<int> labels;
};
Batch make_batch(const Dataset& data, const std::vector<std::size_t>& index,
                 const AugmentConfig* aug = nullptr, SeededRng* rng = nullptr);

}  // namespace targetprop
