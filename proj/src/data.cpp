#include "targetprop/data.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>

namespace targetprop {

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& path, std::size_t offset) {
  unsigned char buf[4];
  if (!in.read(reinterpret_cast<char*>(buf), 4))
    throw FormatError(path + ": truncated at offset " + std::to_string(offset));
  return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
         (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

std::ifstream open_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path + ": cannot open");
  return in;
}

}  // namespace

Dataset Dataset::subset(std::size_t count) const {
  if (count == 0 || count >= n) return *this;
  Dataset out = *this;
  out.n = count;
  out.images.resize(count * sample_dim());
  out.labels.resize(count);
  return out;
}

Dataset load_mnist(const std::string& image_path, const std::string& label_path) {
  std::ifstream imgs = open_binary(image_path);
  if (read_be32(imgs, image_path, 0) != 0x00000803)
    throw FormatError(image_path + ": bad magic at offset 0 (want 0x00000803)");
  const std::uint32_t n = read_be32(imgs, image_path, 4);
  const std::uint32_t rows = read_be32(imgs, image_path, 8);
  const std::uint32_t cols = read_be32(imgs, image_path, 12);

  std::ifstream labs = open_binary(label_path);
  if (read_be32(labs, label_path, 0) != 0x00000801)
    throw FormatError(label_path + ": bad magic at offset 0 (want 0x00000801)");
  const std::uint32_t n_labels = read_be32(labs, label_path, 4);
  if (n != n_labels)
    throw FormatError(image_path + ": image count " + std::to_string(n) +
                      " does not match label count " + std::to_string(n_labels));

  Dataset d;
  d.n = n;
  d.h = rows;
  d.w = cols;
  d.c = 1;
  d.num_classes = 10;
  d.images.resize(std::size_t(n) * rows * cols);
  d.labels.resize(n);
  std::vector<unsigned char> buf(std::size_t(rows) * cols);
  for (std::uint32_t i = 0; i < n; ++i) {
    if (!imgs.read(reinterpret_cast<char*>(buf.data()), buf.size()))
      throw FormatError(image_path + ": truncated at offset " +
                        std::to_string(16 + std::size_t(i) * buf.size()));
    for (std::size_t j = 0; j < buf.size(); ++j)
      d.images[std::size_t(i) * buf.size() + j] = buf[j] / 255.0;
    int lab = labs.get();
    if (lab == EOF)
      throw FormatError(label_path + ": truncated at offset " + std::to_string(8 + i));
    d.labels[i] = lab;
  }
  return d;
}

Dataset load_cifar10(const std::vector<std::string>& batch_paths) {
  constexpr std::size_t kRecord = 3073;
  constexpr std::size_t kPlane = 1024;
  Dataset d;
  d.h = 32;
  d.w = 32;
  d.c = 3;
  d.num_classes = 10;
  std::vector<unsigned char> rec(kRecord);
  for (const std::string& path : batch_paths) {
    std::ifstream in = open_binary(path);
    in.seekg(0, std::ios::end);
    const std::size_t bytes = static_cast<std::size_t>(in.tellg());
    if (bytes % kRecord != 0)
      throw FormatError(path + ": size " + std::to_string(bytes) +
                        " is not a multiple of the 3073-byte record");
    in.seekg(0);
    const std::size_t count = bytes / kRecord;
    d.images.reserve(d.images.size() + count * 3072);
    for (std::size_t i = 0; i < count; ++i) {
      if (!in.read(reinterpret_cast<char*>(rec.data()), kRecord))
        throw FormatError(path + ": truncated at offset " + std::to_string(i * kRecord));
      if (rec[0] > 9)
        throw FormatError(path + ": label out of range at offset " + std::to_string(i * kRecord));
      d.labels.push_back(rec[0]);
      // Planes are stored R then G then B; interleave to (row, col, channel).
      for (std::size_t px = 0; px < kPlane; ++px)
        for (std::size_t ch = 0; ch < 3; ++ch)
          d.images.push_back(rec[1 + ch * kPlane + px] / 255.0);
    }
    d.n += count;
  }
  return d;
}

void augment(std::vector<double>& image, std::size_t h, std::size_t w, std::size_t c,
             const AugmentConfig& cfg, SeededRng& rng) {
  if (!cfg.enabled) return;
  if (rng.next_uniform() < cfg.flip_prob) {
    if (cfg.flip_vertical) {
      for (std::size_t r = 0; r < h / 2; ++r)
        for (std::size_t col = 0; col < w * c; ++col)
          std::swap(image[r * w * c + col], image[(h - 1 - r) * w * c + col]);
    } else {
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t col = 0; col < w / 2; ++col)
          for (std::size_t ch = 0; ch < c; ++ch)
            std::swap(image[(r * w + col) * c + ch], image[(r * w + (w - 1 - col)) * c + ch]);
    }
  }
  if (cfg.crop_pad > 0) {
    const std::size_t pad = cfg.crop_pad;
    // Offset of the crop window inside the zero-padded image.
    const std::size_t dy = rng.next_u64() % (2 * pad + 1);
    const std::size_t dx = rng.next_u64() % (2 * pad + 1);
    std::vector<double> out(image.size(), 0.0);
    for (std::size_t r = 0; r < h; ++r) {
      const long src_r = static_cast<long>(r + dy) - static_cast<long>(pad);
      if (src_r < 0 || src_r >= static_cast<long>(h)) continue;
      for (std::size_t col = 0; col < w; ++col) {
        const long src_c = static_cast<long>(col + dx) - static_cast<long>(pad);
        if (src_c < 0 || src_c >= static_cast<long>(w)) continue;
        for (std::size_t ch = 0; ch < c; ++ch)
          out[(r * w + col) * c + ch] = image[(src_r * w + src_c) * c + ch];
      }
    }
    image = std::move(out);
  }
}

Tensor one_hot(int label, int k) {
  if (label < 0 || label >= k)
    throw ContractError("one_hot: label " + std::to_string(label) + " outside [0, " +
                        std::to_string(k) + ")");
  Tensor q({static_cast<std::size_t>(k), 1});
  q[label] = 1.0;
  return q;
}

std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                              SeededRng& rng) {
  if (batch_size == 0) throw std::invalid_argument("batches: batch_size must be >= 1");
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  // Fisher-Yates with the seeded generator.
  for (std::size_t i = n; i > 1; --i)
    std::swap(perm[i - 1], perm[rng.next_u64() % i]);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    out.emplace_back(perm.begin() + start, perm.begin() + end);
  }
  return out;
}

Batch make_batch(const Dataset& data, const std::vector<std::size_t>& index,
                 const AugmentConfig* aug, SeededRng* rng) {
  const std::size_t dim = data.sample_dim();
  const std::size_t b = index.size();
  Batch batch;
  batch.x = Tensor({dim, b});
  batch.q = Tensor({static_cast<std::size_t>(data.num_classes), b});
  batch.labels.resize(b);
  std::vector<double> img(dim);
  for (std::size_t s = 0; s < b; ++s) {
    const double* src = data.image(index[s]);
    img.assign(src, src + dim);
    if (aug && aug->enabled && rng) augment(img, data.h, data.w, data.c, *aug, *rng);
    for (std::size_t r = 0; r < dim; ++r) batch.x.at(r, s) = img[r];
    const int label = data.labels[index[s]];
    batch.labels[s] = label;
    batch.q.at(static_cast<std::size_t>(label), s) = 1.0;
  }
  return batch;
}

}  // namespace targetprop
