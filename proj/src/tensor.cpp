#include "targetprop/tensor.hpp"

#include <algorithm>
#include <cblas.h>
#include <cmath>
#include <numeric>
#include <sstream>

extern "C" void openblas_set_num_threads(int);

namespace targetprop {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("zero-sized dimension in tensor shape");
    n *= d;
  }
  return n;
}

// GEMM must stay single-threaded so accumulation order is fixed.
struct BlasInit {
  BlasInit() { openblas_set_num_threads(1); }
};
const BlasInit blas_init;

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_product(shape_))
    throw DimensionError("data length does not match shape " + shape_str());
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
  os << "]";
  return os.str();
}

Tensor& Tensor::operator+=(const Tensor& other) {
  if (!same_shape(other))
    throw DimensionError("shape mismatch in add: " + shape_str() + " vs " + other.shape_str());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  if (!same_shape(other))
    throw DimensionError("shape mismatch in sub: " + shape_str() + " vs " + other.shape_str());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Tensor operator+(Tensor a, const Tensor& b) { a += b; return a; }
Tensor operator-(Tensor a, const Tensor& b) { a -= b; return a; }
Tensor operator*(Tensor a, double s) { a *= s; return a; }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw DimensionError("matmul expects 2-d tensors, got " + a.shape_str() + " and " + b.shape_str());
  if (a.cols() != b.rows())
    throw DimensionError("matmul inner dimensions disagree: " + a.shape_str() + " x " + b.shape_str());
  Tensor c({a.rows(), b.cols()});
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans,
              static_cast<int>(a.rows()), static_cast<int>(b.cols()), static_cast<int>(a.cols()),
              1.0, a.data(), static_cast<int>(a.cols()),
              b.data(), static_cast<int>(b.cols()),
              0.0, c.data(), static_cast<int>(c.cols()));
  return c;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose expects a 2-d tensor, got " + a.shape_str());
  Tensor t({a.cols(), a.rows()});
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) t.at(c, r) = a.at(r, c);
  return t;
}

Tensor tanh_map(const Tensor& x) {
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(y[i]);
  return y;
}

Tensor tanh_deriv(const Tensor& pre_activation) {
  Tensor y = pre_activation;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double t = std::tanh(y[i]);
    y[i] = 1.0 - t * t;
  }
  return y;
}

Tensor softmax(const Tensor& logits) {
  Tensor out = logits;
  const std::size_t rows = logits.rank() == 2 ? logits.rows() : logits.size();
  const std::size_t cols = logits.rank() == 2 ? logits.cols() : 1;
  for (std::size_t c = 0; c < cols; ++c) {
    double mx = -INFINITY;
    for (std::size_t r = 0; r < rows; ++r) mx = std::max(mx, out[r * cols + c]);
    double sum = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      const double e = std::exp(out[r * cols + c] - mx);
      out[r * cols + c] = e;
      sum += e;
    }
    for (std::size_t r = 0; r < rows; ++r) out[r * cols + c] /= sum;
  }
  return out;
}

namespace {
std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}
}  // namespace

SeededRng::SeededRng(std::uint64_t seed) : state_(seed), seed_(seed) {}

std::uint64_t SeededRng::next_u64() { return splitmix64(state_); }

double SeededRng::next_uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::next_gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  while (u1 == 0.0) u1 = next_uniform();
  const double u2 = next_uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

SeededRng SeededRng::child(std::uint64_t stream) const {
  // Hash (seed, stream) through splitmix so children are independent of the
  // parent's current position.
  std::uint64_t s = seed_;
  std::uint64_t h = splitmix64(s);
  s = h ^ (stream + 0x9E3779B97F4A7C15ULL);
  return SeededRng(splitmix64(s));
}

Tensor sample_gaussian(SeededRng& rng, std::vector<std::size_t> shape, double sigma) {
  if (sigma < 0.0) throw std::invalid_argument("sample_gaussian: sigma must be nonnegative");
  Tensor t(std::move(shape));
  if (sigma == 0.0) return t;
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = sigma * rng.next_gaussian();
  return t;
}

Tensor glorot_uniform(SeededRng& rng, std::size_t fan_in, std::size_t fan_out,
                      std::vector<std::size_t> shape) {
  if (fan_in == 0 || fan_out == 0)
    throw std::invalid_argument("glorot_uniform: fan_in and fan_out must be positive");
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = bound * (2.0 * rng.next_uniform() - 1.0);
  return t;
}

}  // namespace targetprop
