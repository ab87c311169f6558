#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace targetprop {

/// Dense row-major n-dimensional array of doubles. The universal value
/// carrier for activations, weights, biases and targets.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
  static Tensor matrix(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }
  static Tensor identity(std::size_t n);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  // 2-d accessors; valid when rank() == 2.
  std::size_t rows() const { return shape_.at(0); }
  std::size_t cols() const { return shape_.at(1); }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_str() const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double s);

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, double s);

/// Thrown when tensor shapes do not compose.
struct DimensionError : std::runtime_error {
  explicit DimensionError(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown when a caller violates an operation's contract.
struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& what) : std::runtime_error(what) {}
};

/// C = A * B for 2-d tensors. Deterministic: single-threaded GEMM with a
/// fixed internal blocking, bitwise reproducible run to run.
Tensor matmul(const Tensor& a, const Tensor& b);

/// B = Aᵀ for a 2-d tensor.
Tensor transpose(const Tensor& a);

Tensor tanh_map(const Tensor& x);
/// 1 - tanh(x)^2, evaluated from the pre-activation.
Tensor tanh_deriv(const Tensor& pre_activation);

/// Column-wise softmax with max subtraction. For a vector (rank 1 or a
/// single column) this is the ordinary softmax.
Tensor softmax(const Tensor& logits);

/// splitmix64-based generator. The stream is a function of the 64-bit seed
/// only, identical across platforms. Single-owner: never share across
/// threads; derive child seeds instead.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform draw in [0, 1) with 53 bits of precision.
  double next_uniform();
  /// Standard normal draw via Box-Muller (pairs cached).
  double next_gaussian();

  /// Deterministically derive an independent child generator.
  SeededRng child(std::uint64_t stream) const;

 private:
  std::uint64_t state_;
  std::uint64_t seed_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// i.i.d. N(0, sigma^2) entries; sigma = 0 yields zeros exactly.
Tensor sample_gaussian(SeededRng& rng, std::vector<std::size_t> shape, double sigma);

/// Uniform on [-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))].
Tensor glorot_uniform(SeededRng& rng, std::size_t fan_in, std::size_t fan_out,
                      std::vector<std::size_t> shape);

}  // namespace targetprop
