// Criterion 3: locally-connected forward against brute-force convolution and
// the adjoint identity of the transposed operation.
#include <cmath>
#include <sstream>

#include "acceptance_util.hpp"

using namespace targetprop;

namespace {

Tensor brute_force_conv(const LcSpec& s, const Tensor& w, const Tensor& x) {
  const std::size_t batch = x.cols();
  Tensor y({s.out_dim(), batch});
  for (std::size_t oy = 0; oy < s.out_h(); ++oy)
    for (std::size_t ox = 0; ox < s.out_w(); ++ox)
      for (std::size_t oc = 0; oc < s.out_c; ++oc)
        for (std::size_t b = 0; b < batch; ++b) {
          double acc = 0.0;
          for (std::size_t ky = 0; ky < s.k_h; ++ky)
            for (std::size_t kx = 0; kx < s.k_w; ++kx)
              for (std::size_t ic = 0; ic < s.in_c; ++ic) {
                const long iy = long(oy * s.stride + ky) - s.pad_top();
                const long ix = long(ox * s.stride + kx) - s.pad_left();
                if (iy < 0 || iy >= long(s.in_h) || ix < 0 || ix >= long(s.in_w)) continue;
                const std::size_t wi =
                    s.tied ? ((oc * s.k_h + ky) * s.k_w + kx) * s.in_c + ic
                           : ((((oy * s.out_w() + ox) * s.out_c + oc) * s.k_h + ky) * s.k_w +
                              kx) * s.in_c + ic;
                const std::size_t ii = (std::size_t(iy) * s.in_w + std::size_t(ix)) * s.in_c + ic;
                acc += w[wi] * x.at(ii, b);
              }
          y.at((oy * s.out_w() + ox) * s.out_c + oc, b) = acc;
        }
  return y;
}

double dot(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

int main() {
  acceptance::Gate gate;
  const auto t0 = std::chrono::steady_clock::now();
  SeededRng rng(2024);

  // Tied-weight forward vs. an independent direct convolution on 8x8x2.
  double worst_fwd = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    LcSpec s;
    s.in_h = 8; s.in_w = 8; s.in_c = 2;
    s.k_h = s.k_w = 3;
    s.stride = 1 + trial % 2;
    s.out_c = 4;
    s.tied = true;
    Tensor w = sample_gaussian(rng, s.weight_shape(), 1.0);
    Tensor x = sample_gaussian(rng, {s.in_dim(), 3}, 1.0);
    Tensor fast = lc_linear(s, w, nullptr, x);
    Tensor slow = brute_force_conv(s, w, x);
    for (std::size_t i = 0; i < fast.size(); ++i)
      worst_fwd = std::max(worst_fwd, std::abs(fast[i] - slow[i]));
  }

  // Adjoint identity <y, A x> = <A^T y, x> over 100 random geometries.
  double worst_adj = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    LcSpec s;
    s.in_h = 3 + rng.next_u64() % 8;
    s.in_w = 3 + rng.next_u64() % 8;
    s.in_c = 1 + rng.next_u64() % 3;
    s.k_h = s.k_w = 1 + rng.next_u64() % 4;
    s.stride = 1 + rng.next_u64() % 3;
    s.out_c = 1 + rng.next_u64() % 5;
    s.tied = trial % 3 == 0;
    Tensor w = sample_gaussian(rng, s.weight_shape(), 1.0);
    Tensor x = sample_gaussian(rng, {s.in_dim(), 2}, 1.0);
    Tensor y = sample_gaussian(rng, {s.out_dim(), 2}, 1.0);
    const double lhs = dot(y, lc_linear(s, w, nullptr, x));
    const double rhs = dot(lc_transposed(s, w, y), x);
    worst_adj = std::max(worst_adj, std::abs(lhs - rhs) / std::max({std::abs(lhs), std::abs(rhs), 1.0}));
  }

  const double elapsed = acceptance::seconds_since(t0);
  std::ostringstream detail;
  detail << "forward abs err " << worst_fwd << ", adjoint rel err " << worst_adj << ", "
         << elapsed << " s";
  gate.report(3, "locally_connected",
              worst_fwd < 1e-12 && worst_adj < 1e-9 && elapsed < 10.0, detail.str());
  return gate.exit_code();
}
