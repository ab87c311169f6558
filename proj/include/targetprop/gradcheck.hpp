#pragma once

#include "targetprop/rules.hpp"

namespace targetprop {

struct GradCheckReport {
  double max_rel_err = 0.0;
  // (block name, worst relative error in that block)
  std::vector<std::pair<std::string, double>> blocks;
};

/// Analytic gradients vs. central finite differences (step 1e-5) on a tiny
/// 4-6-3 tanh/softmax network. Relative error uses a denominator floor so
/// near-zero entries compare absolutely.

/// Full backpropagated cross-entropy gradient for every forward parameter.
GradCheckReport gradcheck_bp(std::uint64_t seed);

/// Per-layer local losses: squared distance to a fixed target for hidden
/// layers (inputs pinned), task loss for the output layer.
GradCheckReport gradcheck_forward_loss(std::uint64_t seed);

/// Reconstruction loss gradients for the inverse parameters with a pinned
/// noise draw.
GradCheckReport gradcheck_inverse_loss(std::uint64_t seed, InverseLossMode mode);

/// The gradient step hidden inside the penultimate target: (h - target)/alpha
/// must equal the finite-difference loss gradient w.r.t. the penultimate
/// activation.
GradCheckReport gradcheck_dtp_penultimate(std::uint64_t seed);

/// With alpha_mix = 1 the local-loss gradients must reproduce backprop:
/// hidden blocks carry exactly twice the BP gradient (squared-loss factor),
/// the output block is identical. Compared directly, not via differences.
GradCheckReport gradcheck_hybrid(std::uint64_t seed);

}  // namespace targetprop
