#pragma once

#include "targetprop/layers.hpp"

namespace targetprop {

enum class RuleKind { Bp, Fa, Dfa, Tp, Dtp, Sdtp, AoSdtp, Hybrid };
enum class InverseLossMode { NoisePreserving, Denoising };

struct RuleConfig {
  RuleKind kind = RuleKind::Bp;
  double alpha = 0.1;      // DTP penultimate target step
  double sigma = 0.1;      // inverse-training noise magnitude
  double alpha_mix = 0.5;  // hybrid convex combination
  std::size_t z_size = 0;  // AO-SDTP auxiliary output units
  InverseLossMode inverse_loss_mode = InverseLossMode::Denoising;

  bool is_tp_family() const {
    return kind == RuleKind::Tp || kind == RuleKind::Dtp || kind == RuleKind::Sdtp ||
           kind == RuleKind::AoSdtp || kind == RuleKind::Hybrid;
  }
};

RuleKind rule_kind_from_string(const std::string& name);
std::string to_string(RuleKind kind);

/// Per-layer targets indexed like the tape: targets[l] pairs tape.h[l].
/// Entries below the first populated index (and [0]) stay empty.
struct TargetStack {
  std::vector<Tensor> targets;
};

/// Mean over batch columns of -log p[label]; p columns must sum to 1 within
/// 1e-6 and q columns must be one-hot. p is clamped below by 1e-12.
double cross_entropy(const Tensor& p, const Tensor& q);

/// p - q: the loss gradient at the output logits for softmax + cross-entropy.
Tensor output_delta(const Tensor& p, const Tensor& q);

/// Mean over batch of ||y - target||^2.
double squared_error(const Tensor& y, const Tensor& target);

// Gradients are returned flat, aligned with Network::forward_params() (or
// inverse_params()). e_task is the un-normalized per-sample loss delta at the
// output pre-activation (p - q for classifiers); the 1/batch factor is
// applied internally.
std::vector<Tensor> bp_backward(const Network& net, const ActivationTape& tape,
                                const Tensor& e_task);
std::vector<Tensor> fa_backward(const Network& net, const ActivationTape& tape,
                                const Tensor& e_task);
std::vector<Tensor> dfa_backward(const Network& net, const ActivationTape& tape,
                                 const Tensor& e_task);

/// Vanilla TP: targets propagate purely through the learned inverses.
TargetStack tp_targets(const Network& net, const ActivationTape& tape, const Tensor& target_L);

/// DTP: gradient-based penultimate target (one exact backward step through
/// the output layer), difference-corrected targets below.
TargetStack dtp_targets(const Network& net, const ActivationTape& tape, const Tensor& e_task,
                        double alpha);

/// SDTP: output target is the loss argmin (the label distribution, or the
/// clean input for autoencoders); difference targets everywhere else. Reads
/// no forward weights.
TargetStack sdtp_targets(const Network& net, const ActivationTape& tape, const Tensor& target_L);

/// AO-SDTP: like SDTP but the output target keeps the realized auxiliary
/// features z and replaces only the class-distribution block with q.
TargetStack ao_sdtp_targets(const Network& net, const ActivationTape& tape, const Tensor& q);

/// One backward step of the hybrid rule: a convex combination of the exact
/// Jacobian-transpose (BP) target and the SDTP difference target.
Tensor hybrid_target_step(const Network& net, const ActivationTape& tape, std::size_t l,
                          const Tensor& down_target, double alpha_mix);

/// Full hybrid stack: penultimate target mixes the gradient step with the
/// difference target, lower layers recurse through hybrid_target_step.
TargetStack hybrid_targets(const Network& net, const ActivationTape& tape, const Tensor& e_task,
                           const Tensor& target_L, double alpha_mix);

/// Local forward losses ||f(h_l) - target_{l+1}||^2 for hidden layers, task
/// delta rule for the output layer.
std::vector<Tensor> forward_loss_grads(const Network& net, const ActivationTape& tape,
                                       const TargetStack& targets, const Tensor& e_task);

struct InverseLossGrads {
  std::vector<Tensor> grads;  // aligned with Network::inverse_params()
  double loss = 0.0;          // mean reconstruction loss across layers
};

/// Inverse (reconstruction) loss gradients for one inverse layer with a
/// pinned noise draw; `noise` has the shape of tape.h[l].
InverseLossGrads inverse_loss_layer(const Network& net, const ActivationTape& tape,
                                    std::size_t l, const Tensor& noise, InverseLossMode mode);

/// Inverse loss gradients for all inverses, one fresh noise draw per layer.
InverseLossGrads inverse_loss_grads(const Network& net, const ActivationTape& tape,
                                    double sigma, InverseLossMode mode, SeededRng& rng);

}  // namespace targetprop
