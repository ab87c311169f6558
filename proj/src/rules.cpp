#include "targetprop/rules.hpp"

#include <cmath>

namespace targetprop {

namespace {

std::size_t batch_of(const Tensor& t) { return t.rank() == 2 ? t.cols() : 1; }

Tensor hadamard(Tensor a, const Tensor& b) {
  if (!a.same_shape(b))
    throw DimensionError("hadamard shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] *= b[i];
  return a;
}

void check_tape(const Network& net, const ActivationTape& tape) {
  if (tape.h.size() != net.depth() + 1 || tape.pre.size() != net.depth())
    throw ContractError("tape does not match network depth");
}

// Flattens per-layer grad blocks (built back to front) into forward order.
std::vector<Tensor> flatten_front_to_back(std::vector<std::vector<Tensor>>& by_layer) {
  std::vector<Tensor> flat;
  for (auto& blocks : by_layer)
    for (auto& g : blocks) flat.push_back(std::move(g));
  return flat;
}

}  // namespace

RuleKind rule_kind_from_string(const std::string& name) {
  if (name == "bp") return RuleKind::Bp;
  if (name == "fa") return RuleKind::Fa;
  if (name == "dfa") return RuleKind::Dfa;
  if (name == "tp") return RuleKind::Tp;
  if (name == "dtp") return RuleKind::Dtp;
  if (name == "sdtp") return RuleKind::Sdtp;
  if (name == "ao_sdtp") return RuleKind::AoSdtp;
  if (name == "hybrid") return RuleKind::Hybrid;
  throw ConfigError("unknown learning rule: " + name);
}

std::string to_string(RuleKind kind) {
  switch (kind) {
    case RuleKind::Bp: return "bp";
    case RuleKind::Fa: return "fa";
    case RuleKind::Dfa: return "dfa";
    case RuleKind::Tp: return "tp";
    case RuleKind::Dtp: return "dtp";
    case RuleKind::Sdtp: return "sdtp";
    case RuleKind::AoSdtp: return "ao_sdtp";
    case RuleKind::Hybrid: return "hybrid";
  }
  return "?";
}

double cross_entropy(const Tensor& p, const Tensor& q) {
  if (!p.same_shape(q))
    throw DimensionError("cross_entropy shape mismatch: " + p.shape_str() + " vs " +
                         q.shape_str());
  const std::size_t batch = batch_of(p);
  const std::size_t k = p.size() / batch;
  double total = 0.0;
  for (std::size_t c = 0; c < batch; ++c) {
    double sum = 0.0;
    std::size_t label = 0;
    for (std::size_t r = 0; r < k; ++r) {
      sum += p[r * batch + c];
      if (q[r * batch + c] > q[label * batch + c]) label = r;
    }
    if (std::abs(sum - 1.0) > 1e-6)
      throw ContractError("cross_entropy: p column is not normalized (sum " +
                          std::to_string(sum) + ")");
    total += -std::log(std::max(p[label * batch + c], 1e-12));
  }
  return total / static_cast<double>(batch);
}

Tensor output_delta(const Tensor& p, const Tensor& q) {
  if (!p.same_shape(q))
    throw DimensionError("output_delta shape mismatch: " + p.shape_str() + " vs " +
                         q.shape_str());
  return p - q;
}

double squared_error(const Tensor& y, const Tensor& target) {
  if (!y.same_shape(target))
    throw DimensionError("squared_error shape mismatch: " + y.shape_str() + " vs " +
                         target.shape_str());
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = y[i] - target[i];
    total += d * d;
  }
  return total / static_cast<double>(batch_of(y));
}

namespace {

// Shared BP/FA recursion; `transport` maps the delta at layer l's
// pre-activation to the delta at layer l's input.
template <typename Transport>
std::vector<Tensor> backward_recursion(const Network& net, const ActivationTape& tape,
                                       const Tensor& e_task, Transport&& transport) {
  check_tape(net, tape);
  const std::size_t depth = net.depth();
  const double inv_batch = 1.0 / static_cast<double>(batch_of(tape.h[0]));
  std::vector<std::vector<Tensor>> by_layer(depth);
  Tensor delta = e_task * inv_batch;
  for (std::size_t l = depth; l-- > 0;) {
    net.layers[l]->param_grads(delta, tape.h[l], by_layer[l]);
    if (l > 0) {
      Tensor d_h = transport(l, delta);
      delta = hadamard(std::move(d_h),
                       activation_deriv(net.layers[l - 1]->activation, tape.pre[l - 1]));
    }
  }
  return flatten_front_to_back(by_layer);
}

}  // namespace

std::vector<Tensor> bp_backward(const Network& net, const ActivationTape& tape,
                                const Tensor& e_task) {
  return backward_recursion(net, tape, e_task, [&](std::size_t l, const Tensor& d) {
    return net.layers[l]->transpose_apply(d);
  });
}

std::vector<Tensor> fa_backward(const Network& net, const ActivationTape& tape,
                                const Tensor& e_task) {
  if (net.fa_feedback.size() != net.depth())
    throw ConfigError("fa_backward: network has no feedback weights");
  return backward_recursion(net, tape, e_task, [&](std::size_t l, const Tensor& d) {
    if (!net.fa_feedback[l]) throw ConfigError("fa_backward: missing feedback for layer");
    return net.fa_feedback[l]->apply(d);
  });
}

std::vector<Tensor> dfa_backward(const Network& net, const ActivationTape& tape,
                                 const Tensor& e_task) {
  check_tape(net, tape);
  const std::size_t depth = net.depth();
  if (net.dfa_feedback.size() != depth - 1)
    throw ConfigError("dfa_backward: network has no direct feedback weights");
  const double inv_batch = 1.0 / static_cast<double>(batch_of(tape.h[0]));
  Tensor e = e_task * inv_batch;
  std::vector<std::vector<Tensor>> by_layer(depth);
  net.layers[depth - 1]->param_grads(e, tape.h[depth - 1], by_layer[depth - 1]);
  for (std::size_t j = 0; j + 1 < depth; ++j) {
    Tensor delta = hadamard(matmul(net.dfa_feedback[j], e),
                            activation_deriv(net.layers[j]->activation, tape.pre[j]));
    net.layers[j]->param_grads(delta, tape.h[j], by_layer[j]);
  }
  return flatten_front_to_back(by_layer);
}

namespace {

const InverseLayer& inverse_at(const Network& net, std::size_t l) {
  if (l >= net.inverses.size() || !net.inverses[l])
    throw ConfigError("learning rule requires an inverse for layer " + std::to_string(l + 1));
  return *net.inverses[l];
}

}  // namespace

TargetStack tp_targets(const Network& net, const ActivationTape& tape, const Tensor& target_L) {
  check_tape(net, tape);
  const std::size_t depth = net.depth();
  TargetStack stack;
  stack.targets.resize(depth + 1);
  stack.targets[depth] = target_L;
  for (std::size_t l = depth - 1; l >= 1; --l)
    stack.targets[l] = inverse_at(net, l).apply(stack.targets[l + 1]);
  return stack;
}

TargetStack sdtp_targets(const Network& net, const ActivationTape& tape, const Tensor& target_L) {
  check_tape(net, tape);
  const std::size_t depth = net.depth();
  TargetStack stack;
  stack.targets.resize(depth + 1);
  stack.targets[depth] = target_L;
  for (std::size_t l = depth - 1; l >= 1; --l) {
    const InverseLayer& g = inverse_at(net, l);
    // h_l - (g(h_{l+1}) - g(target_{l+1})): cancels exactly when the
    // downstream target equals the realized activation.
    Tensor diff = g.apply(tape.h[l + 1]) - g.apply(stack.targets[l + 1]);
    stack.targets[l] = tape.h[l] - diff;
  }
  return stack;
}

TargetStack ao_sdtp_targets(const Network& net, const ActivationTape& tape, const Tensor& q) {
  if (net.aux_z == 0 && q.size() != net.output_dim() * batch_of(q))
    throw ConfigError("ao_sdtp_targets: network has no auxiliary output split");
  const std::size_t batch = batch_of(q);
  const std::size_t o_rows = q.size() / batch;
  if (o_rows + net.aux_z != net.output_dim())
    throw ConfigError("ao_sdtp_targets: label rows do not match the output split");
  // Output target [q, z]: correct class distribution, realized aux features.
  Tensor target_L = tape.h.back();
  for (std::size_t r = 0; r < o_rows; ++r)
    for (std::size_t c = 0; c < batch; ++c) target_L[r * batch + c] = q[r * batch + c];
  return sdtp_targets(net, tape, target_L);
}

TargetStack dtp_targets(const Network& net, const ActivationTape& tape, const Tensor& e_task,
                        double alpha) {
  check_tape(net, tape);
  if (alpha <= 0.0) throw std::invalid_argument("dtp_targets: alpha must be positive");
  const std::size_t depth = net.depth();
  if (depth < 2) throw ConfigError("dtp_targets: network needs at least two layers");
  TargetStack stack;
  stack.targets.resize(depth + 1);
  // Penultimate target from one exact backward step through the output layer.
  Tensor grad = net.layers[depth - 1]->transpose_apply(e_task);
  stack.targets[depth - 1] = tape.h[depth - 1] - grad * alpha;
  for (std::size_t l = depth - 2; l >= 1; --l) {
    const InverseLayer& g = inverse_at(net, l);
    Tensor diff = g.apply(tape.h[l + 1]) - g.apply(stack.targets[l + 1]);
    stack.targets[l] = tape.h[l] - diff;
  }
  return stack;
}

Tensor hybrid_target_step(const Network& net, const ActivationTape& tape, std::size_t l,
                          const Tensor& down_target, double alpha_mix) {
  check_tape(net, tape);
  if (alpha_mix < 0.0 || alpha_mix > 1.0)
    throw std::invalid_argument("hybrid_target_step: alpha_mix must lie in [0, 1]");
  if (l + 1 >= net.depth())
    throw ContractError("hybrid_target_step: layer index out of range");
  const Layer& up = *net.layers[l];  // maps h_l to h_{l+1}
  Tensor diff = tape.h[l + 1] - down_target;
  Tensor mix({tape.h[l].rows(), tape.h[l].cols()});
  if (alpha_mix > 0.0) {
    Tensor bp_part =
        up.transpose_apply(hadamard(std::move(diff), activation_deriv(up.activation, tape.pre[l])));
    mix += bp_part * alpha_mix;
  }
  if (alpha_mix < 1.0) {
    const InverseLayer& g = inverse_at(net, l);
    Tensor tp_part = g.apply(tape.h[l + 1]) - g.apply(down_target);
    mix += tp_part * (1.0 - alpha_mix);
  }
  return tape.h[l] - mix;
}

TargetStack hybrid_targets(const Network& net, const ActivationTape& tape, const Tensor& e_task,
                           const Tensor& target_L, double alpha_mix) {
  check_tape(net, tape);
  const std::size_t depth = net.depth();
  if (depth < 2) throw ConfigError("hybrid_targets: network needs at least two layers");
  TargetStack stack;
  stack.targets.resize(depth + 1);
  stack.targets[depth] = target_L;
  Tensor mix({tape.h[depth - 1].rows(), tape.h[depth - 1].cols()});
  if (alpha_mix > 0.0)
    mix += net.layers[depth - 1]->transpose_apply(e_task) * alpha_mix;
  if (alpha_mix < 1.0) {
    const InverseLayer& g = inverse_at(net, depth - 1);
    mix += (g.apply(tape.h[depth]) - g.apply(target_L)) * (1.0 - alpha_mix);
  }
  stack.targets[depth - 1] = tape.h[depth - 1] - mix;
  for (std::size_t l = depth - 2; l >= 1; --l)
    stack.targets[l] = hybrid_target_step(net, tape, l, stack.targets[l + 1], alpha_mix);
  return stack;
}

std::vector<Tensor> forward_loss_grads(const Network& net, const ActivationTape& tape,
                                       const TargetStack& targets, const Tensor& e_task) {
  check_tape(net, tape);
  const std::size_t depth = net.depth();
  const double inv_batch = 1.0 / static_cast<double>(batch_of(tape.h[0]));
  std::vector<std::vector<Tensor>> by_layer(depth);
  for (std::size_t l = 0; l < depth; ++l) {
    Tensor delta;
    if (l == depth - 1) {
      delta = e_task * inv_batch;  // output layer trains on the task loss
    } else {
      if (targets.targets.size() <= l + 1 || targets.targets[l + 1].size() == 0)
        throw ContractError("forward_loss_grads: missing target for layer " +
                            std::to_string(l + 1));
      Tensor residual = tape.h[l + 1] - targets.targets[l + 1];
      delta = hadamard(std::move(residual),
                       activation_deriv(net.layers[l]->activation, tape.pre[l]));
      delta *= 2.0 * inv_batch;  // d/dθ of the squared norm, batch-averaged
    }
    net.layers[l]->param_grads(delta, tape.h[l], by_layer[l]);
  }
  return flatten_front_to_back(by_layer);
}

InverseLossGrads inverse_loss_layer(const Network& net, const ActivationTape& tape,
                                    std::size_t l, const Tensor& noise, InverseLossMode mode) {
  check_tape(net, tape);
  const InverseLayer& g = inverse_at(net, l);
  const Tensor& clean = tape.h[l];
  if (!noise.same_shape(clean))
    throw DimensionError("inverse_loss_layer: noise shape " + noise.shape_str() +
                         " does not match activations " + clean.shape_str());
  const double inv_batch = 1.0 / static_cast<double>(batch_of(clean));
  Tensor corrupted = clean + noise;
  Tensor fwd = net.layers[l]->forward(corrupted).second;
  auto [recon_pre, recon] = g.forward(fwd);
  const Tensor& target = mode == InverseLossMode::Denoising ? clean : corrupted;
  InverseLossGrads out;
  out.loss = squared_error(recon, target);
  Tensor delta = hadamard(recon - target, activation_deriv(g.activation, recon_pre));
  delta *= 2.0 * inv_batch;
  net.inverses[l]->param_grads(delta, fwd, out.grads);
  return out;
}

InverseLossGrads inverse_loss_grads(const Network& net, const ActivationTape& tape,
                                    double sigma, InverseLossMode mode, SeededRng& rng) {
  if (sigma < 0.0) throw std::invalid_argument("inverse_loss_grads: sigma must be nonnegative");
  InverseLossGrads out;
  std::size_t n_layers = 0;
  for (std::size_t l = 1; l < net.depth(); ++l) {
    if (!net.inverses[l]) continue;
    Tensor noise = sample_gaussian(rng, tape.h[l].shape(), sigma);
    InverseLossGrads layer = inverse_loss_layer(net, tape, l, noise, mode);
    out.loss += layer.loss;
    for (auto& g : layer.grads) out.grads.push_back(std::move(g));
    ++n_layers;
  }
  if (n_layers > 0) out.loss /= static_cast<double>(n_layers);
  return out;
}

}  // namespace targetprop
