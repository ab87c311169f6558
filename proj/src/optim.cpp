#include "targetprop/optim.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <thread>

namespace targetprop {

void AdamConfig::validate() const {
  if (lr <= 0.0) throw ConfigError("adam: lr must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0) throw ConfigError("adam: beta1 must lie in [0, 1)");
  if (beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("adam: beta2 must lie in [0, 1)");
  if (eps <= 0.0) throw ConfigError("adam: eps must be positive");
}

Adam::Adam(AdamConfig cfg) : cfg_(cfg) { cfg_.validate(); }

void Adam::step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
  if (params.size() != grads.size())
    throw ContractError("adam: " + std::to_string(params.size()) + " parameter blocks vs " +
                        std::to_string(grads.size()) + " gradient blocks");
  if (m_.empty()) {
    for (const Tensor* p : params) {
      m_.emplace_back(p->shape());
      v_.emplace_back(p->shape());
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t b = 0; b < params.size(); ++b) {
    Tensor& p = *params[b];
    const Tensor& g = grads[b];
    if (!p.same_shape(g))
      throw ContractError("adam: gradient shape " + g.shape_str() +
                          " does not match parameter " + p.shape_str());
    Tensor& m = m_[b];
    Tensor& v = v_[b];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
    }
  }
}

Schedule schedule_from_string(const std::string& name) {
  if (name == "parallel") return Schedule::Parallel;
  if (name == "alternating") return Schedule::Alternating;
  throw ConfigError("unknown schedule: " + name);
}

namespace {

bool is_classifier(const Network& net) {
  return net.layers.back()->activation == Activation::Softmax;
}

// Class-distribution rows of the output (excludes auxiliary z rows).
Tensor output_distribution(const Network& net, const Tensor& h_L) {
  if (net.aux_z == 0) return h_L;
  const std::size_t rows = net.output_dim() - net.aux_z;
  const std::size_t cols = h_L.cols();
  Tensor o({rows, cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) o.at(r, c) = h_L.at(r, c);
  return o;
}

// Per-sample task-loss delta at the output pre-activation (z rows zero).
Tensor task_delta(const Network& net, const Tensor& h_L, const Batch& batch) {
  if (is_classifier(net)) {
    Tensor e({net.output_dim(), h_L.cols()});
    const std::size_t k = static_cast<std::size_t>(batch.q.rows());
    for (std::size_t r = 0; r < k; ++r)
      for (std::size_t c = 0; c < h_L.cols(); ++c)
        e.at(r, c) = h_L.at(r, c) - batch.q.at(r, c);
    return e;
  }
  return (h_L - batch.x) * 2.0;  // squared reconstruction loss
}

double task_loss(const Network& net, const Tensor& h_L, const Batch& batch) {
  if (is_classifier(net)) return cross_entropy(output_distribution(net, h_L), batch.q);
  return squared_error(h_L, batch.x);
}

// Loss-optimal output target: the label distribution (with realized aux
// features) for classifiers, the clean input for autoencoders.
Tensor output_target(const Network& net, const Tensor& h_L, const Batch& batch) {
  if (!is_classifier(net)) return batch.x;
  if (net.aux_z == 0) return batch.q;
  Tensor t = h_L;
  const std::size_t k = static_cast<std::size_t>(batch.q.rows());
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t c = 0; c < h_L.cols(); ++c) t.at(r, c) = batch.q.at(r, c);
  return t;
}

TargetStack compute_targets(const Network& net, const ActivationTape& tape,
                            const RuleConfig& rule, const Batch& batch) {
  const Tensor& h_L = tape.h.back();
  switch (rule.kind) {
    case RuleKind::Tp:
      return tp_targets(net, tape, output_target(net, h_L, batch));
    case RuleKind::Dtp:
      return dtp_targets(net, tape, task_delta(net, h_L, batch), rule.alpha);
    case RuleKind::Sdtp:
      return sdtp_targets(net, tape, output_target(net, h_L, batch));
    case RuleKind::AoSdtp:
      return ao_sdtp_targets(net, tape, batch.q);
    case RuleKind::Hybrid:
      return hybrid_targets(net, tape, task_delta(net, h_L, batch),
                            output_target(net, h_L, batch), rule.alpha_mix);
    default:
      throw ConfigError("rule has no target scheme");
  }
}

}  // namespace

EpochMetrics train_epoch(Network& net, const Dataset& data, const RuleConfig& rule,
                         Schedule schedule, Adam& opt_forward, Adam& opt_inverse,
                         SeededRng& rng, std::size_t batch_size, const AugmentConfig* aug) {
  if (data.n == 0) throw ContractError("train_epoch: empty dataset");
  EpochMetrics metrics;
  const bool tp_family = rule.is_tp_family();
  metrics.has_inverse = tp_family;
  const std::vector<Tensor*> fwd_params = net.forward_params();
  const std::vector<Tensor*> inv_params = tp_family ? net.inverse_params() : std::vector<Tensor*>{};

  const bool alternating = tp_family && schedule == Schedule::Alternating;
  std::size_t n_batches = 0;
  std::size_t n_inv_batches = 0;

  if (alternating) {
    // Inverse phase first so the forward phase trains against usable inverses.
    for (const auto& idx : batches(data.n, batch_size, rng)) {
      Batch batch = make_batch(data, idx, aug, &rng);
      ActivationTape tape = forward_pass(net, batch.x);
      InverseLossGrads inv = inverse_loss_grads(net, tape, rule.sigma, rule.inverse_loss_mode, rng);
      opt_inverse.step(inv_params, inv.grads);
      metrics.inverse_loss += inv.loss;
      ++n_inv_batches;
    }
  }

  for (const auto& idx : batches(data.n, batch_size, rng)) {
    Batch batch = make_batch(data, idx, aug, &rng);
    ActivationTape tape = forward_pass(net, batch.x);
    metrics.train_loss += task_loss(net, tape.h.back(), batch);
    ++n_batches;

    if (!tp_family) {
      const Tensor e = task_delta(net, tape.h.back(), batch);
      std::vector<Tensor> grads;
      switch (rule.kind) {
        case RuleKind::Bp: grads = bp_backward(net, tape, e); break;
        case RuleKind::Fa: grads = fa_backward(net, tape, e); break;
        case RuleKind::Dfa: grads = dfa_backward(net, tape, e); break;
        default: throw ConfigError("unexpected rule");
      }
      opt_forward.step(fwd_params, grads);
      continue;
    }

    TargetStack targets = compute_targets(net, tape, rule, batch);
    if (!alternating) {
      InverseLossGrads inv = inverse_loss_grads(net, tape, rule.sigma, rule.inverse_loss_mode, rng);
      opt_inverse.step(inv_params, inv.grads);
      metrics.inverse_loss += inv.loss;
      ++n_inv_batches;
    }
    std::vector<Tensor> grads =
        forward_loss_grads(net, tape, targets, task_delta(net, tape.h.back(), batch));
    opt_forward.step(fwd_params, grads);
  }

  metrics.train_loss /= static_cast<double>(n_batches);
  if (n_inv_batches > 0) metrics.inverse_loss /= static_cast<double>(n_inv_batches);
  return metrics;
}

EvalResult evaluate(const Network& net, const Dataset& data, std::size_t batch_size) {
  if (data.n == 0) throw ContractError("evaluate: empty dataset");
  EvalResult result;
  std::size_t correct = 0;
  double loss = 0.0;
  const std::size_t k = static_cast<std::size_t>(data.num_classes);
  for (std::size_t start = 0; start < data.n; start += batch_size) {
    const std::size_t end = std::min(data.n, start + batch_size);
    std::vector<std::size_t> idx(end - start);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
    Batch batch = make_batch(data, idx);
    ActivationTape tape = forward_pass(net, batch.x);
    Tensor p = output_distribution(net, tape.h.back());
    loss += cross_entropy(p, batch.q) * static_cast<double>(idx.size());
    for (std::size_t s = 0; s < idx.size(); ++s) {
      std::size_t best = 0;
      for (std::size_t r = 1; r < k; ++r)
        if (p.at(r, s) > p.at(best, s)) best = r;
      if (static_cast<int>(best) == batch.labels[s]) ++correct;
    }
  }
  result.error_pct =
      100.0 * (1.0 - static_cast<double>(correct) / static_cast<double>(data.n));
  result.loss = loss / static_cast<double>(data.n);
  return result;
}

double evaluate_reconstruction(const Network& net, const Dataset& data, std::size_t batch_size) {
  if (data.n == 0) throw ContractError("evaluate_reconstruction: empty dataset");
  double total = 0.0;
  for (std::size_t start = 0; start < data.n; start += batch_size) {
    const std::size_t end = std::min(data.n, start + batch_size);
    std::vector<std::size_t> idx(end - start);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
    Batch batch = make_batch(data, idx);
    ActivationTape tape = forward_pass(net, batch.x);
    total += squared_error(tape.h.back(), batch.x) * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(data.n);
}

SampledConfig sample_config(const HyperparamSpace& space, SeededRng& rng) {
  auto log_uniform = [&](double lo, double hi) {
    return std::exp(std::log(lo) + rng.next_uniform() * (std::log(hi) - std::log(lo)));
  };
  auto uniform = [&](double lo, double hi) { return lo + rng.next_uniform() * (hi - lo); };
  auto pick = [&](const std::vector<double>& choices) {
    return choices[rng.next_u64() % choices.size()];
  };
  SampledConfig cfg;
  cfg.forward_adam.lr = log_uniform(space.model_lr_min, space.model_lr_max);
  cfg.forward_adam.beta1 = space.beta1;
  cfg.forward_adam.beta2 = pick(space.beta2_choices);
  cfg.forward_adam.eps = pick(space.eps_choices);
  cfg.inverse_adam.lr = log_uniform(space.inverse_lr_min, space.inverse_lr_max);
  cfg.inverse_adam.beta1 = space.beta1;
  cfg.inverse_adam.beta2 = pick(space.beta2_choices);
  cfg.inverse_adam.eps = pick(space.eps_choices);
  cfg.alpha = uniform(space.alpha_min, space.alpha_max);
  cfg.sigma = uniform(space.sigma_min, space.sigma_max);
  return cfg;
}

std::vector<TrialResult> random_search(
    std::size_t n_configs, const HyperparamSpace& space, const SeededRng& base_rng,
    const std::function<TrialResult(std::size_t, const SampledConfig&, std::uint64_t)>& run_trial,
    std::size_t jobs) {
  if (n_configs == 0) throw ContractError("random_search: n_configs must be >= 1");
  // Each trial owns a child seed; results cannot depend on scheduling.
  std::vector<SampledConfig> configs(n_configs);
  std::vector<std::uint64_t> seeds(n_configs);
  for (std::size_t t = 0; t < n_configs; ++t) {
    SeededRng trial_rng = base_rng.child(t);
    configs[t] = sample_config(space, trial_rng);
    seeds[t] = trial_rng.next_u64();
  }
  std::vector<TrialResult> results(n_configs);
  if (jobs <= 1) {
    for (std::size_t t = 0; t < n_configs; ++t) results[t] = run_trial(t, configs[t], seeds[t]);
  } else {
    std::vector<std::thread> workers;
    std::size_t next = 0;
    std::mutex mu;
    for (std::size_t j = 0; j < jobs; ++j) {
      workers.emplace_back([&] {
        for (;;) {
          std::size_t t;
          {
            std::lock_guard<std::mutex> lock(mu);
            if (next >= n_configs) return;
            t = next++;
          }
          results[t] = run_trial(t, configs[t], seeds[t]);
        }
      });
    }
    for (auto& w : workers) w.join();
  }
  std::stable_sort(results.begin(), results.end(), [](const TrialResult& a, const TrialResult& b) {
    if (a.best_test_err != b.best_test_err) return a.best_test_err < b.best_test_err;
    return a.trial < b.trial;
  });
  return results;
}

}  // namespace targetprop
