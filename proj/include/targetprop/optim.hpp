#pragma once

#include <functional>

#include "targetprop/data.hpp"
#include "targetprop/rules.hpp"

namespace targetprop {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

/// Adam with bias correction. Moments are zero-initialized on first use.
class Adam {
 public:
  explicit Adam(AdamConfig cfg);

  void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads);

  long steps_taken() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<Tensor> m_, v_;
  long t_ = 0;
};

enum class Schedule { Parallel, Alternating };

Schedule schedule_from_string(const std::string& name);

struct EpochMetrics {
  double train_loss = 0.0;    // mean task loss over minibatches
  double inverse_loss = 0.0;  // mean reconstruction loss (TP rules only)
  bool has_inverse = false;
};

/// One reported epoch. Parallel: inverse and forward updates from the same
/// forward pass per minibatch. Alternating: a full inverse-only epoch, then
/// a full forward-only epoch. BP/FA/DFA ignore the inverse machinery.
EpochMetrics train_epoch(Network& net, const Dataset& data, const RuleConfig& rule,
                         Schedule schedule, Adam& opt_forward, Adam& opt_inverse,
                         SeededRng& rng, std::size_t batch_size,
                         const AugmentConfig* aug = nullptr);

struct EvalResult {
  double error_pct = 0.0;
  double loss = 0.0;
};

/// Classification error (%) and mean cross-entropy via argmax prediction.
EvalResult evaluate(const Network& net, const Dataset& data, std::size_t batch_size = 256);

/// Mean squared L2 reconstruction error for autoencoders.
double evaluate_reconstruction(const Network& net, const Dataset& data,
                               std::size_t batch_size = 256);

struct HyperparamSpace {
  double model_lr_min = 1e-5, model_lr_max = 3e-4;
  double inverse_lr_min = 1e-5, inverse_lr_max = 3e-4;
  double beta1 = 0.9;
  std::vector<double> beta2_choices = {0.99, 0.999};
  std::vector<double> eps_choices = {1e-4, 1e-6, 1e-8};
  double alpha_min = 0.01, alpha_max = 0.2;
  double sigma_min = 0.01, sigma_max = 0.3;
};

struct SampledConfig {
  AdamConfig forward_adam;
  AdamConfig inverse_adam;
  double alpha = 0.0;
  double sigma = 0.0;
};

/// Learning rates log-uniform, alpha/sigma uniform, discrete sets uniform.
SampledConfig sample_config(const HyperparamSpace& space, SeededRng& rng);

struct TrialResult {
  std::size_t trial = 0;
  SampledConfig config;
  double best_test_err = 0.0;
  double best_train_err = 0.0;
  std::size_t best_epoch = 0;
};

/// Runs n independent trials with per-trial child seeds and returns results
/// sorted by best test error. Trials may run on `jobs` threads; the outcome
/// is independent of scheduling.
std::vector<TrialResult> random_search(
    std::size_t n_configs, const HyperparamSpace& space, const SeededRng& base_rng,
    const std::function<TrialResult(std::size_t trial, const SampledConfig& cfg,
                                    std::uint64_t trial_seed)>& run_trial,
    std::size_t jobs = 1);

}  // namespace targetprop
