#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "targetprop/optim.hpp"

using namespace targetprop;

namespace {

/// Linearly separable 2-d blobs, one cluster per class.
Dataset blob_dataset(std::uint64_t seed, std::size_t n_per_class) {
  Dataset d;
  d.h = 1; d.w = 2; d.c = 1;
  d.num_classes = 2;
  SeededRng rng(seed);
  for (std::size_t i = 0; i < 2 * n_per_class; ++i) {
    const int label = static_cast<int>(i % 2);
    const double cx = label == 0 ? -1.0 : 1.0;
    d.images.push_back(cx + 0.3 * rng.next_gaussian());
    d.images.push_back(-cx + 0.3 * rng.next_gaussian());
    d.labels.push_back(label);
    ++d.n;
  }
  return d;
}

Network blob_net(std::uint64_t seed, FeedbackInit feedback = FeedbackInit::None) {
  ArchSpec arch;
  arch.in_h = 1; arch.in_w = 2; arch.in_c = 1;
  LayerSpec hid;
  hid.units = 8;
  arch.hidden = {hid};
  arch.outputs = 2;
  SeededRng rng(seed);
  return build_network(arch, rng, 0, feedback);
}

}  // namespace

TEST_CASE("the first Adam step has magnitude close to the learning rate") {
  AdamConfig cfg;
  cfg.lr = 0.1;
  Adam opt(cfg);
  Tensor p({1}, {5.0});
  Tensor g({1}, {3.0});  // any positive gradient: the first step is -lr
  opt.step({&p}, {g});
  CHECK(p[0] == doctest::Approx(5.0 - 0.1).epsilon(1e-6));
}

TEST_CASE("Adam follows the sign of a constant gradient") {
  Adam opt(AdamConfig{});
  Tensor p({2}, {0.0, 0.0});
  Tensor g({2}, {1.0, -1.0});
  for (int i = 0; i < 100; ++i) opt.step({&p}, {g});
  CHECK(p[0] < -0.05);
  CHECK(p[1] > 0.05);
  CHECK(opt.steps_taken() == 100);
}

TEST_CASE("Adam validates its hyperparameters") {
  AdamConfig bad;
  bad.lr = -1.0;
  CHECK_THROWS_AS(Adam{bad}, ConfigError);
  bad = AdamConfig{};
  bad.beta1 = 1.0;
  CHECK_THROWS_AS(Adam{bad}, ConfigError);
  bad = AdamConfig{};
  bad.eps = 0.0;
  CHECK_THROWS_AS(Adam{bad}, ConfigError);
}

TEST_CASE("Adam rejects mismatched gradient blocks") {
  Adam opt(AdamConfig{});
  Tensor p({2});
  CHECK_THROWS_AS(opt.step({&p}, {}), ContractError);
  CHECK_THROWS_AS(opt.step({&p}, {Tensor({3})}), ContractError);
}

TEST_CASE("schedule names parse") {
  CHECK(schedule_from_string("parallel") == Schedule::Parallel);
  CHECK(schedule_from_string("alternating") == Schedule::Alternating);
  CHECK_THROWS_AS(schedule_from_string("serial"), ConfigError);
}

TEST_CASE("backprop training separates the blobs") {
  Dataset data = blob_dataset(1, 100);
  Network net = blob_net(2);
  RuleConfig rule;
  rule.kind = RuleKind::Bp;
  AdamConfig adam;
  adam.lr = 0.01;
  Adam fwd(adam), inv(adam);
  SeededRng rng(3);
  const double before = evaluate(net, data).error_pct;
  for (int epoch = 0; epoch < 20; ++epoch)
    train_epoch(net, data, rule, Schedule::Parallel, fwd, inv, rng, 16);
  const double after = evaluate(net, data).error_pct;
  CHECK(after < before);
  CHECK(after < 5.0);
}

TEST_CASE("sdtp training separates the blobs without weight transport") {
  Dataset data = blob_dataset(4, 100);
  Network net = blob_net(5);
  RuleConfig rule;
  rule.kind = RuleKind::Sdtp;
  rule.sigma = 0.05;
  AdamConfig adam;
  adam.lr = 0.01;
  Adam fwd(adam), inv(adam);
  SeededRng rng(6);
  for (int epoch = 0; epoch < 40; ++epoch)
    train_epoch(net, data, rule, Schedule::Parallel, fwd, inv, rng, 16);
  CHECK(evaluate(net, data).error_pct < 10.0);
}

TEST_CASE("alternating schedule reports inverse loss and trains") {
  Dataset data = blob_dataset(7, 60);
  Network net = blob_net(8);
  RuleConfig rule;
  rule.kind = RuleKind::Dtp;
  rule.alpha = 0.1;
  rule.sigma = 0.05;
  AdamConfig adam;
  adam.lr = 0.01;
  Adam fwd(adam), inv(adam);
  SeededRng rng(9);
  EpochMetrics em{};
  for (int epoch = 0; epoch < 30; ++epoch)
    em = train_epoch(net, data, rule, Schedule::Alternating, fwd, inv, rng, 16);
  CHECK(em.has_inverse);
  CHECK(em.inverse_loss >= 0.0);
  CHECK(evaluate(net, data).error_pct < 15.0);
}

TEST_CASE("bp ignores the inverse optimizer entirely") {
  Dataset data = blob_dataset(10, 20);
  Network net = blob_net(11);
  RuleConfig rule;
  rule.kind = RuleKind::Bp;
  Adam fwd(AdamConfig{}), inv(AdamConfig{});
  SeededRng rng(12);
  EpochMetrics em = train_epoch(net, data, rule, Schedule::Parallel, fwd, inv, rng, 8);
  CHECK_FALSE(em.has_inverse);
  CHECK(inv.steps_taken() == 0);
  CHECK(fwd.steps_taken() > 0);
}

TEST_CASE("evaluation reports a loss consistent with chance at initialization") {
  Dataset data = blob_dataset(13, 50);
  Network net = blob_net(14);
  EvalResult r = evaluate(net, data);
  CHECK(r.error_pct >= 0.0);
  CHECK(r.error_pct <= 100.0);
  CHECK(r.loss > 0.0);
  CHECK(r.loss < 5.0);  // near ln 2 for an untrained two-class net
}

TEST_CASE("sampled configurations respect the search space") {
  HyperparamSpace space;
  SeededRng rng(15);
  for (int i = 0; i < 200; ++i) {
    SampledConfig cfg = sample_config(space, rng);
    CHECK(cfg.forward_adam.lr >= space.model_lr_min);
    CHECK(cfg.forward_adam.lr <= space.model_lr_max);
    CHECK(cfg.inverse_adam.lr >= space.inverse_lr_min);
    CHECK(cfg.inverse_adam.lr <= space.inverse_lr_max);
    CHECK(cfg.forward_adam.beta1 == space.beta1);
    CHECK((cfg.forward_adam.beta2 == 0.99 || cfg.forward_adam.beta2 == 0.999));
    CHECK((cfg.forward_adam.eps == 1e-4 || cfg.forward_adam.eps == 1e-6 ||
           cfg.forward_adam.eps == 1e-8));
    CHECK(cfg.alpha >= space.alpha_min);
    CHECK(cfg.alpha <= space.alpha_max);
    CHECK(cfg.sigma >= space.sigma_min);
    CHECK(cfg.sigma <= space.sigma_max);
  }
}

TEST_CASE("sampling is seed-deterministic") {
  HyperparamSpace space;
  SeededRng a(16), b(16);
  for (int i = 0; i < 10; ++i) {
    SampledConfig ca = sample_config(space, a);
    SampledConfig cb = sample_config(space, b);
    CHECK(ca.forward_adam.lr == cb.forward_adam.lr);
    CHECK(ca.sigma == cb.sigma);
  }
}

TEST_CASE("random search results are independent of the job count") {
  HyperparamSpace space;
  SeededRng base(17);
  auto run_trial = [](std::size_t trial, const SampledConfig& cfg, std::uint64_t seed) {
    TrialResult r;
    r.trial = trial;
    r.config = cfg;
    // Deterministic synthetic objective mixing the sample and the seed.
    r.best_test_err = std::fmod(cfg.forward_adam.lr * 1e6 + double(seed % 1000), 97.0);
    r.best_epoch = trial;
    return r;
  };
  std::vector<TrialResult> serial = random_search(24, space, base, run_trial, 1);
  std::vector<TrialResult> threaded = random_search(24, space, base, run_trial, 4);
  REQUIRE(serial.size() == threaded.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    CHECK(serial[i].trial == threaded[i].trial);
    CHECK(serial[i].best_test_err == threaded[i].best_test_err);
  }
  // Sorted ascending by best test error.
  for (std::size_t i = 1; i < serial.size(); ++i)
    CHECK(serial[i - 1].best_test_err <= serial[i].best_test_err);
}
