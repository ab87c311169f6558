#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "targetprop/gradcheck.hpp"

using namespace targetprop;

namespace {

Network tiny_net(std::uint64_t seed, std::vector<std::size_t> hidden = {6},
                 FeedbackInit feedback = FeedbackInit::None, std::size_t aux_z = 0) {
  ArchSpec arch;
  arch.in_h = 2; arch.in_w = 2; arch.in_c = 1;
  for (std::size_t units : hidden) {
    LayerSpec s;
    s.units = units;
    arch.hidden.push_back(s);
  }
  arch.outputs = 3;
  SeededRng rng(seed);
  return build_network(arch, rng, aux_z, feedback);
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("cross entropy of a uniform two-class guess is ln 2") {
  Tensor p({2, 1}, {0.5, 0.5});
  Tensor q({2, 1}, {1.0, 0.0});
  CHECK(cross_entropy(p, q) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy of a 10% guess on the true class is ln 10") {
  Tensor p({2, 1}, {0.1, 0.9});
  Tensor q({2, 1}, {1.0, 0.0});
  CHECK(cross_entropy(p, q) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy rejects unnormalized distributions") {
  Tensor p({2, 1}, {0.7, 0.7});
  Tensor q({2, 1}, {1.0, 0.0});
  CHECK_THROWS_AS(cross_entropy(p, q), ContractError);
}

TEST_CASE("cross entropy averages over the batch") {
  Tensor p({2, 2}, {0.5, 0.1, 0.5, 0.9});  // columns [0.5,0.5] and [0.1,0.9]
  Tensor q({2, 2}, {1.0, 0.0, 0.0, 1.0});
  const double want = 0.5 * (std::log(2.0) - std::log(0.9));
  CHECK(cross_entropy(p, q) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("output delta is p - q") {
  Tensor p({3, 1}, {0.2, 0.3, 0.5});
  Tensor q({3, 1}, {0.0, 1.0, 0.0});
  Tensor e = output_delta(p, q);
  CHECK(e[0] == doctest::Approx(0.2));
  CHECK(e[1] == doctest::Approx(-0.7));
  CHECK(e[2] == doctest::Approx(0.5));
}

TEST_CASE("squared error is the batch mean of squared norms") {
  Tensor y({2, 2}, {1.0, 0.0, 0.0, 2.0});
  Tensor t({2, 2}, {0.0, 0.0, 0.0, 0.0});
  CHECK(squared_error(y, t) == doctest::Approx((1.0 + 4.0) / 2.0).epsilon(1e-14));
}

TEST_CASE("rule names round-trip") {
  for (const char* name : {"bp", "fa", "dfa", "tp", "dtp", "sdtp", "ao_sdtp", "hybrid"})
    CHECK(to_string(rule_kind_from_string(name)) == name);
  CHECK_THROWS_AS(rule_kind_from_string("sgd"), ConfigError);
}

TEST_CASE("backprop gradient passes the finite-difference oracle") {
  GradCheckReport report = gradcheck_bp(101);
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("local forward losses pass the finite-difference oracle") {
  GradCheckReport report = gradcheck_forward_loss(102);
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("inverse losses pass the finite-difference oracle in both modes") {
  CHECK(gradcheck_inverse_loss(103, InverseLossMode::Denoising).max_rel_err < 1e-6);
  CHECK(gradcheck_inverse_loss(103, InverseLossMode::NoisePreserving).max_rel_err < 1e-6);
}

TEST_CASE("the penultimate target encodes the exact loss gradient") {
  CHECK(gradcheck_dtp_penultimate(104).max_rel_err < 1e-6);
}

TEST_CASE("hybrid targets with full gradient mixing reproduce backprop") {
  CHECK(gradcheck_hybrid(105).max_rel_err < 1e-9);
}

TEST_CASE("feedback-alignment equals backprop when feedback is the transpose") {
  Network net = tiny_net(7, {6, 5}, FeedbackInit::Fa);
  // Overwrite the random feedback with the current forward transposes.
  for (std::size_t l = 1; l < net.depth(); ++l) {
    auto* d = dynamic_cast<DenseLayer*>(net.layers[l].get());
    REQUIRE(d != nullptr);
    net.fa_feedback[l] = std::make_unique<DenseFeedback>(transpose(d->weights()));
  }
  SeededRng rng(8);
  Tensor x = sample_gaussian(rng, {4, 5}, 1.0);
  Tensor q({3, 5});
  for (std::size_t c = 0; c < 5; ++c) q.at(rng.next_u64() % 3, c) = 1.0;
  ActivationTape tape = forward_pass(net, x);
  Tensor e = tape.h.back() - q;
  std::vector<Tensor> bp = bp_backward(net, tape, e);
  std::vector<Tensor> fa = fa_backward(net, tape, e);
  REQUIRE(bp.size() == fa.size());
  for (std::size_t b = 0; b < bp.size(); ++b) CHECK(bitwise_equal(bp[b], fa[b]));
}

TEST_CASE("random feedback differs from backprop but output-layer grads agree") {
  Network net = tiny_net(9, {6}, FeedbackInit::Fa);
  SeededRng rng(10);
  Tensor x = sample_gaussian(rng, {4, 5}, 1.0);
  Tensor q({3, 5});
  for (std::size_t c = 0; c < 5; ++c) q.at(rng.next_u64() % 3, c) = 1.0;
  ActivationTape tape = forward_pass(net, x);
  Tensor e = tape.h.back() - q;
  std::vector<Tensor> bp = bp_backward(net, tape, e);
  std::vector<Tensor> fa = fa_backward(net, tape, e);
  CHECK_FALSE(bitwise_equal(bp[0], fa[0]));          // first-layer W differs
  CHECK(bitwise_equal(bp.back(), fa.back()));        // output bias identical
  CHECK(bitwise_equal(bp[bp.size() - 2], fa[fa.size() - 2]));  // output W identical
}

TEST_CASE("direct feedback alignment produces correctly shaped gradients") {
  Network net = tiny_net(11, {6, 5}, FeedbackInit::Dfa);
  SeededRng rng(12);
  Tensor x = sample_gaussian(rng, {4, 3}, 1.0);
  Tensor q({3, 3});
  for (std::size_t c = 0; c < 3; ++c) q.at(rng.next_u64() % 3, c) = 1.0;
  ActivationTape tape = forward_pass(net, x);
  std::vector<Tensor> grads = dfa_backward(net, tape, tape.h.back() - q);
  std::vector<Tensor*> params = net.forward_params();
  REQUIRE(grads.size() == params.size());
  for (std::size_t b = 0; b < grads.size(); ++b)
    CHECK(grads[b].shape() == params[b]->shape());
}

TEST_CASE("targets cancel exactly when the output target is the realized output") {
  for (std::uint64_t seed = 200; seed < 210; ++seed) {
    Network net = tiny_net(seed, {6, 5});
    SeededRng rng(seed ^ 0xffff);
    Tensor x = sample_gaussian(rng, {4, 4}, 1.0);
    ActivationTape tape = forward_pass(net, x);

    TargetStack sdtp = sdtp_targets(net, tape, tape.h.back());
    TargetStack hybrid = hybrid_targets(net, tape, Tensor({3, 4}), tape.h.back(), 0.7);
    for (std::size_t l = 1; l < tape.h.size(); ++l) {
      CHECK(bitwise_equal(sdtp.targets[l], tape.h[l]));
      CHECK(bitwise_equal(hybrid.targets[l], tape.h[l]));
    }
  }
}

TEST_CASE("dtp targets cancel below an exact penultimate target") {
  Network net = tiny_net(42, {6, 5, 4});
  SeededRng rng(43);
  Tensor x = sample_gaussian(rng, {4, 4}, 1.0);
  ActivationTape tape = forward_pass(net, x);
  // Zero task error: the penultimate target equals the activation, and the
  // difference correction must cancel all the way down.
  TargetStack stack = dtp_targets(net, tape, Tensor({3, 4}), 0.1);
  for (std::size_t l = 1; l < tape.h.size() - 1; ++l)
    CHECK(bitwise_equal(stack.targets[l], tape.h[l]));
}

TEST_CASE("ao_sdtp with realized labels degenerates to cancellation") {
  Network net = tiny_net(55, {6, 5}, FeedbackInit::None, 4);
  SeededRng rng(56);
  Tensor x = sample_gaussian(rng, {4, 4}, 1.0);
  ActivationTape tape = forward_pass(net, x);
  // q equals the realized class-distribution block, so [q, z] is h_L.
  Tensor q({3, 4});
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 4; ++c) q.at(r, c) = tape.h.back().at(r, c);
  TargetStack stack = ao_sdtp_targets(net, tape, q);
  for (std::size_t l = 1; l < tape.h.size(); ++l)
    CHECK(bitwise_equal(stack.targets[l], tape.h[l]));
}

TEST_CASE("sdtp and ao_sdtp target computation reads no forward weights") {
  Network net = tiny_net(60, {6, 5}, FeedbackInit::None, 4);
  SeededRng rng(61);
  Tensor x = sample_gaussian(rng, {4, 4}, 1.0);
  ActivationTape tape = forward_pass(net, x);
  Tensor q({3, 4});
  for (std::size_t c = 0; c < 4; ++c) q.at(rng.next_u64() % 3, c) = 1.0;
  Tensor target_L = tape.h.back();
  const std::uint64_t before = net.forward_weight_reads();
  sdtp_targets(net, tape, target_L);
  ao_sdtp_targets(net, tape, q);
  CHECK(net.forward_weight_reads() == before);
}

TEST_CASE("dtp target computation reads forward weights only for the output layer") {
  Network net = tiny_net(62, {6, 5});
  SeededRng rng(63);
  Tensor x = sample_gaussian(rng, {4, 4}, 1.0);
  ActivationTape tape = forward_pass(net, x);
  const std::uint64_t before = net.forward_weight_reads();
  dtp_targets(net, tape, tape.h.back(), 0.1);
  CHECK(net.forward_weight_reads() == before + 1);
}

TEST_CASE("vanilla tp routes targets purely through the inverses") {
  Network net = tiny_net(64, {6, 5});
  SeededRng rng(65);
  Tensor x = sample_gaussian(rng, {4, 4}, 1.0);
  ActivationTape tape = forward_pass(net, x);
  Tensor q({3, 4});
  for (std::size_t c = 0; c < 4; ++c) q.at(rng.next_u64() % 3, c) = 1.0;
  const std::uint64_t before = net.forward_weight_reads();
  TargetStack stack = tp_targets(net, tape, q);
  CHECK(net.forward_weight_reads() == before);
  CHECK(bitwise_equal(stack.targets[2], net.inverses[2]->apply(q)));
  CHECK(bitwise_equal(stack.targets[1], net.inverses[1]->apply(stack.targets[2])));
}

TEST_CASE("hybrid with no gradient mixing is bitwise sdtp") {
  Network net = tiny_net(70, {6, 5});
  SeededRng rng(71);
  Tensor x = sample_gaussian(rng, {4, 4}, 1.0);
  Tensor q({3, 4});
  for (std::size_t c = 0; c < 4; ++c) q.at(rng.next_u64() % 3, c) = 1.0;
  ActivationTape tape = forward_pass(net, x);
  TargetStack sdtp = sdtp_targets(net, tape, q);
  TargetStack hybrid = hybrid_targets(net, tape, tape.h.back() - q, q, 0.0);
  for (std::size_t l = 1; l < tape.h.size() - 1; ++l)
    CHECK(bitwise_equal(sdtp.targets[l], hybrid.targets[l]));
}

TEST_CASE("forward loss gradients demand targets for every hidden layer") {
  Network net = tiny_net(80, {6, 5});
  SeededRng rng(81);
  Tensor x = sample_gaussian(rng, {4, 2}, 1.0);
  ActivationTape tape = forward_pass(net, x);
  TargetStack empty;
  empty.targets.resize(net.depth() + 1);
  CHECK_THROWS_AS(forward_loss_grads(net, tape, empty, tape.h.back()), ContractError);
}

TEST_CASE("denoising and noise-preserving inverse losses differ under noise") {
  Network net = tiny_net(90, {6, 5});
  SeededRng rng(91);
  Tensor x = sample_gaussian(rng, {4, 4}, 1.0);
  ActivationTape tape = forward_pass(net, x);
  Tensor noise = sample_gaussian(rng, tape.h[1].shape(), 0.3);
  InverseLossGrads denoise = inverse_loss_layer(net, tape, 1, noise, InverseLossMode::Denoising);
  InverseLossGrads preserve =
      inverse_loss_layer(net, tape, 1, noise, InverseLossMode::NoisePreserving);
  CHECK(denoise.loss != preserve.loss);
  // Zero noise collapses the two modes to the same objective.
  Tensor zero(tape.h[1].shape());
  InverseLossGrads a = inverse_loss_layer(net, tape, 1, zero, InverseLossMode::Denoising);
  InverseLossGrads b = inverse_loss_layer(net, tape, 1, zero, InverseLossMode::NoisePreserving);
  CHECK(a.loss == b.loss);
}
