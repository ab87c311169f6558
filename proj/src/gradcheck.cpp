#include "targetprop/gradcheck.hpp"

#include <cmath>
#include <functional>

namespace targetprop {

namespace {

constexpr double kStep = 1e-5;
constexpr double kDenomFloor = 1e-3;

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), kDenomFloor});
}

struct Fixture {
  Network net;
  Tensor x;  // [4 x 5]
  Tensor q;  // [3 x 5] one-hot
};

Fixture make_fixture(std::uint64_t seed, std::vector<std::size_t> hidden = {6}) {
  ArchSpec arch;
  arch.in_h = 2;
  arch.in_w = 2;
  arch.in_c = 1;
  for (std::size_t units : hidden) {
    LayerSpec layer;
    layer.units = units;
    arch.hidden.push_back(layer);
  }
  arch.outputs = 3;
  Fixture f;
  SeededRng rng(seed);
  f.net = build_network(arch, rng);
  const std::size_t batch = 5;
  f.x = sample_gaussian(rng, {4, batch}, 0.8);
  f.q = Tensor({3, batch});
  for (std::size_t c = 0; c < batch; ++c) f.q.at(rng.next_u64() % 3, c) = 1.0;
  return f;
}

std::vector<std::string> forward_block_names(const Network& net) {
  std::vector<std::string> names;
  for (std::size_t l = 0; l < net.depth(); ++l)
    for (std::size_t k = 0; k < const_cast<Network&>(net).layers[l]->params().size(); ++k)
      names.push_back("layer" + std::to_string(l) + ".p" + std::to_string(k));
  return names;
}

std::vector<std::string> inverse_block_names(const Network& net) {
  std::vector<std::string> names;
  for (std::size_t l = 0; l < net.inverses.size(); ++l) {
    if (!net.inverses[l]) continue;
    for (std::size_t k = 0; k < net.inverses[l]->params().size(); ++k)
      names.push_back("inverse" + std::to_string(l) + ".p" + std::to_string(k));
  }
  return names;
}

/// Central FD over every entry of every block against the analytic gradient.
GradCheckReport compare_fd(const std::vector<Tensor*>& params,
                           const std::vector<std::string>& names,
                           const std::vector<Tensor>& analytic,
                           const std::function<double()>& loss) {
  GradCheckReport report;
  for (std::size_t b = 0; b < params.size(); ++b) {
    double worst = 0.0;
    Tensor& p = *params[b];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p[i];
      p[i] = saved + kStep;
      const double up = loss();
      p[i] = saved - kStep;
      const double down = loss();
      p[i] = saved;
      const double fd = (up - down) / (2.0 * kStep);
      worst = std::max(worst, rel_err(fd, analytic[b][i]));
    }
    report.blocks.emplace_back(names[b], worst);
    report.max_rel_err = std::max(report.max_rel_err, worst);
  }
  return report;
}

double task_loss_of(const Network& net, const Tensor& x, const Tensor& q) {
  return cross_entropy(forward_pass(net, x).h.back(), q);
}

}  // namespace

GradCheckReport gradcheck_bp(std::uint64_t seed) {
  Fixture f = make_fixture(seed);
  ActivationTape tape = forward_pass(f.net, f.x);
  std::vector<Tensor> analytic = bp_backward(f.net, tape, tape.h.back() - f.q);
  return compare_fd(f.net.forward_params(), forward_block_names(f.net), analytic,
                    [&] { return task_loss_of(f.net, f.x, f.q); });
}

GradCheckReport gradcheck_forward_loss(std::uint64_t seed) {
  Fixture f = make_fixture(seed);
  SeededRng target_rng(seed ^ 0x5ca1ab1e);
  ActivationTape tape = forward_pass(f.net, f.x);
  const std::size_t depth = f.net.depth();
  TargetStack targets;
  targets.targets.resize(depth + 1);
  for (std::size_t l = 1; l < depth; ++l)
    targets.targets[l] = tape.h[l] + sample_gaussian(target_rng, tape.h[l].shape(), 0.3);

  std::vector<Tensor> analytic = forward_loss_grads(f.net, tape, targets, tape.h.back() - f.q);

  // Each layer's local loss sees only its own parameters; inputs come from
  // the unperturbed tape.
  GradCheckReport report;
  std::size_t block = 0;
  const std::vector<std::string> names = forward_block_names(f.net);
  for (std::size_t l = 0; l < depth; ++l) {
    Layer& layer = *f.net.layers[l];
    auto local_loss = [&] {
      Tensor out = layer.forward(tape.h[l]).second;
      if (l == depth - 1) return cross_entropy(out, f.q);
      return squared_error(out, targets.targets[l + 1]);
    };
    for (Tensor* p : layer.params()) {
      double worst = 0.0;
      for (std::size_t i = 0; i < p->size(); ++i) {
        const double saved = (*p)[i];
        (*p)[i] = saved + kStep;
        const double up = local_loss();
        (*p)[i] = saved - kStep;
        const double down = local_loss();
        (*p)[i] = saved;
        worst = std::max(worst, rel_err((up - down) / (2.0 * kStep), analytic[block][i]));
      }
      report.blocks.emplace_back(names[block], worst);
      report.max_rel_err = std::max(report.max_rel_err, worst);
      ++block;
    }
  }
  return report;
}

GradCheckReport gradcheck_inverse_loss(std::uint64_t seed, InverseLossMode mode) {
  Fixture f = make_fixture(seed, {6, 5});
  SeededRng noise_rng(seed ^ 0xdecafbad);
  ActivationTape tape = forward_pass(f.net, f.x);

  GradCheckReport report;
  std::size_t name_idx = 0;
  const std::vector<std::string> names = inverse_block_names(f.net);
  for (std::size_t l = 1; l < f.net.depth(); ++l) {
    if (!f.net.inverses[l]) continue;
    const Tensor noise = sample_gaussian(noise_rng, tape.h[l].shape(), 0.2);
    InverseLossGrads analytic = inverse_loss_layer(f.net, tape, l, noise, mode);
    std::vector<Tensor*> params = f.net.inverses[l]->params();
    for (std::size_t b = 0; b < params.size(); ++b) {
      double worst = 0.0;
      Tensor& p = *params[b];
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double saved = p[i];
        p[i] = saved + kStep;
        const double up = inverse_loss_layer(f.net, tape, l, noise, mode).loss;
        p[i] = saved - kStep;
        const double down = inverse_loss_layer(f.net, tape, l, noise, mode).loss;
        p[i] = saved;
        worst = std::max(worst, rel_err((up - down) / (2.0 * kStep), analytic.grads[b][i]));
      }
      report.blocks.emplace_back(names[name_idx++], worst);
      report.max_rel_err = std::max(report.max_rel_err, worst);
    }
  }
  return report;
}

GradCheckReport gradcheck_dtp_penultimate(std::uint64_t seed) {
  Fixture f = make_fixture(seed);
  ActivationTape tape = forward_pass(f.net, f.x);
  const std::size_t depth = f.net.depth();
  const double alpha = 0.05;
  TargetStack targets = dtp_targets(f.net, tape, tape.h.back() - f.q, alpha);

  // The target encodes h - alpha * dL/dh with the un-normalized (summed over
  // the batch) loss; FD differentiates the batch mean, hence the B factor.
  const double batch = static_cast<double>(f.x.cols());
  Tensor h = tape.h[depth - 1];
  const Layer& out_layer = *f.net.layers[depth - 1];
  auto loss_of_h = [&] { return cross_entropy(out_layer.forward(h).second, f.q) * batch; };

  double worst = 0.0;
  const Tensor& target = targets.targets[depth - 1];
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double saved = h[i];
    h[i] = saved + kStep;
    const double up = loss_of_h();
    h[i] = saved - kStep;
    const double down = loss_of_h();
    h[i] = saved;
    const double fd = (up - down) / (2.0 * kStep);
    const double implied = (tape.h[depth - 1][i] - target[i]) / alpha;
    worst = std::max(worst, rel_err(fd, implied));
  }
  GradCheckReport report;
  report.blocks.emplace_back("penultimate_target", worst);
  report.max_rel_err = worst;
  return report;
}

GradCheckReport gradcheck_hybrid(std::uint64_t seed) {
  Fixture f = make_fixture(seed, {6, 5});
  ActivationTape tape = forward_pass(f.net, f.x);
  const Tensor e = tape.h.back() - f.q;
  TargetStack targets = hybrid_targets(f.net, tape, e, f.q, 1.0);
  std::vector<Tensor> local = forward_loss_grads(f.net, tape, targets, e);
  std::vector<Tensor> bp = bp_backward(f.net, tape, e);

  GradCheckReport report;
  const std::vector<std::string> names = forward_block_names(f.net);
  std::size_t block = 0;
  for (std::size_t l = 0; l < f.net.depth(); ++l) {
    const double factor = l == f.net.depth() - 1 ? 1.0 : 2.0;
    for (Tensor* p : f.net.layers[l]->params()) {
      (void)p;
      double worst = 0.0;
      for (std::size_t i = 0; i < local[block].size(); ++i)
        worst = std::max(worst, rel_err(local[block][i], factor * bp[block][i]));
      report.blocks.emplace_back(names[block], worst);
      report.max_rel_err = std::max(report.max_rel_err, worst);
      ++block;
    }
  }
  return report;
}

}  // namespace targetprop
