#include "targetprop/layers.hpp"

#include <cmath>

namespace targetprop {

namespace {

void check_rows(const Tensor& t, std::size_t rows, const char* who) {
  const std::size_t r = t.rank() == 2 ? t.rows() : t.size();
  if (r != rows)
    throw DimensionError(std::string(who) + ": input has " + std::to_string(r) +
                         " rows, expected " + std::to_string(rows));
}

std::size_t batch_of(const Tensor& t) { return t.rank() == 2 ? t.cols() : 1; }

void add_bias_columns(Tensor& m, const Tensor& b) {
  const std::size_t rows = m.rank() == 2 ? m.rows() : m.size();
  const std::size_t cols = batch_of(m);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m[r * cols + c] += b[r];
}

}  // namespace

Tensor apply_activation(Activation act, const Tensor& pre, std::size_t aux_z) {
  switch (act) {
    case Activation::Identity:
      return pre;
    case Activation::Tanh:
      return tanh_map(pre);
    case Activation::Softmax: {
      if (aux_z == 0) return softmax(pre);
      // Composite output [o, z]: softmax over the first rows, tanh over z.
      const std::size_t rows = pre.rank() == 2 ? pre.rows() : pre.size();
      const std::size_t cols = batch_of(pre);
      const std::size_t o_rows = rows - aux_z;
      Tensor o({o_rows, cols});
      for (std::size_t r = 0; r < o_rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) o.at(r, c) = pre[r * cols + c];
      o = softmax(o);
      Tensor out = pre;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
          out[r * cols + c] = r < o_rows ? o.at(r, c) : std::tanh(pre[r * cols + c]);
      return out;
    }
  }
  throw std::logic_error("unreachable activation");
}

Tensor activation_deriv(Activation act, const Tensor& pre) {
  switch (act) {
    case Activation::Identity: {
      Tensor ones = pre;
      for (std::size_t i = 0; i < ones.size(); ++i) ones[i] = 1.0;
      return ones;
    }
    case Activation::Tanh:
      return tanh_deriv(pre);
    case Activation::Softmax:
      throw std::logic_error("softmax has no elementwise derivative; use the logit delta");
  }
  throw std::logic_error("unreachable activation");
}

std::vector<std::size_t> LcSpec::weight_shape() const {
  if (tied) return {out_c, k_h, k_w, in_c};
  return {out_h(), out_w(), out_c, k_h, k_w, in_c};
}

std::vector<std::size_t> LcSpec::bias_shape() const {
  if (tied) return {out_c};
  return {out_h(), out_w(), out_c};
}

namespace {

// Walks the sparsity pattern of an LC map for one output location,
// yielding (weight index, input flat index) pairs.
template <typename Fn>
inline void for_each_tap(const LcSpec& s, std::size_t oy, std::size_t ox, std::size_t oc,
                         Fn&& fn) {
  const long pt = s.pad_top();
  const long pl = s.pad_left();
  const std::size_t loc_w = s.k_h * s.k_w * s.in_c;
  const std::size_t w_base =
      s.tied ? oc * loc_w : ((oy * s.out_w() + ox) * s.out_c + oc) * loc_w;
  for (std::size_t ky = 0; ky < s.k_h; ++ky) {
    const long iy = static_cast<long>(oy * s.stride) - pt + static_cast<long>(ky);
    if (iy < 0 || iy >= static_cast<long>(s.in_h)) continue;
    for (std::size_t kx = 0; kx < s.k_w; ++kx) {
      const long ix = static_cast<long>(ox * s.stride) - pl + static_cast<long>(kx);
      if (ix < 0 || ix >= static_cast<long>(s.in_w)) continue;
      const std::size_t in_base =
          (static_cast<std::size_t>(iy) * s.in_w + static_cast<std::size_t>(ix)) * s.in_c;
      const std::size_t wk = w_base + (ky * s.k_w + kx) * s.in_c;
      for (std::size_t ic = 0; ic < s.in_c; ++ic) fn(wk + ic, in_base + ic);
    }
  }
}

}  // namespace

Tensor lc_linear(const LcSpec& spec, const Tensor& weights, const Tensor* bias,
                 const Tensor& x) {
  check_rows(x, spec.in_dim(), "lc_linear");
  const std::size_t batch = batch_of(x);
  Tensor y({spec.out_dim(), batch});
  const double* xd = x.data();
  double* yd = y.data();
  const double* wd = weights.data();
  for (std::size_t oy = 0; oy < spec.out_h(); ++oy)
    for (std::size_t ox = 0; ox < spec.out_w(); ++ox)
      for (std::size_t oc = 0; oc < spec.out_c; ++oc) {
        const std::size_t o = (oy * spec.out_w() + ox) * spec.out_c + oc;
        const double b = bias ? (*bias)[spec.tied ? oc : o] : 0.0;
        for (std::size_t s = 0; s < batch; ++s) yd[o * batch + s] = b;
        for_each_tap(spec, oy, ox, oc, [&](std::size_t wi, std::size_t ii) {
          const double w = wd[wi];
          for (std::size_t s = 0; s < batch; ++s)
            yd[o * batch + s] += w * xd[ii * batch + s];
        });
      }
  return y;
}

Tensor lc_transposed(const LcSpec& spec, const Tensor& weights, const Tensor& y) {
  check_rows(y, spec.out_dim(), "lc_transposed");
  const std::size_t batch = batch_of(y);
  Tensor x({spec.in_dim(), batch});
  const double* yd = y.data();
  double* xd = x.data();
  const double* wd = weights.data();
  for (std::size_t oy = 0; oy < spec.out_h(); ++oy)
    for (std::size_t ox = 0; ox < spec.out_w(); ++ox)
      for (std::size_t oc = 0; oc < spec.out_c; ++oc) {
        const std::size_t o = (oy * spec.out_w() + ox) * spec.out_c + oc;
        for_each_tap(spec, oy, ox, oc, [&](std::size_t wi, std::size_t ii) {
          const double w = wd[wi];
          for (std::size_t s = 0; s < batch; ++s)
            xd[ii * batch + s] += w * yd[o * batch + s];
        });
      }
  return x;
}

void lc_weight_grads(const LcSpec& spec, const Tensor& delta_out, const Tensor& x,
                     Tensor& w_grad, Tensor* b_grad) {
  check_rows(delta_out, spec.out_dim(), "lc_weight_grads");
  check_rows(x, spec.in_dim(), "lc_weight_grads");
  const std::size_t batch = batch_of(x);
  const double* dd = delta_out.data();
  const double* xd = x.data();
  double* gd = w_grad.data();
  for (std::size_t oy = 0; oy < spec.out_h(); ++oy)
    for (std::size_t ox = 0; ox < spec.out_w(); ++ox)
      for (std::size_t oc = 0; oc < spec.out_c; ++oc) {
        const std::size_t o = (oy * spec.out_w() + ox) * spec.out_c + oc;
        if (b_grad) {
          double acc = 0.0;
          for (std::size_t s = 0; s < batch; ++s) acc += dd[o * batch + s];
          (*b_grad)[spec.tied ? oc : o] += acc;
        }
        for_each_tap(spec, oy, ox, oc, [&](std::size_t wi, std::size_t ii) {
          double acc = 0.0;
          for (std::size_t s = 0; s < batch; ++s)
            acc += dd[o * batch + s] * xd[ii * batch + s];
          gd[wi] += acc;
        });
      }
}

void lc_transposed_weight_grads(const LcSpec& spec, const Tensor& delta_in, const Tensor& y,
                                Tensor& w_grad) {
  check_rows(delta_in, spec.in_dim(), "lc_transposed_weight_grads");
  check_rows(y, spec.out_dim(), "lc_transposed_weight_grads");
  const std::size_t batch = batch_of(y);
  const double* dd = delta_in.data();
  const double* yd = y.data();
  double* gd = w_grad.data();
  for (std::size_t oy = 0; oy < spec.out_h(); ++oy)
    for (std::size_t ox = 0; ox < spec.out_w(); ++ox)
      for (std::size_t oc = 0; oc < spec.out_c; ++oc) {
        const std::size_t o = (oy * spec.out_w() + ox) * spec.out_c + oc;
        for_each_tap(spec, oy, ox, oc, [&](std::size_t wi, std::size_t ii) {
          double acc = 0.0;
          for (std::size_t s = 0; s < batch; ++s)
            acc += yd[o * batch + s] * dd[ii * batch + s];
          gd[wi] += acc;
        });
      }
}

std::pair<Tensor, Tensor> Layer::forward(const Tensor& h) const {
  Tensor pre = linear(h);
  Tensor out = apply_activation(activation, pre, aux_z);
  return {std::move(pre), std::move(out)};
}

DenseLayer::DenseLayer(Tensor w, Tensor b, Activation act)
    : w_(std::move(w)), b_(std::move(b)) {
  activation = act;
  if (w_.rank() != 2 || b_.size() != w_.rows())
    throw DimensionError("dense layer: W " + w_.shape_str() + " and b " + b_.shape_str() +
                         " are inconsistent");
}

Tensor DenseLayer::linear(const Tensor& h) const {
  ++weight_reads_;
  check_rows(h, input_dim(), "dense linear");
  Tensor in = h.rank() == 2 ? h : Tensor({h.size(), 1}, std::vector<double>(h.data(), h.data() + h.size()));
  Tensor pre = matmul(w_, in);
  add_bias_columns(pre, b_);
  return pre;
}

Tensor DenseLayer::transpose_apply(const Tensor& y) const {
  ++weight_reads_;
  check_rows(y, output_dim(), "dense transpose_apply");
  // Materialize Wᵀ so BP and FA-with-transposes share a bitwise-identical
  // multiply path.
  return matmul(transpose(w_), y);
}

void DenseLayer::param_grads(const Tensor& delta, const Tensor& input,
                             std::vector<Tensor>& out) const {
  const std::size_t batch = batch_of(delta);
  Tensor w_grad = matmul(delta, transpose(input));
  Tensor b_grad({b_.size()});
  for (std::size_t r = 0; r < b_.size(); ++r) {
    double acc = 0.0;
    for (std::size_t s = 0; s < batch; ++s) acc += delta[r * batch + s];
    b_grad[r] = acc;
  }
  if (frozen_rows > 0) {
    const std::size_t first = output_dim() - frozen_rows;
    for (std::size_t r = first; r < output_dim(); ++r) {
      for (std::size_t c = 0; c < w_.cols(); ++c) w_grad.at(r, c) = 0.0;
      b_grad[r] = 0.0;
    }
  }
  out.push_back(std::move(w_grad));
  out.push_back(std::move(b_grad));
}

LocallyConnectedLayer::LocallyConnectedLayer(LcSpec spec, Tensor weights, Tensor bias,
                                             Activation act)
    : spec_(spec), weights_(std::move(weights)), bias_(std::move(bias)) {
  activation = act;
  if (weights_.shape() != spec_.weight_shape() || bias_.shape() != spec_.bias_shape())
    throw DimensionError("locally connected layer: parameter shapes do not match spec");
}

Tensor LocallyConnectedLayer::linear(const Tensor& h) const {
  ++weight_reads_;
  return lc_linear(spec_, weights_, &bias_, h);
}

Tensor LocallyConnectedLayer::transpose_apply(const Tensor& y) const {
  ++weight_reads_;
  return lc_transposed(spec_, weights_, y);
}

void LocallyConnectedLayer::param_grads(const Tensor& delta, const Tensor& input,
                                        std::vector<Tensor>& out) const {
  Tensor w_grad(spec_.weight_shape());
  Tensor b_grad(spec_.bias_shape());
  lc_weight_grads(spec_, delta, input, w_grad, &b_grad);
  out.push_back(std::move(w_grad));
  out.push_back(std::move(b_grad));
}

std::pair<Tensor, Tensor> InverseLayer::forward(const Tensor& y) const {
  Tensor pre = linear(y);
  Tensor out = apply_activation(activation, pre);
  return {std::move(pre), std::move(out)};
}

InverseDense::InverseDense(Tensor v, Tensor c, Activation act)
    : v_(std::move(v)), c_(std::move(c)) {
  activation = act;
  if (v_.rank() != 2 || c_.size() != v_.rows())
    throw DimensionError("inverse dense: V " + v_.shape_str() + " and c " + c_.shape_str() +
                         " are inconsistent");
}

Tensor InverseDense::linear(const Tensor& y) const {
  check_rows(y, input_dim(), "inverse dense");
  Tensor pre = matmul(v_, y);
  add_bias_columns(pre, c_);
  return pre;
}

void InverseDense::param_grads(const Tensor& delta, const Tensor& input,
                               std::vector<Tensor>& out) const {
  const std::size_t batch = batch_of(delta);
  out.push_back(matmul(delta, transpose(input)));
  Tensor c_grad({c_.size()});
  for (std::size_t r = 0; r < c_.size(); ++r) {
    double acc = 0.0;
    for (std::size_t s = 0; s < batch; ++s) acc += delta[r * batch + s];
    c_grad[r] = acc;
  }
  out.push_back(std::move(c_grad));
}

InverseLocallyConnected::InverseLocallyConnected(LcSpec spec, Tensor weights, Tensor c,
                                                 Activation act)
    : spec_(spec), weights_(std::move(weights)), c_(std::move(c)) {
  activation = act;
  if (weights_.shape() != spec_.weight_shape() || c_.size() != spec_.in_dim())
    throw DimensionError("inverse LC: parameter shapes do not match spec");
}

Tensor InverseLocallyConnected::linear(const Tensor& y) const {
  check_rows(y, input_dim(), "inverse LC");
  Tensor pre = lc_transposed(spec_, weights_, y);
  add_bias_columns(pre, c_);
  return pre;
}

void InverseLocallyConnected::param_grads(const Tensor& delta, const Tensor& input,
                                          std::vector<Tensor>& out) const {
  Tensor w_grad(spec_.weight_shape());
  lc_transposed_weight_grads(spec_, delta, input, w_grad);
  out.push_back(std::move(w_grad));
  const std::size_t batch = batch_of(delta);
  Tensor c_grad({c_.size()});
  for (std::size_t r = 0; r < c_.size(); ++r) {
    double acc = 0.0;
    for (std::size_t s = 0; s < batch; ++s) acc += delta[r * batch + s];
    c_grad[r] = acc;
  }
  out.push_back(std::move(c_grad));
}

std::vector<Tensor*> Network::forward_params() {
  std::vector<Tensor*> out;
  for (auto& l : layers)
    for (Tensor* p : l->params()) out.push_back(p);
  return out;
}

std::vector<Tensor*> Network::inverse_params() {
  std::vector<Tensor*> out;
  for (auto& g : inverses) {
    if (!g) continue;
    for (Tensor* p : g->params()) out.push_back(p);
  }
  return out;
}

std::uint64_t Network::forward_weight_reads() const {
  std::uint64_t n = 0;
  for (const auto& l : layers) n += l->weight_reads();
  return n;
}

ActivationTape forward_pass(const Network& net, const Tensor& x) {
  ActivationTape tape;
  tape.h.reserve(net.depth() + 1);
  tape.pre.reserve(net.depth());
  tape.h.push_back(x);
  for (const auto& layer : net.layers) {
    auto [pre, out] = layer->forward(tape.h.back());
    tape.pre.push_back(std::move(pre));
    tape.h.push_back(std::move(out));
  }
  return tape;
}

ArchSpec preset_arch(const std::string& name) {
  ArchSpec a;
  auto fc = [](std::size_t units) {
    LayerSpec s;
    s.kind = LayerSpec::Kind::Dense;
    s.units = units;
    return s;
  };
  auto lc = [](std::size_t kernel, std::size_t channels, std::size_t stride) {
    LayerSpec s;
    s.kind = LayerSpec::Kind::LocallyConnected;
    s.kernel = kernel;
    s.channels = channels;
    s.stride = stride;
    return s;
  };
  if (name == "mnist_fc") {
    a.in_h = 28; a.in_w = 28; a.in_c = 1;
    a.hidden = {fc(256), fc(256), fc(256), fc(256), fc(256)};
    a.outputs = 10;
  } else if (name == "mnist_lc") {
    a.in_h = 28; a.in_w = 28; a.in_c = 1;
    a.hidden = {lc(3, 32, 2), lc(3, 64, 2), fc(1024)};
    a.outputs = 10;
  } else if (name == "cifar_fc") {
    a.in_h = 32; a.in_w = 32; a.in_c = 3;
    a.hidden = {fc(1024), fc(1024), fc(1024)};
    a.outputs = 10;
  } else if (name == "cifar_lc") {
    a.in_h = 32; a.in_w = 32; a.in_c = 3;
    a.hidden = {lc(5, 64, 2), lc(5, 128, 2), lc(3, 256, 1), fc(1024)};
    a.outputs = 10;
  } else if (name == "imagenet_lc") {
    a.in_h = 224; a.in_w = 224; a.in_c = 3;
    a.hidden = {lc(9, 48, 4), lc(3, 48, 2), lc(5, 96, 1), lc(3, 96, 2),
                lc(3, 192, 1), lc(3, 192, 2), lc(3, 384, 1)};
    a.outputs = 1000;
  } else if (name == "autoencoder_mnist") {
    a.in_h = 28; a.in_w = 28; a.in_c = 1;
    a.hidden = {fc(512), fc(64), fc(512)};
    a.outputs = 784;
    a.output_activation = Activation::Identity;
  } else {
    throw ConfigError("unknown architecture preset: " + name);
  }
  return a;
}

namespace {

std::unique_ptr<Layer> make_forward_layer(const LayerSpec& s, std::size_t& cur_h,
                                          std::size_t& cur_w, std::size_t& cur_c,
                                          std::size_t& cur_dim, Activation act,
                                          SeededRng& rng) {
  if (s.kind == LayerSpec::Kind::Dense) {
    Tensor w = glorot_uniform(rng, cur_dim, s.units, {s.units, cur_dim});
    std::unique_ptr<Layer> layer =
        std::make_unique<DenseLayer>(std::move(w), Tensor({s.units}), act);
    cur_dim = s.units;
    cur_h = cur_w = 0;
    cur_c = s.units;
    return layer;
  }
  if (cur_h == 0)
    throw ConfigError("locally connected layer requires a spatial input");
  LcSpec spec;
  spec.in_h = cur_h; spec.in_w = cur_w; spec.in_c = cur_c;
  spec.k_h = spec.k_w = s.kernel;
  spec.stride = s.stride;
  spec.out_c = s.channels;
  const std::size_t fan_in = spec.k_h * spec.k_w * spec.in_c;
  const std::size_t fan_out = spec.k_h * spec.k_w * spec.out_c;
  Tensor w = glorot_uniform(rng, fan_in, fan_out, spec.weight_shape());
  std::unique_ptr<Layer> layer = std::make_unique<LocallyConnectedLayer>(
      spec, std::move(w), Tensor(spec.bias_shape()), act);
  cur_h = spec.out_h(); cur_w = spec.out_w(); cur_c = spec.out_c;
  cur_dim = spec.out_dim();
  return layer;
}

std::unique_ptr<InverseLayer> make_inverse_for(const Layer& fwd, SeededRng& rng) {
  if (const auto* d = dynamic_cast<const DenseLayer*>(&fwd)) {
    const std::size_t in = d->input_dim(), out = d->output_dim();
    Tensor v = glorot_uniform(rng, out, in, {in, out});
    return std::make_unique<InverseDense>(std::move(v), Tensor({in}), Activation::Tanh);
  }
  const auto* l = dynamic_cast<const LocallyConnectedLayer*>(&fwd);
  const LcSpec& spec = l->spec();
  const std::size_t fan_in = spec.k_h * spec.k_w * spec.out_c;
  const std::size_t fan_out = spec.k_h * spec.k_w * spec.in_c;
  Tensor w = glorot_uniform(rng, fan_in, fan_out, spec.weight_shape());
  return std::make_unique<InverseLocallyConnected>(spec, std::move(w),
                                                   Tensor({spec.in_dim()}), Activation::Tanh);
}

std::unique_ptr<Feedback> make_fa_feedback_for(const Layer& fwd, SeededRng& rng) {
  if (const auto* d = dynamic_cast<const DenseLayer*>(&fwd)) {
    const std::size_t in = d->input_dim(), out = d->output_dim();
    return std::make_unique<DenseFeedback>(glorot_uniform(rng, out, in, {in, out}));
  }
  const auto* l = dynamic_cast<const LocallyConnectedLayer*>(&fwd);
  const LcSpec& spec = l->spec();
  const std::size_t fan_in = spec.k_h * spec.k_w * spec.out_c;
  const std::size_t fan_out = spec.k_h * spec.k_w * spec.in_c;
  return std::make_unique<LcFeedback>(spec,
                                      glorot_uniform(rng, fan_in, fan_out, spec.weight_shape()));
}

}  // namespace

Network build_network(const ArchSpec& arch, SeededRng& rng, std::size_t aux_z,
                      FeedbackInit feedback) {
  if (aux_z > 0 && arch.output_activation != Activation::Softmax)
    throw ConfigError("auxiliary output units require a softmax classifier");
  Network net;
  net.aux_z = aux_z;
  std::size_t cur_h = arch.in_h, cur_w = arch.in_w, cur_c = arch.in_c;
  std::size_t cur_dim = arch.in_h * arch.in_w * arch.in_c;
  for (const LayerSpec& s : arch.hidden)
    net.layers.push_back(
        make_forward_layer(s, cur_h, cur_w, cur_c, cur_dim, Activation::Tanh, rng));
  // Output layer: dense, softmax for classifiers (plus aux_z frozen random
  // feature rows), identity for regression outputs.
  const std::size_t out_dim = arch.outputs + aux_z;
  Tensor w = glorot_uniform(rng, cur_dim, out_dim, {out_dim, cur_dim});
  auto out_layer =
      std::make_unique<DenseLayer>(std::move(w), Tensor({out_dim}), arch.output_activation);
  out_layer->aux_z = aux_z;
  out_layer->frozen_rows = aux_z;
  net.layers.push_back(std::move(out_layer));

  net.inverses.resize(net.depth());
  for (std::size_t l = 1; l < net.depth(); ++l)
    net.inverses[l] = make_inverse_for(*net.layers[l], rng);

  if (feedback == FeedbackInit::Fa) {
    net.fa_feedback.resize(net.depth());
    for (std::size_t l = 1; l < net.depth(); ++l)
      net.fa_feedback[l] = make_fa_feedback_for(*net.layers[l], rng);
  } else if (feedback == FeedbackInit::Dfa) {
    const std::size_t k = net.output_dim();
    for (std::size_t j = 0; j + 1 < net.depth(); ++j) {
      const std::size_t width = net.layers[j]->output_dim();
      net.dfa_feedback.push_back(glorot_uniform(rng, k, width, {width, k}));
    }
  }
  return net;
}

Network build_network(const std::string& preset, SeededRng& rng, std::size_t aux_z,
                      FeedbackInit feedback) {
  return build_network(preset_arch(preset), rng, aux_z, feedback);
}

}  // namespace targetprop
