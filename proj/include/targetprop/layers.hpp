#pragma once

#include <memory>
#include <utility>

#include "targetprop/tensor.hpp"

namespace targetprop {

enum class Activation { Identity, Tanh, Softmax };

/// Applies an activation column-wise. When `aux_z > 0` (composite classifier
/// output [o, z]) the softmax covers the first rows only and the trailing z
/// rows get tanh.
Tensor apply_activation(Activation act, const Tensor& pre, std::size_t aux_z = 0);

/// Elementwise derivative for Identity/Tanh evaluated at the pre-activation.
Tensor activation_deriv(Activation act, const Tensor& pre);

/// Geometry of a locally-connected map: a convolution-shaped receptive-field
/// structure whose weights are untied per output location unless `tied`.
struct LcSpec {
  std::size_t in_h = 0, in_w = 0, in_c = 0;
  std::size_t k_h = 0, k_w = 0;
  std::size_t stride = 1;
  std::size_t out_c = 0;
  bool tied = false;

  std::size_t out_h() const { return (in_h + stride - 1) / stride; }
  std::size_t out_w() const { return (in_w + stride - 1) / stride; }
  std::size_t in_dim() const { return in_h * in_w * in_c; }
  std::size_t out_dim() const { return out_h() * out_w() * out_c; }

  // "Same" zero padding: output size = ceil(in/stride); the extra element of
  // an odd total pad goes on the bottom/right.
  long pad_top() const { return static_cast<long>(((out_h() - 1) * stride + k_h >= in_h ? (out_h() - 1) * stride + k_h - in_h : 0) / 2); }
  long pad_left() const { return static_cast<long>(((out_w() - 1) * stride + k_w >= in_w ? (out_w() - 1) * stride + k_w - in_w : 0) / 2); }

  std::vector<std::size_t> weight_shape() const;
  std::vector<std::size_t> bias_shape() const;
};

/// y = W x (+ b). Input columns are flattened (row, col, channel) images.
Tensor lc_linear(const LcSpec& spec, const Tensor& weights, const Tensor* bias, const Tensor& x);
/// x = Wᵀ y: the exact adjoint of the linear map, no bias.
Tensor lc_transposed(const LcSpec& spec, const Tensor& weights, const Tensor& y);
/// Gradients of lc_linear w.r.t. weights/bias given the delta at its output.
void lc_weight_grads(const LcSpec& spec, const Tensor& delta_out, const Tensor& x,
                     Tensor& w_grad, Tensor* b_grad);
/// Gradients of lc_transposed w.r.t. weights given the delta at its output
/// (the forward layer's input side).
void lc_transposed_weight_grads(const LcSpec& spec, const Tensor& delta_in, const Tensor& y,
                                Tensor& w_grad);

/// A forward layer operating on batches column-wise: input [in_dim x B].
/// Reads of the forward weights are counted so learning rules can be audited
/// for weight-transport freedom.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::size_t input_dim() const = 0;
  virtual std::size_t output_dim() const = 0;

  /// W h + b.
  virtual Tensor linear(const Tensor& h) const = 0;
  /// Wᵀ y (no bias): exact adjoint of the linear part.
  virtual Tensor transpose_apply(const Tensor& y) const = 0;
  /// Appends gradients (one per params() entry) given the delta at the
  /// pre-activation and the layer input.
  virtual void param_grads(const Tensor& delta, const Tensor& input,
                           std::vector<Tensor>& out) const = 0;
  virtual std::vector<Tensor*> params() = 0;

  /// (pre, out) where out = activation(pre).
  std::pair<Tensor, Tensor> forward(const Tensor& h) const;

  std::uint64_t weight_reads() const { return weight_reads_; }

  Activation activation = Activation::Tanh;
  std::size_t aux_z = 0;       // composite output [o, z]; softmax over o only
  std::size_t frozen_rows = 0; // trailing output rows with fixed parameters

 protected:
  mutable std::uint64_t weight_reads_ = 0;
};

class DenseLayer : public Layer {
 public:
  DenseLayer(Tensor w, Tensor b, Activation act);

  std::size_t input_dim() const override { return w_.cols(); }
  std::size_t output_dim() const override { return w_.rows(); }
  Tensor linear(const Tensor& h) const override;
  Tensor transpose_apply(const Tensor& y) const override;
  void param_grads(const Tensor& delta, const Tensor& input,
                   std::vector<Tensor>& out) const override;
  std::vector<Tensor*> params() override { return {&w_, &b_}; }

  const Tensor& weights() const { return w_; }
  const Tensor& bias() const { return b_; }
  Tensor& mutable_weights() { return w_; }

 private:
  Tensor w_;  // [out x in]
  Tensor b_;  // [out]
};

class LocallyConnectedLayer : public Layer {
 public:
  LocallyConnectedLayer(LcSpec spec, Tensor weights, Tensor bias, Activation act);

  std::size_t input_dim() const override { return spec_.in_dim(); }
  std::size_t output_dim() const override { return spec_.out_dim(); }
  Tensor linear(const Tensor& h) const override;
  Tensor transpose_apply(const Tensor& y) const override;
  void param_grads(const Tensor& delta, const Tensor& input,
                   std::vector<Tensor>& out) const override;
  std::vector<Tensor*> params() override { return {&weights_, &bias_}; }

  const LcSpec& spec() const { return spec_; }
  const Tensor& weights() const { return weights_; }

 private:
  LcSpec spec_;
  Tensor weights_;
  Tensor bias_;
};

/// Learned approximate inverse g mapping a forward layer's output space back
/// to its input space.
class InverseLayer {
 public:
  virtual ~InverseLayer() = default;

  virtual std::size_t input_dim() const = 0;   // forward layer's output dim
  virtual std::size_t output_dim() const = 0;  // forward layer's input dim

  virtual Tensor linear(const Tensor& y) const = 0;  // V y + c
  virtual void param_grads(const Tensor& delta, const Tensor& input,
                           std::vector<Tensor>& out) const = 0;
  virtual std::vector<Tensor*> params() = 0;

  /// (pre, out) with out = activation(pre).
  std::pair<Tensor, Tensor> forward(const Tensor& y) const;
  /// g(y).
  Tensor apply(const Tensor& y) const { return forward(y).second; }

  Activation activation = Activation::Tanh;
};

class InverseDense : public InverseLayer {
 public:
  InverseDense(Tensor v, Tensor c, Activation act);

  std::size_t input_dim() const override { return v_.cols(); }
  std::size_t output_dim() const override { return v_.rows(); }
  Tensor linear(const Tensor& y) const override;
  void param_grads(const Tensor& delta, const Tensor& input,
                   std::vector<Tensor>& out) const override;
  std::vector<Tensor*> params() override { return {&v_, &c_}; }

 private:
  Tensor v_;  // [in x out] relative to the paired forward layer
  Tensor c_;  // [in]
};

/// Locally-connected inverse: the transposed sparsity pattern of the paired
/// forward layer with independent weights.
class InverseLocallyConnected : public InverseLayer {
 public:
  InverseLocallyConnected(LcSpec spec, Tensor weights, Tensor c, Activation act);

  std::size_t input_dim() const override { return spec_.out_dim(); }
  std::size_t output_dim() const override { return spec_.in_dim(); }
  Tensor linear(const Tensor& y) const override;
  void param_grads(const Tensor& delta, const Tensor& input,
                   std::vector<Tensor>& out) const override;
  std::vector<Tensor*> params() override { return {&weights_, &c_}; }

 private:
  LcSpec spec_;     // geometry of the paired forward layer
  Tensor weights_;  // untied weight tensor, forward layout
  Tensor c_;        // [in_dim]
};

/// Fixed random error-transport map for FA/DFA; never updated.
class Feedback {
 public:
  virtual ~Feedback() = default;
  virtual Tensor apply(const Tensor& delta) const = 0;
};

class DenseFeedback : public Feedback {
 public:
  explicit DenseFeedback(Tensor b) : b_(std::move(b)) {}
  Tensor apply(const Tensor& delta) const override { return matmul(b_, delta); }

 private:
  Tensor b_;
};

class LcFeedback : public Feedback {
 public:
  LcFeedback(LcSpec spec, Tensor weights) : spec_(spec), weights_(std::move(weights)) {}
  Tensor apply(const Tensor& delta) const override {
    return lc_transposed(spec_, weights_, delta);
  }

 private:
  LcSpec spec_;
  Tensor weights_;
};

/// One entry per layer of a network.
struct LayerSpec {
  enum class Kind { Dense, LocallyConnected };
  Kind kind = Kind::Dense;
  std::size_t units = 0;                           // dense
  std::size_t kernel = 0, channels = 0, stride = 1;  // locally connected
};

struct ArchSpec {
  std::size_t in_h = 0, in_w = 0, in_c = 1;
  std::vector<LayerSpec> hidden;
  std::size_t outputs = 0;
  Activation output_activation = Activation::Softmax;
};

struct Network {
  std::vector<std::unique_ptr<Layer>> layers;
  // inverses[l] pairs layers[l]; inverses[0] stays null ("every layer except
  // the first").
  std::vector<std::unique_ptr<InverseLayer>> inverses;
  // FA: fa_feedback[l] replaces W_lᵀ in the backward recursion, l >= 1.
  std::vector<std::unique_ptr<Feedback>> fa_feedback;
  // DFA: dfa_feedback[j] maps the output delta to hidden layer j's width.
  std::vector<Tensor> dfa_feedback;
  std::size_t aux_z = 0;

  std::size_t depth() const { return layers.size(); }
  std::size_t input_dim() const { return layers.front()->input_dim(); }
  std::size_t output_dim() const { return layers.back()->output_dim(); }

  std::vector<Tensor*> forward_params();
  std::vector<Tensor*> inverse_params();
  std::uint64_t forward_weight_reads() const;
};

struct ActivationTape {
  std::vector<Tensor> h;    // h[0] = x, ..., h[L]
  std::vector<Tensor> pre;  // pre[l] is the affine output of layers[l]
};

ActivationTape forward_pass(const Network& net, const Tensor& x);

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Known presets: mnist_fc, mnist_lc, cifar_fc, cifar_lc, imagenet_lc,
/// autoencoder_mnist.
ArchSpec preset_arch(const std::string& name);

enum class FeedbackInit { None, Fa, Dfa };

/// Glorot weights, zero biases, mirrored inverses for layers 2..L. aux_z > 0
/// appends frozen auxiliary output units to a softmax classifier.
Network build_network(const ArchSpec& arch, SeededRng& rng, std::size_t aux_z = 0,
                      FeedbackInit feedback = FeedbackInit::None);
Network build_network(const std::string& preset, SeededRng& rng, std::size_t aux_z = 0,
                      FeedbackInit feedback = FeedbackInit::None);

}  // namespace targetprop
