#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "ulab/error.hpp"
#include "ulab/rng.hpp"

namespace ulab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation : std::uint32_t { relu = 0, tanh = 1, identity = 2 };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "?";
}

inline Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "identity") return Activation::identity;
  throw ValidationError("unknown activation '" + std::string(s) + "'");
}

template <typename Scalar>
struct LayerTensors {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> weight;  // fan_out x fan_in
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> bias;
};

using LayerParams = LayerTensors<double>;
using Gradients = std::vector<LayerParams>;
using ParamMask = std::vector<LayerTensors<bool>>;

// Dense feed-forward classifier. Hidden layers use `activation`, the output
// layer is linear (logits).
struct ModelState {
  std::vector<int> layer_dims;
  Activation activation = Activation::relu;
  std::uint64_t seed = 0;
  std::vector<LayerParams> layers;
  std::vector<LayerParams> momentum;

  // Glorot-uniform weights, zero biases, zero momentum.
  static ModelState init(std::vector<int> dims, std::uint64_t seed, Activation act = Activation::relu) {
    if (dims.size() < 2) throw StructuralError("layer_dims needs at least input and output sizes");
    for (int d : dims)
      if (d <= 0) throw StructuralError("layer_dims must be positive");
    ModelState m;
    m.layer_dims = std::move(dims);
    m.activation = act;
    m.seed = seed;
    Rng rng(derive_seed(seed, Stream::init));
    for (std::size_t l = 0; l + 1 < m.layer_dims.size(); ++l) {
      const int fan_in = m.layer_dims[l];
      const int fan_out = m.layer_dims[l + 1];
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      LayerParams p{Matrix(fan_out, fan_in), Vector::Zero(fan_out)};
      // Row-major fill so the draw order is independent of Eigen's storage order.
      for (int r = 0; r < fan_out; ++r)
        for (int c = 0; c < fan_in; ++c) p.weight(r, c) = rng.uniform(-bound, bound);
      m.layers.push_back(p);
      m.momentum.push_back({Matrix::Zero(fan_out, fan_in), Vector::Zero(fan_out)});
    }
    return m;
  }

  int input_dim() const { return layer_dims.front(); }
  int n_classes() const { return layer_dims.back(); }
  std::size_t n_layers() const { return layers.size(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  void reset_momentum() {
    for (auto& b : momentum) {
      b.weight.setZero();
      b.bias.setZero();
    }
  }
};

inline bool all_finite(const ModelState& m) {
  for (const auto& l : m.layers)
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  for (const auto& l : m.momentum)
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  return true;
}

namespace detail {
inline bool same_bits(const double* a, const double* b, Eigen::Index n) {
  return n == 0 || std::memcmp(a, b, static_cast<std::size_t>(n) * sizeof(double)) == 0;
}
inline bool same_bits(const LayerParams& a, const LayerParams& b) {
  return a.weight.rows() == b.weight.rows() && a.weight.cols() == b.weight.cols() &&
         a.bias.size() == b.bias.size() && same_bits(a.weight.data(), b.weight.data(), a.weight.size()) &&
         same_bits(a.bias.data(), b.bias.data(), a.bias.size());
}
}  // namespace detail

// Bitwise equality of every parameter and momentum buffer.
inline bool bit_identical(const ModelState& a, const ModelState& b) {
  if (a.layer_dims != b.layer_dims || a.activation != b.activation || a.seed != b.seed) return false;
  if (a.layers.size() != b.layers.size() || a.momentum.size() != b.momentum.size()) return false;
  for (std::size_t l = 0; l < a.layers.size(); ++l)
    if (!detail::same_bits(a.layers[l], b.layers[l]) || !detail::same_bits(a.momentum[l], b.momentum[l]))
      return false;
  return true;
}

// Same but ignoring momentum buffers.
inline bool same_parameters(const ModelState& a, const ModelState& b) {
  if (a.layer_dims != b.layer_dims || a.layers.size() != b.layers.size()) return false;
  for (std::size_t l = 0; l < a.layers.size(); ++l)
    if (!detail::same_bits(a.layers[l], b.layers[l])) return false;
  return true;
}

struct Batch {
  Matrix inputs;            // n_examples x input_dim
  std::vector<int> labels;  // n_examples

  Eigen::Index size() const { return inputs.rows(); }
};

inline void validate(const ModelState& model, const Batch& batch) {
  if (batch.inputs.cols() != model.input_dim())
    throw StructuralError("batch input_dim " + std::to_string(batch.inputs.cols()) + " != model input_dim " +
                          std::to_string(model.input_dim()));
  if (static_cast<Eigen::Index>(batch.labels.size()) != batch.inputs.rows())
    throw StructuralError("label count does not match batch rows");
  for (int y : batch.labels)
    if (y < 0 || y >= model.n_classes()) throw StructuralError("label out of range");
}

namespace detail {

inline void activate(Activation act, Matrix& z) {
  switch (act) {
    case Activation::relu: z = z.cwiseMax(0.0); break;
    case Activation::tanh: z = z.array().tanh().matrix(); break;
    case Activation::identity: break;
  }
}

// d(activation)/dz given pre-activation z and post-activation a.
inline Matrix activation_derivative(Activation act, const Matrix& z, const Matrix& a) {
  switch (act) {
    case Activation::relu: return (z.array() > 0.0).cast<double>().matrix();
    case Activation::tanh: return (1.0 - a.array().square()).matrix();
    case Activation::identity: return Matrix::Ones(z.rows(), z.cols());
  }
  return {};
}

struct Trace {
  std::vector<Matrix> pre;   // pre-activations per layer
  std::vector<Matrix> post;  // post[0] = inputs, post[l+1] = activation(pre[l]) (identity for output)
};

inline Trace trace_forward(const ModelState& model, const Matrix& inputs) {
  Trace t;
  t.post.push_back(inputs);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& p = model.layers[l];
    Matrix z = t.post.back() * p.weight.transpose();
    z.rowwise() += p.bias.transpose();
    Matrix a = z;
    if (l + 1 < model.layers.size()) activate(model.activation, a);
    t.pre.push_back(std::move(z));
    t.post.push_back(std::move(a));
  }
  return t;
}

}  // namespace detail

inline Matrix forward(const ModelState& model, const Matrix& inputs) {
  if (inputs.cols() != model.input_dim()) throw StructuralError("input_dim mismatch");
  Matrix a = inputs;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& p = model.layers[l];
    Matrix z = a * p.weight.transpose();
    z.rowwise() += p.bias.transpose();
    if (l + 1 < model.layers.size()) detail::activate(model.activation, z);
    a = std::move(z);
  }
  return a;
}

inline Matrix forward(const ModelState& model, const Batch& batch) {
  validate(model, batch);
  return forward(model, batch.inputs);
}

// Row-wise softmax with max subtraction.
inline Matrix softmax(const Matrix& logits) {
  Matrix p = logits;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    const double mx = p.row(r).maxCoeff();
    p.row(r) = (p.row(r).array() - mx).exp().matrix();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

struct SoftmaxXent {
  Matrix probs;
  double loss = 0.0;  // mean negative log true-class probability
};

inline SoftmaxXent softmax_xent(const Matrix& logits, const std::vector<int>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows()) throw StructuralError("label count mismatch");
  SoftmaxXent out;
  out.probs = Matrix(logits.rows(), logits.cols());
  double total = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= logits.cols()) throw StructuralError("label out of range");
    const double mx = logits.row(r).maxCoeff();
    const auto shifted = (logits.row(r).array() - mx).eval();
    const double log_z = std::log(shifted.exp().sum());
    out.probs.row(r) = (shifted - log_z).exp().matrix();
    total += log_z - shifted(y);
  }
  out.loss = logits.rows() > 0 ? total / static_cast<double>(logits.rows()) : 0.0;
  return out;
}

// Per-example cross-entropy from logits (log-sum-exp form).
inline Vector per_example_loss(const Matrix& logits, const std::vector<int>& labels) {
  Vector out(logits.rows());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    const double log_z = mx + std::log((logits.row(r).array() - mx).exp().sum());
    out(r) = log_z - logits(r, labels[static_cast<std::size_t>(r)]);
  }
  return out;
}

struct LossAndGradients {
  double loss = 0.0;
  Gradients grads;
};

// Gradient of scale * mean cross-entropy over the batch.
inline LossAndGradients loss_and_gradients(const ModelState& model, const Batch& batch, double scale = 1.0) {
  validate(model, batch);
  const auto t = detail::trace_forward(model, batch.inputs);
  const auto sx = softmax_xent(t.post.back(), batch.labels);
  const double n = static_cast<double>(batch.size());

  Matrix delta = sx.probs;
  for (Eigen::Index r = 0; r < delta.rows(); ++r) delta(r, batch.labels[static_cast<std::size_t>(r)]) -= 1.0;
  delta *= scale / n;

  LossAndGradients out;
  out.loss = sx.loss;
  out.grads.resize(model.layers.size());
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    out.grads[l].weight = delta.transpose() * t.post[l];
    out.grads[l].bias = delta.colwise().sum().transpose();
    if (l > 0) {
      Matrix back = delta * model.layers[l].weight;
      delta = back.cwiseProduct(detail::activation_derivative(model.activation, t.pre[l - 1], t.post[l]));
    }
  }
  return out;
}

inline Gradients backward(const ModelState& model, const Batch& batch) {
  return loss_and_gradients(model, batch).grads;
}

// Row i = d(scale * loss_i)/d(input_i), the gradient of each example's own loss.
inline Matrix input_gradients(const ModelState& model, const Batch& batch, double scale = 1.0) {
  validate(model, batch);
  const auto t = detail::trace_forward(model, batch.inputs);
  Matrix delta = softmax(t.post.back());
  for (Eigen::Index r = 0; r < delta.rows(); ++r) delta(r, batch.labels[static_cast<std::size_t>(r)]) -= 1.0;
  delta *= scale;
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    Matrix back = delta * model.layers[l].weight;
    if (l == 0) return back;
    delta = back.cwiseProduct(detail::activation_derivative(model.activation, t.pre[l - 1], t.post[l]));
  }
  return {};
}

inline Vector input_gradient(const ModelState& model, const Batch& example, double scale = 1.0) {
  if (example.size() != 1) throw StructuralError("input_gradient expects a single example");
  return input_gradients(model, example, scale).row(0).transpose();
}

struct SgdParams {
  double lr = 0.1;
  double momentum = 0.0;
  double weight_decay = 0.0;
  double l1_gamma = 0.0;
};

inline void validate(const SgdParams& p) {
  if (!(p.lr > 0.0)) throw ValidationError("lr must be > 0");
  if (!(p.momentum >= 0.0 && p.momentum < 1.0)) throw ValidationError("momentum must be in [0,1)");
  if (!(p.weight_decay >= 0.0)) throw ValidationError("weight_decay must be >= 0");
  if (!(p.l1_gamma >= 0.0)) throw ValidationError("l1_gamma must be >= 0");
}

namespace detail {

inline double sign(double w) { return (w > 0.0) - (w < 0.0); }

template <typename Param, typename MaskT>
void sgd_update(Param& w, Param& buf, const Param& g, const SgdParams& p, const MaskT* mask) {
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (mask && !(*mask)(i)) continue;
    // Zero-valued terms are skipped rather than added so that disabled
    // regularizers leave the update bit-for-bit unchanged (no -0/+0 flips).
    double d = g(i);
    if (p.weight_decay != 0.0) d += p.weight_decay * w(i);
    if (p.l1_gamma != 0.0) d += p.l1_gamma * sign(w(i));
    buf(i) = p.momentum * buf(i) + d;
    w(i) -= p.lr * buf(i);
  }
}

}  // namespace detail

// buffer <- momentum*buffer + (grad + wd*w + l1*sign(w)); w <- w - lr*buffer.
// Parameters where the mask is false are left untouched, buffers included.
inline void sgd_step(ModelState& model, const Gradients& grads, const SgdParams& p, const ParamMask* mask = nullptr) {
  validate(p);
  if (grads.size() != model.layers.size()) throw StructuralError("gradient layer count mismatch");
  if (mask && mask->size() != model.layers.size()) throw StructuralError("mask layer count mismatch");
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto& layer = model.layers[l];
    auto& buf = model.momentum[l];
    const auto& g = grads[l];
    if (g.weight.rows() != layer.weight.rows() || g.weight.cols() != layer.weight.cols() ||
        g.bias.size() != layer.bias.size())
      throw StructuralError("gradient shape mismatch");
    detail::sgd_update(layer.weight, buf.weight, g.weight, p, mask ? &(*mask)[l].weight : nullptr);
    detail::sgd_update(layer.bias, buf.bias, g.bias, p, mask ? &(*mask)[l].bias : nullptr);
  }
}

inline double l1_norm(const ModelState& m) {
  double s = 0.0;
  for (const auto& l : m.layers) s += l.weight.cwiseAbs().sum() + l.bias.cwiseAbs().sum();
  return s;
}

inline double gradient_norm(const Gradients& g) {
  double s = 0.0;
  for (const auto& l : g) s += l.weight.squaredNorm() + l.bias.squaredNorm();
  return std::sqrt(s);
}

inline Gradients zeros_like(const ModelState& m) {
  Gradients g;
  for (const auto& l : m.layers) g.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
  return g;
}

// Argmax with ties toward the lowest class index.
inline int argmax_row(const Matrix& m, Eigen::Index r) {
  int best = 0;
  for (Eigen::Index c = 1; c < m.cols(); ++c)
    if (m(r, c) > m(r, best)) best = static_cast<int>(c);
  return best;
}

}  // namespace ulab
