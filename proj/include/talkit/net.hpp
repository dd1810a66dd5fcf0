#pragma once

// Shared two-layer classification + boundary-regression head used by both
// the proposal (C = 1) and detection stages.
//
//   h = relu(W1^T x + b1),  y = W2^T h + b2
//
// y holds C+1 triples (logit, start offset, end offset); class 0 is
// background. Offsets are in units: s' = s + o_s, e' = e + o_e.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "talkit/core.hpp"
#include "talkit/rng.hpp"

namespace talkit {

template <typename Scalar>
struct TwoLayerNet {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Matrix w1;  // n_f x hidden
  Vector b1;  // hidden
  Matrix w2;  // hidden x out_dim
  Vector b2;  // out_dim

  static TwoLayerNet zeros(Eigen::Index n_f, Eigen::Index hidden, int num_classes) {
    const Eigen::Index out = 3 * (Eigen::Index{num_classes} + 1);
    return {Matrix::Zero(n_f, hidden), Vector::Zero(hidden), Matrix::Zero(hidden, out),
            Vector::Zero(out)};
  }

  /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases.
  static TwoLayerNet random(Eigen::Index n_f, Eigen::Index hidden, int num_classes,
                            std::uint64_t seed) {
    TwoLayerNet net = zeros(n_f, hidden, num_classes);
    Rng rng(seed);
    const auto fill = [&rng](auto& m, double bound) {
      for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
      }
    };
    const double b_in = 1.0 / std::sqrt(static_cast<double>(n_f));
    const double b_hid = 1.0 / std::sqrt(static_cast<double>(hidden));
    fill(net.w1, b_in);
    fill(net.b1, b_in);
    fill(net.w2, b_hid);
    fill(net.b2, b_hid);
    return net;
  }

  Eigen::Index input_dim() const { return w1.rows(); }
  Eigen::Index hidden_dim() const { return w1.cols(); }
  Eigen::Index output_dim() const { return w2.cols(); }
  int num_classes() const { return static_cast<int>(output_dim() / 3) - 1; }
  std::int64_t parameter_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }

  bool all_finite() const {
    return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite();
  }

  template <typename T>
  TwoLayerNet<T> cast() const {
    return {w1.template cast<T>(), b1.template cast<T>(), w2.template cast<T>(),
            b2.template cast<T>()};
  }

  bool operator==(const TwoLayerNet& o) const {
    return w1 == o.w1 && b1 == o.b1 && w2 == o.w2 && b2 == o.b2;
  }
};

using Net = TwoLayerNet<float>;

/// One clip's head output: C+1 confidence logits and (start, end) offsets.
template <typename Scalar>
struct HeadOutput {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> logits;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 2> offsets;

  int num_classes() const { return static_cast<int>(logits.size()) - 1; }
};

/// Softmaxed confidences plus offsets; what the cascade and late fusion
/// operate on.
template <typename Scalar>
struct Decision {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> probs;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 2> offsets;

  int num_classes() const { return static_cast<int>(probs.size()) - 1; }
};

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> softmax(
    const Eigen::MatrixBase<Derived>& logits) {
  const auto shifted = (logits.array() - logits.maxCoeff()).exp().eval();
  return (shifted / shifted.sum()).matrix();
}

template <typename Scalar>
Decision<Scalar> decide(const HeadOutput<Scalar>& out) {
  return {softmax(out.logits), out.offsets};
}

/// Reinterprets one output column as C+1 (logit, o_s, o_e) triples.
template <typename Derived>
HeadOutput<typename Derived::Scalar> unpack_output(const Eigen::MatrixBase<Derived>& y) {
  const Eigen::Index k = y.size() / 3;
  HeadOutput<typename Derived::Scalar> out;
  out.logits.resize(k);
  out.offsets.resize(k, 2);
  for (Eigen::Index c = 0; c < k; ++c) {
    out.logits[c] = y[3 * c];
    out.offsets(c, 0) = y[3 * c + 1];
    out.offsets(c, 1) = y[3 * c + 2];
  }
  return out;
}

template <typename Scalar, typename Derived>
HeadOutput<Scalar> forward(const TwoLayerNet<Scalar>& net, const Eigen::MatrixBase<Derived>& x) {
  if (x.size() != net.input_dim()) {
    throw DataError("forward: feature length " + std::to_string(x.size()) +
                    " does not match network input " + std::to_string(net.input_dim()));
  }
  const typename TwoLayerNet<Scalar>::Vector h =
      (net.w1.transpose() * x + net.b1).cwiseMax(Scalar(0));
  const typename TwoLayerNet<Scalar>::Vector y = net.w2.transpose() * h + net.b2;
  return unpack_output(y);
}

// --- batched training path --------------------------------------------------

struct ClipLabel {
  int class_id = kBackground;
  double offset_start = 0.0;  // gt_start - clip_start
  double offset_end = 0.0;    // gt_end - clip_end
};

enum class Reduction { Mean, Sum };

struct LossConfig {
  double reg_weight = 1.0;  // lambda on smooth-L1
  Reduction reduction = Reduction::Mean;
};

template <typename Scalar>
struct ForwardCache {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> hidden;  // hidden x B, post-relu
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> output;  // out x B
};

template <typename Scalar, typename Derived>
ForwardCache<Scalar> forward_batch(const TwoLayerNet<Scalar>& net,
                                   const Eigen::MatrixBase<Derived>& x) {
  if (x.rows() != net.input_dim()) {
    throw DataError("forward_batch: feature rows do not match network input");
  }
  ForwardCache<Scalar> c;
  c.hidden = ((net.w1.transpose() * x).colwise() + net.b1).cwiseMax(Scalar(0));
  c.output = (net.w2.transpose() * c.hidden).colwise() + net.b2;
  return c;
}

template <typename Scalar>
struct LossResult {
  Scalar total = 0;
  Scalar classification = 0;
  Scalar regression = 0;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> per_sample;
  // d total / d output, out x B
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> grad_output;
};

/// Huber with delta = 1: 0.5 r^2 for |r| < 1, |r| - 0.5 otherwise.
template <typename Scalar>
std::pair<Scalar, Scalar> smooth_l1(Scalar r) {
  if (std::abs(r) < Scalar(1)) return {Scalar(0.5) * r * r, r};
  return {std::abs(r) - Scalar(0.5), r > 0 ? Scalar(1) : Scalar(-1)};
}

/// Softmax cross-entropy + lambda * smooth-L1 on the labeled class's
/// offsets; background samples carry no regression term.
template <typename Scalar>
LossResult<Scalar> loss(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& output,
                        std::span<const ClipLabel> labels, const LossConfig& cfg = {}) {
  const Eigen::Index batch = output.cols();
  const Eigen::Index k = output.rows() / 3;
  if (static_cast<Eigen::Index>(labels.size()) != batch) {
    throw DataError("loss: label count does not match batch");
  }
  LossResult<Scalar> r;
  r.per_sample.setZero(batch);
  r.grad_output.setZero(output.rows(), batch);
  const Scalar scale = cfg.reduction == Reduction::Mean ? Scalar(1) / Scalar(batch) : Scalar(1);
  const auto lambda = static_cast<Scalar>(cfg.reg_weight);

  for (Eigen::Index j = 0; j < batch; ++j) {
    const ClipLabel& label = labels[j];
    if (label.class_id < 0 || label.class_id >= k) {
      throw DataError("loss: label class " + std::to_string(label.class_id) + " out of range");
    }
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> logits(k);
    for (Eigen::Index c = 0; c < k; ++c) logits[c] = output(3 * c, j);
    const Scalar m = logits.maxCoeff();
    const Scalar lse = m + std::log((logits.array() - m).exp().sum());
    const Scalar ce = lse - logits[label.class_id];
    for (Eigen::Index c = 0; c < k; ++c) {
      const Scalar p = std::exp(logits[c] - lse);
      r.grad_output(3 * c, j) = scale * (p - (c == label.class_id ? Scalar(1) : Scalar(0)));
    }
    Scalar reg = 0;
    if (label.class_id != kBackground) {
      const Eigen::Index row = 3 * label.class_id;
      const auto [ls, gs] =
          smooth_l1(output(row + 1, j) - static_cast<Scalar>(label.offset_start));
      const auto [le, ge] = smooth_l1(output(row + 2, j) - static_cast<Scalar>(label.offset_end));
      reg = ls + le;
      r.grad_output(row + 1, j) = scale * lambda * gs;
      r.grad_output(row + 2, j) = scale * lambda * ge;
    }
    r.per_sample[j] = ce + lambda * reg;
    r.classification += scale * ce;
    r.regression += scale * reg;
  }
  r.total = r.classification + lambda * r.regression;
  return r;
}

template <typename Scalar>
struct Gradients {
  typename TwoLayerNet<Scalar>::Matrix w1;
  typename TwoLayerNet<Scalar>::Vector b1;
  typename TwoLayerNet<Scalar>::Matrix w2;
  typename TwoLayerNet<Scalar>::Vector b2;
  Scalar loss = 0;
};

/// Analytic gradients of loss() with respect to all four tensors.
template <typename Scalar, typename Derived>
Gradients<Scalar> backward(const TwoLayerNet<Scalar>& net, const Eigen::MatrixBase<Derived>& x,
                           std::span<const ClipLabel> labels, const LossConfig& cfg = {}) {
  const ForwardCache<Scalar> fc = forward_batch(net, x);
  const LossResult<Scalar> lr = loss<Scalar>(fc.output, labels, cfg);
  Gradients<Scalar> g;
  g.loss = lr.total;
  g.w2.noalias() = fc.hidden * lr.grad_output.transpose();
  g.b2 = lr.grad_output.rowwise().sum();
  typename TwoLayerNet<Scalar>::Matrix dh = net.w2 * lr.grad_output;
  dh = dh.cwiseProduct((fc.hidden.array() > Scalar(0)).matrix().template cast<Scalar>());
  g.w1.noalias() = x * dh.transpose();
  g.b1 = dh.rowwise().sum();
  return g;
}

// --- trainer ----------------------------------------------------------------

struct TrainConfig {
  int batch_size = 128;
  double learning_rate = 0.001;
  int iterations = 50000;
  int lr_decay_step = 30000;  // lr *= lr_decay_factor every lr_decay_step iterations
  double lr_decay_factor = 0.1;
  double momentum = 0.0;
  double reg_weight = 1.0;
  std::uint64_t seed = 0;
  int log_every = 100;

  void validate() const;
};

struct TrainingSet {
  Eigen::MatrixXf features;  // n_f x N
  std::vector<ClipLabel> labels;

  Eigen::Index size() const { return features.cols(); }
};

struct LossPoint {
  int iteration = 0;
  double loss = 0.0;
};

struct TrainResult {
  Net net;
  std::vector<LossPoint> loss_curve;
};

/// Minibatch SGD over reshuffled epochs. Pure function of (net, data, cfg).
/// Throws NumericError if the loss or weights become non-finite.
TrainResult train(Net net, const TrainingSet& data, const TrainConfig& cfg);

/// Fraction of samples whose argmax class matches the label.
double accuracy(const Net& net, const TrainingSet& data);

// --- checkpoint -----------------------------------------------------------------
// little-endian: "TLN1", u32 n_f, u32 hidden, u32 out_dim, then W1, b1, W2,
// b2 as f32 (matrices row-major).

void save_checkpoint(const std::filesystem::path& path, const Net& net);
Net load_checkpoint(const std::filesystem::path& path);

}  // namespace talkit
