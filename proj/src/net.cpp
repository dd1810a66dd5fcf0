#include "talkit/net.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

namespace talkit {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (batch_size < 1 || iterations < 0 || lr_decay_step < 1 || log_every < 1) {
    throw UsageError("train: batch_size, lr_decay_step and log_every must be positive");
  }
  if (!(learning_rate >= 0.0) || !(lr_decay_factor > 0.0) || momentum < 0.0 || momentum >= 1.0) {
    throw UsageError("train: invalid learning-rate schedule or momentum");
  }
  if (reg_weight < 0.0) {
    throw UsageError("train: reg_weight must be >= 0");
  }
}

TrainResult train(Net net, const TrainingSet& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.size() == 0) {
    throw DataError("train: empty training set");
  }
  if (data.features.rows() != net.input_dim()) {
    throw DataError("train: feature length does not match network input");
  }
  if (static_cast<Eigen::Index>(data.labels.size()) != data.size()) {
    throw DataError("train: label count does not match features");
  }

  Rng rng(cfg.seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::size_t cursor = order.size();

  const auto batch = static_cast<Eigen::Index>(std::min<std::size_t>(cfg.batch_size, order.size()));
  Eigen::MatrixXf xb(net.input_dim(), batch);
  std::vector<ClipLabel> yb(static_cast<std::size_t>(batch));
  const LossConfig loss_cfg{cfg.reg_weight, Reduction::Mean};

  Gradients<float> velocity{Eigen::MatrixXf::Zero(net.w1.rows(), net.w1.cols()),
                            Eigen::VectorXf::Zero(net.b1.size()),
                            Eigen::MatrixXf::Zero(net.w2.rows(), net.w2.cols()),
                            Eigen::VectorXf::Zero(net.b2.size()), 0.0f};

  TrainResult result;
  for (int it = 0; it < cfg.iterations; ++it) {
    for (Eigen::Index j = 0; j < batch; ++j) {
      if (cursor == order.size()) {
        rng.shuffle(std::span(order));
        cursor = 0;
      }
      const Eigen::Index idx = order[cursor++];
      xb.col(j) = data.features.col(idx);
      yb[static_cast<std::size_t>(j)] = data.labels[static_cast<std::size_t>(idx)];
    }
    const Gradients<float> g = backward(net, xb, std::span<const ClipLabel>(yb), loss_cfg);
    if (!std::isfinite(g.loss)) {
      std::ostringstream os;
      os << "train: non-finite loss at iteration " << it;
      throw NumericError(os.str());
    }
    const auto lr =
        static_cast<float>(cfg.learning_rate * std::pow(cfg.lr_decay_factor, it / cfg.lr_decay_step));
    const auto mu = static_cast<float>(cfg.momentum);
    if (mu > 0.0f) {
      velocity.w1 = mu * velocity.w1 + g.w1;
      velocity.b1 = mu * velocity.b1 + g.b1;
      velocity.w2 = mu * velocity.w2 + g.w2;
      velocity.b2 = mu * velocity.b2 + g.b2;
      net.w1 -= lr * velocity.w1;
      net.b1 -= lr * velocity.b1;
      net.w2 -= lr * velocity.w2;
      net.b2 -= lr * velocity.b2;
    } else {
      net.w1 -= lr * g.w1;
      net.b1 -= lr * g.b1;
      net.w2 -= lr * g.w2;
      net.b2 -= lr * g.b2;
    }
    if (it % cfg.log_every == 0 || it + 1 == cfg.iterations) {
      result.loss_curve.push_back({it, static_cast<double>(g.loss)});
    }
  }
  if (!net.all_finite()) {
    throw NumericError("train: weights became non-finite");
  }
  result.net = std::move(net);
  return result;
}

double accuracy(const Net& net, const TrainingSet& data) {
  if (data.size() == 0) return 0.0;
  const ForwardCache<float> fc = forward_batch(net, data.features);
  Eigen::Index correct = 0;
  for (Eigen::Index j = 0; j < data.size(); ++j) {
    const HeadOutput<float> out = unpack_output(fc.output.col(j));
    Eigen::Index best = 0;
    out.logits.maxCoeff(&best);
    if (best == data.labels[static_cast<std::size_t>(j)].class_id) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::string& buf, std::size_t at) {
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data()) + at;
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}

template <typename M>
void put_tensor(std::string& out, const M& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_u32(out, std::bit_cast<std::uint32_t>(m(r, c)));
  }
}

template <typename M>
void get_tensor(const std::string& buf, std::size_t& at, M& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      m(r, c) = std::bit_cast<float>(get_u32(buf, at));
      at += 4;
    }
  }
}

}  // namespace

void save_checkpoint(const fs::path& path, const Net& net) {
  std::string buf = "TLN1";
  put_u32(buf, static_cast<std::uint32_t>(net.input_dim()));
  put_u32(buf, static_cast<std::uint32_t>(net.hidden_dim()));
  put_u32(buf, static_cast<std::uint32_t>(net.output_dim()));
  put_tensor(buf, net.w1);
  put_tensor(buf, net.b1);
  put_tensor(buf, net.w2);
  put_tensor(buf, net.b2);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw DataError("cannot write checkpoint '" + path.string() + "'");
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

Net load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open checkpoint '" + path.string() + "'");
  }
  const std::string buf{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (buf.size() < 16 || buf.compare(0, 4, "TLN1") != 0) {
    throw DataError("'" + path.string() + "': bad checkpoint magic (expected TLN1)");
  }
  const std::uint64_t n_f = get_u32(buf, 4);
  const std::uint64_t hidden = get_u32(buf, 8);
  const std::uint64_t out = get_u32(buf, 12);
  if (n_f == 0 || hidden == 0 || out < 6 || out % 3 != 0) {
    throw DataError("'" + path.string() + "': invalid checkpoint dimensions");
  }
  const std::uint64_t floats = n_f * hidden + hidden + hidden * out + out;
  if (buf.size() != 16 + 4 * floats) {
    throw DataError("'" + path.string() + "': checkpoint payload size mismatch");
  }
  Net net = Net::zeros(static_cast<Eigen::Index>(n_f), static_cast<Eigen::Index>(hidden),
                       static_cast<int>(out / 3) - 1);
  std::size_t at = 16;
  get_tensor(buf, at, net.w1);
  get_tensor(buf, at, net.b1);
  get_tensor(buf, at, net.w2);
  get_tensor(buf, at, net.b2);
  if (!net.all_finite()) {
    throw DataError("'" + path.string() + "': non-finite weights");
  }
  return net;
}

}  // namespace talkit
