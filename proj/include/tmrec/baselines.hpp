#pragma once

// Comparison learners: a sigmoid feed-forward network with softmax output
// and multinomial logistic regression (the same network with no hidden
// layer), trained by mini-batch SGD on cross-entropy.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "tmrec/container.hpp"
#include "tmrec/detail/binio.hpp"
#include "tmrec/detail/format.hpp"
#include "tmrec/detail/random.hpp"
#include "tmrec/detail/ranking.hpp"
#include "tmrec/error.hpp"

namespace tmrec {

inline const std::vector<std::size_t> kDefaultHiddenWidths{120, 110, 90, 80, 70};

/// Rows of x are examples.
struct RealDataset {
  Eigen::MatrixXd x;
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
};

class FeedForwardModel {
 public:
  FeedForwardModel() = default;

  /// widths = [input, hidden..., classes]. Weights are uniform in
  /// +-1/sqrt(fan_in), or zero when zero_init is set.
  FeedForwardModel(std::vector<std::size_t> widths, std::uint64_t seed, bool zero_init = false)
      : widths_(std::move(widths)) {
    if (widths_.size() < 2) throw ConfigError("network needs input and output widths");
    for (auto w : widths_) {
      if (w < 1) throw ConfigError("layer widths must be >= 1");
    }
    if (widths_.back() < 2) throw ConfigError("network needs at least two classes");
    auto rng = detail::derive_rng(seed, 0x6e6e);
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      const auto in = static_cast<Eigen::Index>(widths_[l]);
      const auto out = static_cast<Eigen::Index>(widths_[l + 1]);
      Eigen::MatrixXd w = Eigen::MatrixXd::Zero(in, out);
      Eigen::VectorXd b = Eigen::VectorXd::Zero(out);
      if (!zero_init) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        for (Eigen::Index c = 0; c < out; ++c) {
          for (Eigen::Index r = 0; r < in; ++r) w(r, c) = bound * (2.0 * detail::uniform01(rng) - 1.0);
        }
        for (Eigen::Index c = 0; c < out; ++c) b(c) = bound * (2.0 * detail::uniform01(rng) - 1.0);
      }
      weights.push_back(std::move(w));
      biases.push_back(std::move(b));
    }
  }

  // weights[l] is fan_in x fan_out: row i holds the outgoing weights of unit i
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  const std::vector<std::size_t>& widths() const { return widths_; }
  std::size_t input_width() const { return widths_.front(); }
  std::size_t num_classes() const { return widths_.back(); }
  std::size_t num_hidden_layers() const { return widths_.size() - 2; }
  std::size_t num_parameters() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
    return n;
  }

  void check_width(Eigen::Index cols) const {
    if (static_cast<std::size_t>(cols) != input_width()) {
      throw DimensionError("input width " + std::to_string(cols) + " does not match model width " +
                           std::to_string(input_width()));
    }
  }

  /// Softmax probabilities, one row per input row.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const {
    check_width(x.cols());
    Eigen::MatrixXd a = x;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      Eigen::MatrixXd z = a * weights[l];
      z.rowwise() += biases[l].transpose();
      if (l + 1 < weights.size()) {
        a = sigmoid(z);
      } else {
        a = softmax(z);
      }
    }
    return a;
  }

  Eigen::VectorXd forward(std::span<const double> x) const {
    Eigen::MatrixXd row(1, static_cast<Eigen::Index>(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i) row(0, static_cast<Eigen::Index>(i)) = x[i];
    return forward(row).row(0).transpose();
  }

  struct Gradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
  };

  /// Mean cross-entropy of the given rows and its gradient.
  double loss_and_gradient(const Eigen::MatrixXd& x, std::span<const std::size_t> labels,
                           Gradients* grad) const {
    check_width(x.cols());
    const auto n = x.rows();
    std::vector<Eigen::MatrixXd> acts{x};
    Eigen::MatrixXd logits;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      Eigen::MatrixXd z = acts.back() * weights[l];
      z.rowwise() += biases[l].transpose();
      if (l + 1 < weights.size()) {
        acts.push_back(sigmoid(z));
      } else {
        logits = std::move(z);
      }
    }
    double loss = 0.0;
    Eigen::MatrixXd delta(n, logits.cols());
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto y = labels[static_cast<std::size_t>(r)];
      if (y >= num_classes()) throw RangeError("label " + std::to_string(y) + " out of range");
      const double m = logits.row(r).maxCoeff();
      const double lse = m + std::log((logits.row(r).array() - m).exp().sum());
      loss += lse - logits(r, static_cast<Eigen::Index>(y));
      delta.row(r) = (logits.row(r).array() - lse).exp();
      delta(r, static_cast<Eigen::Index>(y)) -= 1.0;
    }
    const double inv = 1.0 / static_cast<double>(n);
    loss *= inv;
    if (!grad) return loss;
    delta *= inv;
    grad->weights.resize(weights.size());
    grad->biases.resize(biases.size());
    for (std::size_t l = weights.size(); l-- > 0;) {
      grad->weights[l].noalias() = acts[l].transpose() * delta;
      grad->biases[l] = delta.colwise().sum().transpose();
      if (l == 0) break;
      Eigen::MatrixXd back = delta * weights[l].transpose();
      delta = back.array() * acts[l].array() * (1.0 - acts[l].array());
    }
    return loss;
  }

  friend bool operator==(const FeedForwardModel& a, const FeedForwardModel& b) {
    return a.widths_ == b.widths_ && a.weights == b.weights && a.biases == b.biases;
  }

 private:
  static Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& z) {
    return (1.0 + (-z.array()).exp()).inverse().matrix();
  }
  static Eigen::MatrixXd softmax(Eigen::MatrixXd z) {
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      const double m = z.row(r).maxCoeff();
      z.row(r) = (z.row(r).array() - m).exp();
      z.row(r) /= z.row(r).sum();
    }
    return z;
  }

  std::vector<std::size_t> widths_;
};

inline FeedForwardModel make_mlp(std::size_t input_width, std::size_t num_classes, std::uint64_t seed,
                                 const std::vector<std::size_t>& hidden = kDefaultHiddenWidths,
                                 bool zero_init = false) {
  std::vector<std::size_t> widths{input_width};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(num_classes);
  return FeedForwardModel(widths, seed, zero_init);
}

inline FeedForwardModel make_lr(std::size_t input_width, std::size_t num_classes, std::uint64_t seed,
                                bool zero_init = false) {
  return FeedForwardModel({input_width, num_classes}, seed, zero_init);
}

struct SGDConfig {
  double learning_rate = 0.05;
  std::size_t batch_size = 64;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  }
};

/// Trains one epoch; returns the mean of the batch losses.
inline double train_sgd_epoch(FeedForwardModel& model, const RealDataset& data, const SGDConfig& config,
                              detail::Rng& rng, std::size_t epoch_index) {
  const auto n = data.size();
  if (n == 0) return 0.0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  detail::shuffle(order, rng);
  double total = 0.0;
  FeedForwardModel::Gradients grad;
  Eigen::MatrixXd batch;
  std::vector<std::size_t> labels;
  for (std::size_t start = 0; start < n; start += config.batch_size) {
    const auto stop = std::min(n, start + config.batch_size);
    batch.resize(static_cast<Eigen::Index>(stop - start), data.x.cols());
    labels.resize(stop - start);
    for (std::size_t i = start; i < stop; ++i) {
      batch.row(static_cast<Eigen::Index>(i - start)) = data.x.row(static_cast<Eigen::Index>(order[i]));
      labels[i - start] = data.labels[order[i]];
    }
    const double loss = model.loss_and_gradient(batch, labels, &grad);
    if (!std::isfinite(loss)) {
      throw DivergenceError("non-finite loss in epoch " + std::to_string(epoch_index), epoch_index);
    }
    total += loss * static_cast<double>(stop - start);
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
      model.weights[l].noalias() -= config.learning_rate * grad.weights[l];
      model.biases[l].noalias() -= config.learning_rate * grad.biases[l];
    }
  }
  return total / static_cast<double>(n);
}

/// Returns the per-epoch loss curve.
inline std::vector<double> train_sgd(FeedForwardModel& model, const RealDataset& data, const SGDConfig& config) {
  config.validate();
  if (data.x.rows() != static_cast<Eigen::Index>(data.size())) {
    throw DimensionError("feature rows do not match label count");
  }
  if (data.size()) model.check_width(data.x.cols());
  auto rng = detail::derive_rng(config.seed, 0x736764);
  std::vector<double> curve;
  for (std::size_t e = 0; e < config.epochs; ++e) curve.push_back(train_sgd_epoch(model, data, config, rng, e));
  return curve;
}

inline std::size_t predict(const FeedForwardModel& model, std::span<const double> x) {
  const auto p = model.forward(x);
  Eigen::Index best = 0;
  p.maxCoeff(&best);
  return static_cast<std::size_t>(best);
}

/// Class indices by descending probability, ties by ascending index.
inline std::vector<std::size_t> rank_classes(const FeedForwardModel& model, std::span<const double> x,
                                             std::size_t k) {
  if (k < 1 || k > model.num_classes()) throw RangeError("k must be in [1, num_classes]");
  const auto p = model.forward(x);
  return detail::top_k_indices(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())), k);
}

inline double accuracy(const FeedForwardModel& model, const RealDataset& data) {
  if (data.size() == 0) return 0.0;
  const auto p = model.forward(data.x);
  std::size_t hits = 0;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    Eigen::Index best = 0;
    p.row(r).maxCoeff(&best);
    hits += static_cast<std::size_t>(best) == data.labels[static_cast<std::size_t>(r)];
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

/// Sum of each input unit's outgoing first-layer weights.
inline std::vector<double> input_weight_sums(const FeedForwardModel& model) {
  const auto& w = model.weights.front();
  std::vector<double> sums(static_cast<std::size_t>(w.rows()));
  for (Eigen::Index r = 0; r < w.rows(); ++r) sums[static_cast<std::size_t>(r)] = w.row(r).sum();
  return sums;
}

struct NamedWeight {
  std::string name;
  double value = 0.0;
};

/// Mean weight sum per named group (e.g. all one-hot columns of one
/// attribute), ordered by descending magnitude. `group_of` maps each input
/// column to its group name.
inline std::vector<NamedWeight> grouped_weight_sums(std::span<const double> sums,
                                                    std::span<const std::string> group_of) {
  if (sums.size() != group_of.size()) throw DimensionError("one group name per input column required");
  std::vector<NamedWeight> out;
  std::vector<std::size_t> counts;
  for (std::size_t i = 0; i < sums.size(); ++i) {
    auto it = std::find_if(out.begin(), out.end(), [&](const NamedWeight& w) { return w.name == group_of[i]; });
    if (it == out.end()) {
      out.push_back({group_of[i], 0.0});
      counts.push_back(0);
      it = out.end() - 1;
    }
    it->value += sums[i];
    ++counts[static_cast<std::size_t>(it - out.begin())];
  }
  for (std::size_t g = 0; g < out.size(); ++g) out[g].value /= static_cast<double>(counts[g]);
  std::stable_sort(out.begin(), out.end(),
                   [](const NamedWeight& a, const NamedWeight& b) { return std::abs(a.value) > std::abs(b.value); });
  return out;
}

/// Two-row table: names, then values with six decimals.
inline std::string render_weight_table(std::span<const NamedWeight> weights) {
  std::vector<std::string> values;
  for (const auto& w : weights) values.push_back(detail::format_fixed(w.value, 6));
  std::ostringstream head, body;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const auto width = std::max(weights[i].name.size(), values[i].size());
    if (i) {
      head << " | ";
      body << " | ";
    }
    head << weights[i].name << std::string(width - weights[i].name.size(), ' ');
    body << std::string(width - values[i].size(), ' ') << values[i];
  }
  return head.str() + "\n" + body.str() + "\n";
}

// ---- persistence --------------------------------------------------------

inline std::vector<std::byte> serialize(const FeedForwardModel& model, const std::string& metadata = "") {
  detail::ByteWriter w;
  w.u64(model.widths().size());
  for (auto width : model.widths()) w.u64(width);
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    const auto& m = model.weights[l];
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) w.f64(m(r, c));
    }
    for (Eigen::Index i = 0; i < model.biases[l].size(); ++i) w.f64(model.biases[l](i));
  }
  const auto kind = model.num_hidden_layers() == 0 ? ModelKind::lr : ModelKind::mlp;
  return seal(kind, metadata, w.bytes());
}

inline FeedForwardModel deserialize_network(std::span<const std::byte> bytes, std::string* metadata = nullptr) {
  const auto sealed = unseal(bytes);
  if (sealed.kind != ModelKind::mlp && sealed.kind != ModelKind::lr) {
    throw FormatError("container holds a " + to_string(sealed.kind) + " model, expected mlp or lr");
  }
  detail::ByteReader r(sealed.payload);
  const auto layers = r.u64();
  if (layers < 2 || layers > 64) throw FormatError("implausible layer count");
  std::vector<std::size_t> widths;
  for (std::uint64_t i = 0; i < layers; ++i) {
    const auto w = r.u64();
    if (w < 1 || w > (std::uint64_t{1} << 24)) throw FormatError("implausible layer width");
    widths.push_back(static_cast<std::size_t>(w));
  }
  if ((sealed.kind == ModelKind::lr) != (layers == 2)) throw FormatError("model kind does not match layer count");
  FeedForwardModel model(widths, 0, true);
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    auto& m = model.weights[l];
    if (r.remaining() < static_cast<std::size_t>(m.size() + model.biases[l].size()) * 8) {
      throw FormatError("network payload truncated");
    }
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      for (Eigen::Index row = 0; row < m.rows(); ++row) m(row, c) = r.f64();
    }
    for (Eigen::Index i = 0; i < model.biases[l].size(); ++i) model.biases[l](i) = r.f64();
  }
  if (r.remaining()) throw FormatError("trailing bytes in network payload");
  if (metadata) *metadata = sealed.metadata;
  return model;
}

}  // namespace tmrec
