#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "moexda/autograd.hpp"
#include "moexda/data.hpp"
#include "moexda/errors.hpp"
#include "moexda/loss.hpp"
#include "moexda/rng.hpp"
#include "moexda/tensor.hpp"
#include "moexda/vit.hpp"

namespace moexda {

struct TrainConfig {
  int epochs = 10;
  int batch_size = 4;
  int frames = 16;
  double lr = 1e-4;
  double weight_decay = 1e-4;
  std::uint64_t seed = 1;
  std::string checkpoint_path = "checkpoint.bin";
  std::string metrics_path = "metrics.ndjson";

  void validate() const {
    if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
    if (frames < 1) throw ConfigError("train config: frames must be >= 1");
    if (!(lr >= 0.0)) throw ConfigError("train config: lr must be >= 0");
    if (!(weight_decay >= 0.0)) throw ConfigError("train config: weight_decay must be >= 0");
  }
};

// Adam with decoupled weight decay. Parameters whose gradient was never
// touched this step are treated as having zero gradient.
class AdamW {
 public:
  explicit AdamW(std::vector<ag::Var> params, double lr, double weight_decay,
                 double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const ag::Var& p : params_) {
      m_.emplace_back(p.value().shape(), 0.0);
      v_.emplace_back(p.value().shape(), 0.0);
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor& theta = params_[i].mutable_value();
      const Tensor& g = params_[i].grad();
      const bool has_grad = g.size() == theta.size();
      for (std::int64_t k = 0; k < theta.size(); ++k) {
        const double gk = has_grad ? g[k] : 0.0;
        m_[i][k] = beta1_ * m_[i][k] + (1.0 - beta1_) * gk;
        v_[i][k] = beta2_ * v_[i][k] + (1.0 - beta2_) * gk * gk;
        const double mhat = m_[i][k] / bc1;
        const double vhat = v_[i][k] / bc2;
        theta[k] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + wd_ * theta[k]);
      }
    }
  }

  void zero_grad() {
    for (ag::Var& p : params_) p.zero_grad();
  }

  std::int64_t steps_taken() const { return t_; }

 private:
  std::vector<ag::Var> params_;
  double lr_, wd_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

struct EpochMetrics {
  int epoch = 0;
  double loss_total = 0.0;
  double loss_rgb = 0.0;
  double loss_edge = 0.0;
  double acc_rgb = 0.0;
  double acc_edge = 0.0;
};

inline std::string metrics_line(const EpochMetrics& m) {
  nlohmann::ordered_json j;
  j["epoch"] = m.epoch;
  j["loss_total"] = m.loss_total;
  j["loss_rgb"] = m.loss_rgb;
  j["loss_edge"] = m.loss_edge;
  j["acc_rgb"] = m.acc_rgb;
  j["acc_edge"] = m.acc_edge;
  return j.dump();
}

struct TrainOutcome {
  std::vector<EpochMetrics> epochs;
};

// One optimization run over a preloaded clip store. Metrics are appended to
// metrics_out (when given) as one JSON line per epoch; a non-finite loss
// appends a diagnostic line and aborts.
inline TrainOutcome train_model(TwoStreamModel& model, const ClipStore& store, const TrainConfig& cfg,
                                const LossWeights& weights, std::ostream* metrics_out = nullptr) {
  cfg.validate();
  weights.validate();
  if (store.empty()) throw ConfigError("train_model: empty clip store");
  const std::int64_t K = model.config().vit.num_classes;
  for (const ClipSample& s : store) {
    if (s.label < 0 || s.label >= K) {
      throw ConfigError("train_model: label " + std::to_string(s.label) + " out of range for " +
                        std::to_string(K) + " classes");
    }
  }

  std::vector<ag::Var> params;
  params.reserve(model.named_params().size());
  for (auto& [name, var] : model.named_params()) params.push_back(var);
  AdamW opt(params, cfg.lr, cfg.weight_decay);

  Rng order_rng = Rng(cfg.seed).fork(1);
  std::vector<std::size_t> order(store.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainOutcome outcome;
  const std::size_t N = store.size();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double sum_total = 0.0, sum_rgb = 0.0, sum_edge = 0.0;
    std::int64_t correct_rgb = 0, correct_edge = 0;
    for (std::size_t start = 0; start < N; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(N, start + static_cast<std::size_t>(cfg.batch_size));
      const std::vector<std::size_t> which(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(stop));
      const Batch batch = make_batch(store, which);
      const double bs = static_cast<double>(which.size());

      StreamLogits logits = model.forward(batch.rgb, batch.edge);
      LossBreakdown parts;
      ag::Var loss = total_loss(logits.rgb, logits.edge, batch.labels, weights, &parts);
      if (!std::isfinite(parts.total) || !std::isfinite(parts.rgb) || !std::isfinite(parts.edge)) {
        if (metrics_out) {
          nlohmann::ordered_json j;
          j["epoch"] = epoch;
          j["error"] = "non-finite loss";
          j["loss_total"] = std::isfinite(parts.total) ? nlohmann::ordered_json(parts.total)
                                                       : nlohmann::ordered_json(nullptr);
          (*metrics_out) << j.dump() << "\n" << std::flush;
        }
        throw NumericError("train_model: non-finite loss at epoch " + std::to_string(epoch));
      }
      sum_total += parts.total * bs;
      sum_rgb += parts.rgb * bs;
      sum_edge += parts.edge * bs;
      for (std::size_t i = 0; i < which.size(); ++i) {
        const std::int64_t row = static_cast<std::int64_t>(i);
        if (argmax_row(logits.rgb.value(), row) == batch.labels[i]) ++correct_rgb;
        if (argmax_row(logits.edge.value(), row) == batch.labels[i]) ++correct_edge;
      }

      opt.zero_grad();
      ag::backward(loss);
      opt.step();
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.loss_total = sum_total / static_cast<double>(N);
    m.loss_rgb = sum_rgb / static_cast<double>(N);
    m.loss_edge = sum_edge / static_cast<double>(N);
    m.acc_rgb = static_cast<double>(correct_rgb) / static_cast<double>(N);
    m.acc_edge = static_cast<double>(correct_edge) / static_cast<double>(N);
    if (metrics_out) (*metrics_out) << metrics_line(m) << "\n" << std::flush;
    outcome.epochs.push_back(m);
  }
  return outcome;
}

}  // namespace moexda
