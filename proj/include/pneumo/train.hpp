#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "pneumo/cv.hpp"
#include "pneumo/data.hpp"
#include "pneumo/errors.hpp"
#include "pneumo/matrix.hpp"
#include "pneumo/metrics.hpp"
#include "pneumo/model.hpp"
#include "pneumo/rng.hpp"
#include "pneumo/tape.hpp"

namespace pneumo {

enum class LrSchedule { kPerEpoch, kPerStep };

struct TrainConfig {
  std::size_t batch_size = 16;
  double base_lr = 3e-4;
  std::size_t warmup_epochs = 2;
  double weight_decay = 0.02;
  std::size_t epochs = 100;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  LrSchedule schedule = LrSchedule::kPerEpoch;

  void validate() const {
    if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
    if (!(base_lr > 0.0)) throw ConfigError("train: base_lr must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("train: weight_decay must be >= 0");
    if (epochs > 0 && warmup_epochs >= epochs)
      throw ConfigError("train: warmup_epochs must be < epochs");
    if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0))
      throw ConfigError("train: betas must lie in (0, 1)");
    if (!(eps > 0.0)) throw ConfigError("train: eps must be positive");
  }
};

/// Numerically stable binary cross-entropy of a raw logit against a 0/1 label.
inline double bce_loss(double logit, int label) {
  if (!std::isfinite(logit)) throw VerifyError("bce_loss: non-finite logit");
  return bce_from_logit(logit, static_cast<double>(label));
}

/// Linear warmup from 0 to base_lr over warmup_epochs, then cosine decay to 0
/// at the final epoch. Continuous at the junction and non-increasing after it.
inline double lr_at_fraction(double epoch, const TrainConfig& cfg) {
  const double w = static_cast<double>(cfg.warmup_epochs);
  const double e_total = static_cast<double>(cfg.epochs);
  if (epoch < w) return cfg.base_lr * (epoch / w);
  const double progress = (epoch - w) / (e_total - w);
  return cfg.base_lr * 0.5 * (1.0 + std::cos(3.141592653589793238463 * progress));
}

inline double lr_at(std::size_t epoch, const TrainConfig& cfg) {
  if (epoch >= cfg.epochs) throw ConfigError("lr_at: epoch out of range");
  return lr_at_fraction(static_cast<double>(epoch), cfg);
}

/// AdamW over the trainable parameters: decoupled weight decay applied as
/// theta *= (1 - lr*wd) before the bias-corrected moment update.
class AdamW {
 public:
  AdamW(std::vector<NamedParam> params, const TrainConfig& cfg)
      : beta1_(cfg.beta1), beta2_(cfg.beta2), eps_(cfg.eps),
        weight_decay_(cfg.weight_decay) {
    for (NamedParam& np : params) {
      if (!np.param->trainable) continue;
      params_.push_back(np);
      states_.push_back(State{Matrix(np.param->value.rows(), np.param->value.cols()),
                              Matrix(np.param->value.rows(), np.param->value.cols())});
    }
  }

  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t p = 0; p < params_.size(); ++p) {
      Param& prm = *params_[p].param;
      const Matrix& g = prm.grad;
      for (std::size_t i = 0; i < g.size(); ++i)
        if (!std::isfinite(g.data()[i]))
          throw VerifyError("adamw: non-finite gradient in '" + params_[p].name + "'");
      Matrix& m = states_[p].m;
      Matrix& v = states_[p].v;
      double* theta = prm.value.data();
      const double* gd = g.data();
      if (weight_decay_ != 0.0) {
        const double decay = 1.0 - lr * weight_decay_;
        for (std::size_t i = 0; i < g.size(); ++i) theta[i] *= decay;
      }
      for (std::size_t i = 0; i < g.size(); ++i) {
        m.data()[i] = beta1_ * m.data()[i] + (1.0 - beta1_) * gd[i];
        v.data()[i] = beta2_ * v.data()[i] + (1.0 - beta2_) * gd[i] * gd[i];
        const double m_hat = m.data()[i] / bc1;
        const double v_hat = v.data()[i] / bc2;
        theta[i] -= lr * m_hat / (std::sqrt(v_hat) + eps_);
      }
    }
  }

  void zero_grads() {
    for (NamedParam& np : params_) np.param->zero_grad();
  }

  std::size_t steps() const { return t_; }

 private:
  struct State {
    Matrix m, v;
  };
  std::vector<NamedParam> params_;
  std::vector<State> states_;
  double beta1_, beta2_, eps_, weight_decay_;
  std::size_t t_ = 0;
};

struct TrainResult {
  std::vector<double> epoch_loss;  // mean training BCE per epoch
  std::size_t steps = 0;
};

/// Mini-batch training over the given sample ids: seeded shuffling, mean
/// BCE per batch (short final batch kept), one AdamW step per batch at the
/// scheduled rate. Frozen params are untouched by construction.
inline TrainResult train(PneumoModel& model, const Dataset& ds,
                         const std::vector<std::size_t>& ids,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (ids.empty()) throw ConfigError("train: empty training set");
  for (std::size_t id : ids)
    if (id >= ds.samples.size())
      throw ConfigError("train: sample id " + std::to_string(id) + " out of range");

  AdamW opt(model.params(), cfg);
  opt.zero_grads();
  Rng shuffle_rng(derive_seed(cfg.seed, 31));
  std::vector<std::size_t> order(ids);
  TrainResult result;

  const std::size_t batches_per_epoch = (ids.size() + cfg.batch_size - 1) / cfg.batch_size;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss_sum = 0.0;
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      const std::size_t begin = b * cfg.batch_size;
      const std::size_t end = std::min(begin + cfg.batch_size, order.size());
      const double inv_batch = 1.0 / static_cast<double>(end - begin);
      double batch_loss = 0.0;
      for (std::size_t i = begin; i < end; ++i) {
        const Sample& s = ds.samples[order[i]];
        Tape tape;
        Tape::Var logit = model.forward(tape, s.features);
        Tape::Var loss = tape.bce_with_logit(logit, s.label);
        const double loss_value = tape.scalar(loss);
        if (!std::isfinite(loss_value))
          throw VerifyError("train: non-finite loss at epoch " +
                            std::to_string(epoch) + ", batch " + std::to_string(b));
        batch_loss += loss_value;
        tape.backward(loss, inv_batch);
      }
      batch_loss *= inv_batch;
      epoch_loss_sum += batch_loss * static_cast<double>(end - begin);
      const double lr =
          cfg.schedule == LrSchedule::kPerEpoch
              ? lr_at(epoch, cfg)
              : lr_at_fraction(static_cast<double>(epoch) +
                                   static_cast<double>(b) /
                                       static_cast<double>(batches_per_epoch),
                               cfg);
      opt.step(lr);
      opt.zero_grads();
      ++result.steps;
    }
    result.epoch_loss.push_back(epoch_loss_sum / static_cast<double>(ids.size()));
  }
  return result;
}

/// Predicted probabilities for the given sample ids.
inline std::vector<double> predict(PneumoModel& model, const Dataset& ds,
                                   const std::vector<std::size_t>& ids) {
  std::vector<double> scores;
  scores.reserve(ids.size());
  for (std::size_t id : ids)
    scores.push_back(sigmoid(model.logit_value(ds.samples[id].features)));
  return scores;
}

struct FoldResult {
  std::size_t fold = 0;
  MetricsReport metrics;
};

struct CvResult {
  std::vector<FoldResult> folds;
  MetricsReport mean;
};

inline MetricsReport mean_metrics(const std::vector<FoldResult>& folds) {
  MetricsReport mean;
  double auc_sum = 0.0;
  bool auc_all = true;
  for (const FoldResult& f : folds) {
    mean.sensitivity += f.metrics.sensitivity;
    mean.specificity += f.metrics.specificity;
    mean.accuracy += f.metrics.accuracy;
    mean.tp += f.metrics.tp;
    mean.fp += f.metrics.fp;
    mean.tn += f.metrics.tn;
    mean.fn += f.metrics.fn;
    if (f.metrics.auc)
      auc_sum += *f.metrics.auc;
    else
      auc_all = false;
  }
  const double k = static_cast<double>(folds.size());
  mean.sensitivity /= k;
  mean.specificity /= k;
  mean.accuracy /= k;
  if (auc_all && !folds.empty()) {
    mean.auc = auc_sum / k;
    mean.avg = (mean.sensitivity + mean.specificity + mean.accuracy + *mean.auc) / 4.0;
  }
  return mean;
}

/// Patient-grouped k-fold cross-validation. Every fold trains an independent
/// model seeded from (seed, fold), so results do not depend on whether folds
/// run sequentially or on parallel threads.
inline CvResult run_cv(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                       const Dataset& ds, std::size_t k, std::uint64_t seed,
                       bool parallel = false) {
  std::vector<Fold> folds = kfold_split(ds, k, seed);
  CvResult result;
  result.folds.resize(k);
  std::vector<std::string> errors(k);

  auto run_fold = [&](std::size_t f) {
    try {
      ModelConfig mc = model_cfg;
      mc.seed = derive_seed(seed, 1000 + f);
      TrainConfig tc = train_cfg;
      tc.seed = derive_seed(seed, 2000 + f);
      PneumoModel model = PneumoModel::init(mc);
      if (ds.feature_dim != mc.encoder.input_dim)
        throw ConfigError("cv: dataset feature width " +
                          std::to_string(ds.feature_dim) + " vs encoder input " +
                          std::to_string(mc.encoder.input_dim));
      train(model, ds, folds[f].train_ids, tc);
      std::vector<double> scores = predict(model, ds, folds[f].test_ids);
      std::vector<int> labels;
      labels.reserve(folds[f].test_ids.size());
      for (std::size_t id : folds[f].test_ids) labels.push_back(ds.samples[id].label);
      result.folds[f] = FoldResult{f, compute_metrics(scores, labels)};
    } catch (const std::exception& e) {
      errors[f] = e.what();
    }
  };

  if (parallel) {
    std::vector<std::thread> threads;
    threads.reserve(k);
    for (std::size_t f = 0; f < k; ++f) threads.emplace_back(run_fold, f);
    for (std::thread& t : threads) t.join();
  } else {
    for (std::size_t f = 0; f < k; ++f) run_fold(f);
  }
  for (std::size_t f = 0; f < k; ++f)
    if (!errors[f].empty())
      throw Error("cv fold " + std::to_string(f) + ": " + errors[f]);

  result.mean = mean_metrics(result.folds);
  return result;
}

}  // namespace pneumo
