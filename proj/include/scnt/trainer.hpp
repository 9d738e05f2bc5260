#pragma once

// Single-path supernet training. Two strategies: "spos" samples one uniform
// path per step and updates immediately; "fairnas" samples one group of paths
// per step covering every choice of every layer exactly once, averages the
// path losses on the same batch, and applies ONE aggregated update. Also home
// to inherited-weight (one-shot) evaluation and the sampled-accuracy
// histogram used by the stability reports.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "scnt/dataset.hpp"
#include "scnt/kernels.hpp"
#include "scnt/nodes.hpp"
#include "scnt/space.hpp"
#include "scnt/supernet.hpp"

namespace scnt {

enum class Strategy { Spos, FairNas };

inline const char* strategy_name(Strategy s) { return s == Strategy::Spos ? "spos" : "fairnas"; }

inline Strategy parse_strategy(const std::string& s) {
  if (s == "spos") return Strategy::Spos;
  if (s == "fairnas") return Strategy::FairNas;
  throw std::invalid_argument("trainer: unknown strategy '" + s + "' (spos|fairnas)");
}

struct TrainConfig {
  Strategy strategy = Strategy::FairNas;
  int epochs = 1;
  int batch_size = 64;
  float lr = 0.05f;
  float momentum = 0.9f;
  float weight_decay = 1e-4f;
  std::uint64_t seed = 0;
  bool els_enabled = true;  // descriptive; recorded so paired runs can be compared

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("trainer: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("trainer: batch-size must be >= 1");
    if (lr <= 0) throw std::invalid_argument("trainer: lr must be > 0");
  }
};

struct StepStat {
  int step = 0;
  int epoch = 0;
  std::string arch;
  float loss = 0;
  float acc = 0;
};

struct EpochStat {
  int epoch = 0;
  float train_loss = 0;
  float train_acc = 0;
  float train_acc_std = 0;
  float val_acc_mean = 0;
  float val_acc_std = 0;
};

struct TrainLog {
  TrainConfig config;
  std::vector<StepStat> steps;  // one row per path (m rows per fairnas step)
  std::vector<EpochStat> epochs;
  std::vector<std::vector<std::int64_t>> update_counts;  // [layer][choice]
};

namespace detail {

inline float batch_accuracy(const Tensor& logits, const std::vector<int>& labels) {
  int hit = 0;
  for (int i = 0; i < logits.n(); ++i) {
    int best = 0;
    for (int c = 1; c < logits.c(); ++c) {
      if (logits.at(i, c, 0, 0) > logits.at(i, best, 0, 0)) best = c;
    }
    hit += best == labels[i];
  }
  return static_cast<float>(hit) / logits.n();
}

// One fairnas update: forward/backward every path in `group` on the same
// batch with upstream gradients scaled by 1/m, then a single optimizer step
// over the union of touched parameters. Gradients accumulate across paths;
// the reduction order is the group order, which callers keep fixed.
template <typename T>
inline void fairnas_step(BasicSupernet<T>& net, const Dataset& batch,
                         const std::vector<Architecture>& group, Sgd<T>& opt,
                         std::vector<StepStat>* rows, int step, int epoch) {
  const float inv_m = 1.0f / static_cast<float>(group.size());
  std::vector<ParamPtr<T>> touched;
  std::set<const BasicParameter<T>*> seen;
  for (const Architecture& arch : group) {
    Network<T> path = net.path_network(arch);
    Tensor logits = path.forward(batch.images, Mode::Train);
    SoftmaxLoss sl = softmax_cross_entropy(logits, batch.labels);
    for (float& g : sl.grad_logits.raw()) g *= inv_m;
    path.backward(sl.grad_logits);
    net.count_update(arch);
    if (rows != nullptr) {
      rows->push_back({step, epoch, arch.str(), static_cast<float>(sl.loss),
                       batch_accuracy(logits, batch.labels)});
    }
    for (const auto& p : path.params()) {
      if (seen.insert(p.get()).second) touched.push_back(p);
    }
  }
  opt.step(touched);
}

}  // namespace detail

template <typename T>
float evaluate_oneshot(BasicSupernet<T>& net, const Architecture& arch, const Dataset& valset) {
  require_trainable(valset, "evaluate_oneshot");
  if (valset.size() == 0) throw std::invalid_argument("evaluate_oneshot: empty valset");
  validate_arch(net.spec(), arch);
  int hit = 0;
  const int B = 256;
  for (int s = 0; s < valset.size(); s += B) {
    std::vector<int> idx(std::min(B, valset.size() - s));
    std::iota(idx.begin(), idx.end(), s);
    const Dataset sub = select(valset, idx);
    Network<T> path = net.path_network(arch);
    const Tensor logits = path.forward(sub.images, Mode::Eval);
    for (int i = 0; i < sub.size(); ++i) {
      int best = 0;
      for (int c = 1; c < logits.c(); ++c) {
        if (logits.at(i, c, 0, 0) > logits.at(i, best, 0, 0)) best = c;
      }
      hit += best == sub.labels[i];
    }
  }
  return static_cast<float>(hit) / valset.size();
}

template <typename T>
TrainLog train_supernet(BasicSupernet<T>& net, const Dataset& train, const Dataset& val,
                        const TrainConfig& cfg) {
  cfg.validate();
  require_trainable(train, "train_supernet");
  require_trainable(val, "train_supernet");
  if (train.size() < cfg.batch_size) {
    throw std::invalid_argument("trainer: training set smaller than one batch");
  }
  if (val.size() == 0) throw std::invalid_argument("trainer: validation set is empty");
  const SpaceSpec& spec = net.spec();
  if (cfg.strategy == Strategy::FairNas) {
    const std::size_t m = spec.layers.front().choices.size();
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
      if (spec.layers[l].choices.size() != m) {
        throw std::invalid_argument(
            "trainer: fairnas needs a uniform choice count per layer; layer " + std::to_string(l) +
            " has " + std::to_string(spec.layers[l].choices.size()) + " instead of " +
            std::to_string(m));
      }
    }
  }

  TrainLog log;
  log.config = cfg;
  Rng shuffle_rng = Rng(cfg.seed).fork(0);
  Rng path_rng = Rng(cfg.seed).fork(1);
  Rng probe_rng = Rng(cfg.seed).fork(2);
  Sgd<T> opt(cfg.lr, cfg.momentum, cfg.weight_decay);

  const int steps_per_epoch = train.size() / cfg.batch_size;
  const int total_steps = cfg.epochs * steps_per_epoch;
  constexpr int kValProbes = 8;
  std::vector<int> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  int step = 0;

  for (int e = 0; e < cfg.epochs; ++e) {
    for (int i = train.size() - 1; i > 0; --i) {
      const int j = static_cast<int>(shuffle_rng.next_below(i + 1));
      std::swap(order[i], order[j]);
    }
    const std::size_t epoch_row0 = log.steps.size();
    for (int b = 0; b < steps_per_epoch; ++b) {
      const std::vector<int> idx(order.begin() + b * cfg.batch_size,
                                 order.begin() + (b + 1) * cfg.batch_size);
      const Dataset batch = select(train, idx);
      opt.set_lr(cfg.lr * 0.5f * (1.0f + std::cos(3.14159265f * step / total_steps)));
      if (cfg.strategy == Strategy::Spos) {
        const Architecture arch = sample_uniform(spec, path_rng);
        Network<T> path = net.path_network(arch);
        Tensor logits = path.forward(batch.images, Mode::Train);
        const SoftmaxLoss sl = softmax_cross_entropy(logits, batch.labels);
        path.backward(sl.grad_logits);
        net.count_update(arch);
        opt.step(path.params());
        log.steps.push_back({step, e, arch.str(), static_cast<float>(sl.loss),
                             detail::batch_accuracy(logits, batch.labels)});
      } else {
        const std::vector<Architecture> group = sample_fair_group(spec, path_rng);
        detail::fairnas_step(net, batch, group, opt, &log.steps, step, e);
      }
      ++step;
    }

    EpochStat es;
    es.epoch = e;
    double lsum = 0, asum = 0, asq = 0;
    const std::size_t rows = log.steps.size() - epoch_row0;
    for (std::size_t i = epoch_row0; i < log.steps.size(); ++i) {
      lsum += log.steps[i].loss;
      asum += log.steps[i].acc;
      asq += static_cast<double>(log.steps[i].acc) * log.steps[i].acc;
    }
    es.train_loss = static_cast<float>(lsum / rows);
    es.train_acc = static_cast<float>(asum / rows);
    es.train_acc_std =
        static_cast<float>(std::sqrt(std::max(0.0, asq / rows - (asum / rows) * (asum / rows))));
    double vsum = 0, vsq = 0;
    for (int k = 0; k < kValProbes; ++k) {
      const double a = evaluate_oneshot(net, sample_uniform(spec, probe_rng), val);
      vsum += a;
      vsq += a * a;
    }
    es.val_acc_mean = static_cast<float>(vsum / kValProbes);
    es.val_acc_std = static_cast<float>(
        std::sqrt(std::max(0.0, vsq / kValProbes - (vsum / kValProbes) * (vsum / kValProbes))));
    log.epochs.push_back(es);
  }
  log.update_counts = net.update_counts();
  return log;
}

struct AccuracyHistogram {
  static constexpr int kBins = 20;  // fixed width 0.05 on [0,1]
  std::array<int, kBins> bins{};
  std::vector<float> samples;
  std::vector<Architecture> archs;

  int below(float threshold) const {
    int n = 0;
    for (float s : samples) n += s < threshold;
    return n;
  }
  double mean() const {
    double m = 0;
    for (float s : samples) m += s;
    return samples.empty() ? 0.0 : m / samples.size();
  }
  double stddev() const {
    if (samples.empty()) return 0.0;
    const double m = mean();
    double v = 0;
    for (float s : samples) v += (s - m) * (s - m);
    return std::sqrt(v / samples.size());
  }
};

template <typename T>
AccuracyHistogram accuracy_histogram(BasicSupernet<T>& net, const Dataset& valset, int n_samples,
                                     Rng& rng) {
  if (n_samples < 1) throw std::invalid_argument("accuracy_histogram: need n >= 1");
  AccuracyHistogram h;
  for (int i = 0; i < n_samples; ++i) {
    const Architecture arch = sample_uniform(net.spec(), rng);
    const float acc = evaluate_oneshot(net, arch, valset);
    h.samples.push_back(acc);
    h.archs.push_back(arch);
    const int bin = std::min(AccuracyHistogram::kBins - 1,
                             static_cast<int>(acc / 0.05f));
    ++h.bins[bin];
  }
  return h;
}

}  // namespace scnt
