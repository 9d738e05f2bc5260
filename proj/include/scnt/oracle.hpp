#pragma once

// Ground truth machinery: from-scratch training of single architectures,
// exhaustive enumeration of small spaces into an accuracy table, and the
// supernet-versus-truth ranking experiment. This is the one corner of the
// toolkit that reads the test split; everything else refuses it.

#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "scnt/costs.hpp"
#include "scnt/dataset.hpp"
#include "scnt/diagnostics.hpp"
#include "scnt/supernet.hpp"
#include "scnt/trainer.hpp"

namespace scnt {

struct OracleConfig {
  int epochs = 30;
  int batch_size = 64;
  float lr = 0.08f;
  float momentum = 0.9f;
  float weight_decay = 1e-4f;
  std::uint64_t seed = 0;
  int budget = 256;  // largest space exhaustive_ground_truth will enumerate
  int workers = 1;

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("oracle: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("oracle: batch_size must be >= 1");
    if (!(lr > 0)) throw std::invalid_argument("oracle: lr must be > 0");
    if (budget < 1) throw std::invalid_argument("oracle: budget must be >= 1");
    if (workers < 1) throw std::invalid_argument("oracle: workers must be >= 1");
  }
};

// Plain top-1 over any dataset, test split included; standalone evaluation is
// where ground truth comes from, so no trainability guard here.
template <typename T>
float standalone_accuracy(const BasicStandalone<T>& sa, const Dataset& ds) {
  if (ds.size() == 0) throw std::invalid_argument("oracle: empty evaluation set");
  const int classes = sa.source_space.classes;
  int hit = 0;
  const int batch = 256;
  for (int s = 0; s < ds.size(); s += batch) {
    std::vector<int> idx(std::min(batch, ds.size() - s));
    std::iota(idx.begin(), idx.end(), s);
    const Dataset sub = select(ds, idx);
    Network<T> net = sa.network();
    const BasicTensor<T> logits = net.forward(sub.images, Mode::Eval);
    for (int i = 0; i < sub.size(); ++i) {
      int best = 0;
      for (int c = 1; c < classes; ++c) {
        if (logits.at(i, c, 0, 0) > logits.at(i, best, 0, 0)) best = c;
      }
      hit += best == sub.labels[i];
    }
  }
  return static_cast<float>(hit) / ds.size();
}

// SGD with cosine decay to zero, shuffled batches, remainder dropped.
template <typename T>
void fit_standalone(BasicStandalone<T>& sa, const Dataset& train, const OracleConfig& cfg) {
  require_trainable(train, "fit_standalone");  // truth may grade on test, never learn from it
  if (train.size() < cfg.batch_size) {
    throw std::invalid_argument("oracle: training set smaller than one batch");
  }
  Rng shuffle = Rng(cfg.seed).fork(1);
  Sgd<T> opt(cfg.lr, cfg.momentum, cfg.weight_decay);
  std::vector<int> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const int steps_per_epoch = train.size() / cfg.batch_size;
  const int total = cfg.epochs * steps_per_epoch;
  int step = 0;
  for (int e = 0; e < cfg.epochs; ++e) {
    for (int i = train.size() - 1; i > 0; --i) {
      const int j = static_cast<int>(shuffle.next_below(i + 1));
      std::swap(order[i], order[j]);
    }
    for (int b = 0; b < steps_per_epoch; ++b) {
      const std::vector<int> idx(order.begin() + static_cast<std::size_t>(b) * cfg.batch_size,
                                 order.begin() + static_cast<std::size_t>(b + 1) * cfg.batch_size);
      const Dataset sub = select(train, idx);
      opt.set_lr(cfg.lr * T(0.5) * (T(1) + std::cos(T(3.14159265358979323846) * step / total)));
      Network<T> net = sa.network();
      const BasicTensor<T> logits = net.forward(sub.images, Mode::Train);
      SoftmaxLoss<T> loss = softmax_cross_entropy(logits, sub.labels);
      net.backward(loss.grad_logits);
      opt.step(net.params());
      ++step;
    }
  }
}

// Fresh init, full training on the train split, accuracy on the test split.
// build_standalone already drops skip and stabilizer genes, so this trains
// the stripped from-scratch network the search would actually ship.
inline float train_standalone(const SpaceSpec& spec, const Architecture& arch,
                              const SplitDataset& data, const OracleConfig& cfg) {
  cfg.validate();
  StandaloneNet sa = build_standalone<float>(spec, arch, cfg.seed);
  fit_standalone(sa, data.train, cfg);
  return standalone_accuracy(sa, data.test);
}

struct GroundTruthEntry {
  float acc = 0;
  std::int64_t madds = 0;
  std::int64_t params = 0;
  std::uint64_t seed = 0;
};

struct GroundTruthTable {
  std::map<Architecture, GroundTruthEntry> entries;

  int size() const { return static_cast<int>(entries.size()); }

  const GroundTruthEntry& at(const Architecture& arch) const {
    const auto it = entries.find(arch);
    if (it == entries.end()) {
      throw std::invalid_argument("ground truth: arch '" + arch.str() + "' not in the table");
    }
    return it->second;
  }
};

// Every architecture of the space in mixed-radix order (last layer fastest).
inline std::vector<Architecture> enumerate_space(const SpaceSpec& spec) {
  std::vector<Architecture> all;
  Architecture a;
  a.genes.assign(spec.layers.size(), 0);
  while (true) {
    all.push_back(a);
    int l = spec.layer_count() - 1;
    while (l >= 0) {
      if (++a.genes[l] < static_cast<int>(spec.layers[l].choices.size())) break;
      a.genes[l] = 0;
      --l;
    }
    if (l < 0) break;
  }
  return all;
}

inline std::int64_t space_size(const SpaceSpec& spec) {
  std::int64_t n = 1;
  for (const auto& l : spec.layers) {
    n *= static_cast<std::int64_t>(l.choices.size());
    if (n > (std::int64_t(1) << 40)) return n;  // plenty to fail any budget check
  }
  return n;
}

// One standalone run per architecture in the space. Per-arch seeds are forked
// from the config seed by enumeration index, so the table is reproducible and
// assembly order (including across workers) cannot matter.
inline GroundTruthTable exhaustive_ground_truth(const SpaceSpec& raw_spec,
                                                const SplitDataset& data,
                                                const OracleConfig& cfg) {
  cfg.validate();
  // truth grades deployed models: stabilizer genes train as skips and cost as
  // skips, so a table built against either spec variant is the same table
  const SpaceSpec spec = without_stabilizers(raw_spec);
  const std::int64_t total = space_size(spec);
  if (total > cfg.budget) {
    throw std::invalid_argument("oracle: space '" + spec.name + "' has " + std::to_string(total) +
                                " architectures, over the exhaustive budget of " +
                                std::to_string(cfg.budget) +
                                "; raise the budget or rank a sampled subset instead");
  }
  const std::vector<Architecture> archs = enumerate_space(spec);
  std::vector<GroundTruthEntry> rows(archs.size());
  const Rng root(cfg.seed);

  const auto run_range = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < archs.size(); i += stride) {
      OracleConfig sub = cfg;
      sub.seed = root.fork(static_cast<std::uint64_t>(i)).state();
      GroundTruthEntry e;
      e.acc = train_standalone(spec, archs[i], data, sub);
      e.madds = count_madds(spec, archs[i]);
      e.params = count_params(spec, archs[i]);
      e.seed = sub.seed;
      rows[i] = e;
    }
  };

  if (cfg.workers == 1) {
    run_range(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < cfg.workers; ++w) {
      pool.emplace_back(run_range, static_cast<std::size_t>(w),
                        static_cast<std::size_t>(cfg.workers));
    }
    for (auto& t : pool) t.join();
  }

  GroundTruthTable table;
  for (std::size_t i = 0; i < archs.size(); ++i) table.entries[archs[i]] = rows[i];
  return table;
}

struct ScatterPoint {
  Architecture arch;
  float oneshot = 0;
  float truth = 0;
};

struct RankingResult {
  double tau = 0;
  std::vector<ScatterPoint> points;
};

// Rank correlation between any evaluator and the table over a sample of
// distinct architectures drawn uniformly from the space.
template <typename Eval>
RankingResult ranking_experiment_with(Eval&& evaluator, const SpaceSpec& spec,
                                      const GroundTruthTable& table, int sample_size, Rng& rng) {
  if (sample_size < 2) throw std::invalid_argument("ranking: need a sample of at least 2");
  std::vector<Architecture> sample;
  std::map<Architecture, bool> seen;
  long attempts = 0;
  const long max_attempts = 1000L * sample_size;
  while (static_cast<int>(sample.size()) < sample_size) {
    if (++attempts > max_attempts) {
      throw std::invalid_argument("ranking: cannot draw " + std::to_string(sample_size) +
                                  " distinct architectures from space '" + spec.name + "'");
    }
    Architecture a = sample_uniform(spec, rng);
    if (seen.emplace(a, true).second) sample.push_back(std::move(a));
  }

  RankingResult res;
  std::vector<double> one, truth;
  for (const Architecture& a : sample) {
    ScatterPoint p;
    p.arch = a;
    p.truth = table.at(a).acc;
    p.oneshot = evaluator(a);
    one.push_back(p.oneshot);
    truth.push_back(p.truth);
    res.points.push_back(std::move(p));
  }
  res.tau = kendall_tau(one, truth);
  return res;
}

template <typename T>
RankingResult ranking_experiment(BasicSupernet<T>& net, const Dataset& valset,
                                 const GroundTruthTable& table, int sample_size, Rng& rng) {
  return ranking_experiment_with(
      [&](const Architecture& a) { return evaluate_oneshot(net, a, valset); }, net.spec(), table,
      sample_size, rng);
}

struct PairOrdering {
  int correct = 0;
  int comparable = 0;  // pairs whose ground truth differs by at least the gap
};

// How many clearly-separated pairs the evaluator puts in the right order.
inline PairOrdering ordered_pair_fraction(const std::vector<ScatterPoint>& points,
                                          float min_gap) {
  PairOrdering po;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      const float dt = points[i].truth - points[j].truth;
      if (std::abs(dt) < min_gap) continue;
      ++po.comparable;
      const float ds = points[i].oneshot - points[j].oneshot;
      if (ds * dt > 0) ++po.correct;
    }
  }
  return po;
}

}  // namespace scnt
