#pragma once

// Analysis instruments: cross-choice feature similarity at a layer, rank
// correlation between score vectors, and stability comparisons between
// training logs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "scnt/supernet.hpp"
#include "scnt/trainer.hpp"

namespace scnt {

// Mean per-channel cosine between two feature maps of identical shape.
// Channels where either side is numerically zero carry no direction and are
// skipped; if every channel is degenerate the result is 0.
template <typename T>
double cosine_similarity(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (!(a.shape() == b.shape())) {
    throw std::invalid_argument("cosine: shape " + a.shape().str() + " vs " + b.shape().str());
  }
  const int hw = a.h() * a.w();
  double total = 0;
  int used = 0;
  for (int n = 0; n < a.n(); ++n) {
    for (int c = 0; c < a.c(); ++c) {
      const T* pa = a.raw().data() + (static_cast<std::size_t>(n) * a.c() + c) * hw;
      const T* pb = b.raw().data() + (static_cast<std::size_t>(n) * b.c() + c) * hw;
      double dot = 0, na = 0, nb = 0;
      for (int i = 0; i < hw; ++i) {
        dot += static_cast<double>(pa[i]) * pb[i];
        na += static_cast<double>(pa[i]) * pa[i];
        nb += static_cast<double>(pb[i]) * pb[i];
      }
      if (na < 1e-20 || nb < 1e-20) continue;
      total += dot / std::sqrt(na * nb);
      ++used;
    }
  }
  return used == 0 ? 0.0 : total / used;
}

struct SimilarityMatrix {
  int layer = 0;
  std::string prefix;                      // gene string feeding the probed layer
  std::vector<std::string> labels;         // choice names, row/column order
  std::vector<std::vector<double>> values; // m x m, symmetric, unit diagonal
  std::vector<double> row_means;           // excluding the diagonal

  int rows() const { return static_cast<int>(values.size()); }
};

// Cosine similarity between every pair of choices at one layer, probing all
// of them with the same activations: a fixed common prefix of choice 0 at
// every earlier layer (recorded in `prefix`).
template <typename T>
SimilarityMatrix layer_similarity(const BasicSupernet<T>& net, int layer,
                                  const BasicTensor<T>& probe) {
  const SpaceSpec& spec = net.spec();
  const int L = static_cast<int>(spec.layers.size());
  if (layer < 0 || layer >= L) {
    throw std::invalid_argument("layer_similarity: layer " + std::to_string(layer) +
                                " outside [0," + std::to_string(L) + ")");
  }
  Architecture prefix;
  prefix.genes.assign(spec.layers.size(), 0);
  Network<T> pre = net.prefix_network(layer, prefix);
  const BasicTensor<T> feats = pre.forward(probe, Mode::Eval);

  const int m = static_cast<int>(spec.layers[layer].choices.size());
  std::vector<BasicTensor<T>> outs;
  outs.reserve(m);
  for (int c = 0; c < m; ++c) {
    Network<T> sub;
    net.append_choice(sub, layer, c);
    outs.push_back(sub.forward(feats, Mode::Eval));
  }

  SimilarityMatrix sim;
  sim.layer = layer;
  for (int l = 0; l < layer; ++l) sim.prefix += (l ? "," : "") + std::to_string(0);
  for (int c = 0; c < m; ++c) sim.labels.push_back(spec.layers[layer].choices[c].str());
  sim.values.assign(m, std::vector<double>(m, 0.0));
  for (int i = 0; i < m; ++i) {
    for (int j = i; j < m; ++j) {
      const double v = cosine_similarity(outs[i], outs[j]);
      sim.values[i][j] = v;
      sim.values[j][i] = v;
    }
  }
  sim.row_means.assign(m, 0.0);
  for (int i = 0; i < m; ++i) {
    double s = 0;
    for (int j = 0; j < m; ++j) {
      if (j != i) s += sim.values[i][j];
    }
    sim.row_means[i] = m > 1 ? s / (m - 1) : 0.0;
  }
  return sim;
}

namespace detail {

// merge sort counting strict inversions; ties are not inversions
inline std::uint64_t count_inversions(std::vector<double>& v, std::vector<double>& scratch,
                                      std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::uint64_t inv = count_inversions(v, scratch, lo, mid) + count_inversions(v, scratch, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      inv += mid - i;
      scratch[k++] = v[j++];
    } else {
      scratch[k++] = v[i++];
    }
  }
  while (i < mid) scratch[k++] = v[i++];
  while (j < hi) scratch[k++] = v[j++];
  std::copy(scratch.begin() + lo, scratch.begin() + hi, v.begin() + lo);
  return inv;
}

inline std::uint64_t tie_pairs(const std::vector<double>& sorted_keys) {
  std::uint64_t pairs = 0;
  std::size_t run = 1;
  for (std::size_t i = 1; i <= sorted_keys.size(); ++i) {
    if (i < sorted_keys.size() && sorted_keys[i] == sorted_keys[i - 1]) {
      ++run;
    } else {
      pairs += run * (run - 1) / 2;
      run = 1;
    }
  }
  return pairs;
}

}  // namespace detail

// Tie-corrected rank correlation (the tau-b variant):
//   tau = (C - D) / sqrt((n0 - t_a)(n0 - t_b))
// computed in O(n log n): sort by (a,b), count discordant pairs as inversions
// of b, and correct with tie-pair counts. A vector that is all ties carries
// no ranking signal; that degenerate case returns 0.
inline double kendall_tau(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("kendall_tau: length mismatch " + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()));
  }
  const std::size_t n = a.size();
  if (n < 2) throw std::invalid_argument("kendall_tau: need at least 2 scores");

  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) {
    if (a[x] != a[y]) return a[x] < a[y];
    return b[x] < b[y];
  });

  const std::uint64_t n0 = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  std::vector<double> sa(n), sb(n);
  for (std::size_t i = 0; i < n; ++i) {
    sa[i] = a[idx[i]];
    sb[i] = b[idx[i]];
  }
  const std::uint64_t t_a = detail::tie_pairs(sa);
  std::uint64_t t_ab = 0;  // pairs tied in both, counted within (a,b) runs
  {
    std::size_t run = 1;
    for (std::size_t i = 1; i <= n; ++i) {
      if (i < n && sa[i] == sa[i - 1] && sb[i] == sb[i - 1]) {
        ++run;
      } else {
        t_ab += static_cast<std::uint64_t>(run) * (run - 1) / 2;
        run = 1;
      }
    }
  }
  std::vector<double> scratch(n);
  std::vector<double> b_seq = sb;
  const std::uint64_t discordant = detail::count_inversions(b_seq, scratch, 0, n);
  const std::uint64_t t_b = detail::tie_pairs(b_seq);  // b_seq is sorted now

  const double den_a = static_cast<double>(n0 - t_a);
  const double den_b = static_cast<double>(n0 - t_b);
  if (den_a <= 0 || den_b <= 0) return 0.0;
  // C - D = n0 - t_a - t_b + t_ab - 2*discordant
  const double num = static_cast<double>(n0) - static_cast<double>(t_a) -
                     static_cast<double>(t_b) + static_cast<double>(t_ab) -
                     2.0 * static_cast<double>(discordant);
  return num / std::sqrt(den_a * den_b);
}

struct InstabilityRow {
  int epoch = 0;
  float mean_a = 0, std_a = 0;
  float mean_b = 0, std_b = 0;
};

struct InstabilityReport {
  std::vector<InstabilityRow> rows;   // per-epoch training accuracy stats
  double mean_std_a = 0, mean_std_b = 0;
  float final_mean_a = 0, final_mean_b = 0;
  bool a_stabilized = false, b_stabilized = false;
};

// Side-by-side stability stats for two runs that differ only in whether the
// learnable stabilizer stands in for the skip choice.
inline InstabilityReport instability_report(const TrainLog& a, const TrainLog& b) {
  if (a.epochs.size() != b.epochs.size()) {
    throw std::invalid_argument("instability_report: epoch count mismatch " +
                                std::to_string(a.epochs.size()) + " vs " +
                                std::to_string(b.epochs.size()));
  }
  if (a.epochs.empty()) throw std::invalid_argument("instability_report: empty logs");
  InstabilityReport rep;
  rep.a_stabilized = a.config.els_enabled;
  rep.b_stabilized = b.config.els_enabled;
  for (std::size_t e = 0; e < a.epochs.size(); ++e) {
    InstabilityRow row;
    row.epoch = static_cast<int>(e);
    row.mean_a = a.epochs[e].train_acc;
    row.std_a = a.epochs[e].train_acc_std;
    row.mean_b = b.epochs[e].train_acc;
    row.std_b = b.epochs[e].train_acc_std;
    rep.rows.push_back(row);
    rep.mean_std_a += row.std_a;
    rep.mean_std_b += row.std_b;
  }
  rep.mean_std_a /= rep.rows.size();
  rep.mean_std_b /= rep.rows.size();
  rep.final_mean_a = rep.rows.back().mean_a;
  rep.final_mean_b = rep.rows.back().mean_b;
  return rep;
}

}  // namespace scnt
