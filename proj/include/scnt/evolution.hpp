#pragma once

// Constrained, weighted NSGA-II over one-shot supernet scores. Three
// objectives: maximize accuracy, minimize multiply-adds, maximize parameter
// count. Candidates pass a cheap madds gate before any accuracy evaluation;
// both gates are recorded in an audit trail.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "scnt/costs.hpp"
#include "scnt/supernet.hpp"
#include "scnt/trainer.hpp"

namespace scnt {

struct ObjectiveVector {
  float acc = 0;
  std::int64_t madds = 0;
  std::int64_t params = 0;
};

// a >= b on every objective sense and strictly better on at least one
inline bool dominates(const ObjectiveVector& a, const ObjectiveVector& b) {
  const bool no_worse = a.acc >= b.acc && a.madds <= b.madds && a.params >= b.params;
  const bool better = a.acc > b.acc || a.madds < b.madds || a.params > b.params;
  return no_worse && better;
}

struct Individual {
  Architecture arch;
  ObjectiveVector objectives;
  int rank = -1;
  double crowding = 0;
};

struct SearchWeights {
  double acc = 0.4, madds = 0.4, params = 0.2;
};

struct SearchConfig {
  int population = 32;   // n
  int generations = 8;   // N
  SearchWeights weights;
  std::int64_t madds_max = 0;
  float acc_min = 0;     // strict gate: keep acc > acc_min; 0 effectively disables
  double mutation_ratio = 0.8;  // per-gene chance once an individual mutates
  double p_rm = 0.2;            // mode shares, normalized by their sum
  double p_re = 0.65;
  double p_pr = 0.15;
  double p_m = 0.7;   // chance the mutation pathway perturbs at all
  double p_km = 0.3;  // chance of the crossover pathway instead of mutation
  std::uint64_t seed = 0;
  int init_patience = 500;  // uniform draws per required individual before giving up

  void validate() const {
    if (population < 2) throw std::invalid_argument("search: population must be >= 2");
    if (generations < 1) throw std::invalid_argument("search: generations must be >= 1");
    if (weights.acc < 0 || weights.madds < 0 || weights.params < 0 ||
        std::abs(weights.acc + weights.madds + weights.params - 1.0) > 1e-6) {
      throw std::invalid_argument("search: weights must be non-negative and sum to 1");
    }
    if (madds_max <= 0) throw std::invalid_argument("search: madds_max must be > 0");
    if (acc_min < 0 || acc_min >= 1) throw std::invalid_argument("search: acc_min outside [0,1)");
    for (double p : {mutation_ratio, p_rm, p_re, p_pr, p_m, p_km}) {
      if (p < 0 || p > 1) throw std::invalid_argument("search: probabilities must be in [0,1]");
    }
    if (p_m > 0 && p_rm + p_re + p_pr <= 0) {
      throw std::invalid_argument("search: mutation enabled but every mode share is 0");
    }
    if (init_patience < 1) throw std::invalid_argument("search: init_patience must be >= 1");
  }
};

// Index fronts, best first, via the fast non-dominated sort (per-individual
// dominated sets and domination counters).
inline std::vector<std::vector<int>> non_dominated_sort(const std::vector<Individual>& pop) {
  const int n = static_cast<int>(pop.size());
  std::vector<std::vector<int>> dominated(n);
  std::vector<int> open(n, 0);  // how many still dominate i
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (dominates(pop[i].objectives, pop[j].objectives)) {
        dominated[i].push_back(j);
        ++open[j];
      } else if (dominates(pop[j].objectives, pop[i].objectives)) {
        dominated[j].push_back(i);
        ++open[i];
      }
    }
  }
  std::vector<std::vector<int>> fronts;
  std::vector<int> current;
  for (int i = 0; i < n; ++i) {
    if (open[i] == 0) current.push_back(i);
  }
  while (!current.empty()) {
    fronts.push_back(current);
    std::vector<int> next;
    for (int i : current) {
      for (int j : dominated[i]) {
        if (--open[j] == 0) next.push_back(j);
      }
    }
    std::sort(next.begin(), next.end());
    current = std::move(next);
  }
  return fronts;
}

// Weighted crowding distance for one front: per objective, sort, give the
// boundary pair +inf and interior members w_k * gap / range; a degenerate
// objective (range 0) contributes nothing. Result aligns with `front` order.
inline std::vector<double> weighted_crowding(const std::vector<Individual>& pop,
                                             const std::vector<int>& front,
                                             const SearchWeights& weights) {
  const int m = static_cast<int>(front.size());
  std::vector<double> dist(m, 0.0);
  const double inf = std::numeric_limits<double>::infinity();
  const auto accumulate = [&](double w, auto key) {
    std::vector<int> order(m);
    for (int i = 0; i < m; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
      return key(pop[front[x]]) < key(pop[front[y]]);
    });
    const double lo = key(pop[front[order.front()]]);
    const double hi = key(pop[front[order.back()]]);
    if (hi == lo) return;
    dist[order.front()] = inf;
    dist[order.back()] = inf;
    for (int i = 1; i + 1 < m; ++i) {
      const double gap = key(pop[front[order[i + 1]]]) - key(pop[front[order[i - 1]]]);
      dist[order[i]] += w * gap / (hi - lo);
    }
  };
  if (m <= 2) {
    std::fill(dist.begin(), dist.end(), inf);
    return dist;
  }
  accumulate(weights.acc, [](const Individual& x) { return static_cast<double>(x.objectives.acc); });
  accumulate(weights.madds,
             [](const Individual& x) { return static_cast<double>(x.objectives.madds); });
  accumulate(weights.params,
             [](const Individual& x) { return static_cast<double>(x.objectives.params); });
  return dist;
}

namespace detail {

// crowded-comparison: lower rank first, then larger crowding
inline bool crowded_before(const Individual& a, const Individual& b) {
  if (a.rank != b.rank) return a.rank < b.rank;
  return a.crowding > b.crowding;
}

inline const Individual& tournament_pick(const std::vector<Individual>& pop, Rng& rng) {
  const Individual& a = pop[rng.next_below(pop.size())];
  const Individual& b = pop[rng.next_below(pop.size())];
  return crowded_before(b, a) ? b : a;
}

inline bool is_passthrough(const ChoiceSpec& c) { return c.kind != ChoiceKind::InvertedBottleneck; }

// one gene, one mode; every mode changes the gene (falling back to a uniform
// re-draw when its preferred family is empty)
inline void mutate_gene(const SpaceSpec& spec, Architecture& arch, int layer,
                        const SearchConfig& cfg, Rng& rng) {
  const auto& choices = spec.layers[layer].choices;
  const int m = static_cast<int>(choices.size());
  const int g = arch.genes[layer];
  const auto redraw_among = [&](const std::vector<int>& pool) {
    arch.genes[layer] = pool[rng.next_below(pool.size())];
  };
  const auto redraw_any_other = [&]() {
    int v = static_cast<int>(rng.next_below(m - 1));
    if (v >= g) ++v;
    arch.genes[layer] = v;
  };

  const double total = cfg.p_rm + cfg.p_re + cfg.p_pr;
  const double u = rng.next_double() * total;
  if (u < cfg.p_rm) {
    redraw_any_other();
    return;
  }
  if (u < cfg.p_rm + cfg.p_re) {
    // expansion re-draw: same kernel, different choice
    std::vector<int> pool;
    if (choices[g].kind == ChoiceKind::InvertedBottleneck) {
      for (int c = 0; c < m; ++c) {
        if (c != g && choices[c].kind == ChoiceKind::InvertedBottleneck &&
            choices[c].kernel == choices[g].kernel) {
          pool.push_back(c);
        }
      }
    }
    pool.empty() ? redraw_any_other() : redraw_among(pool);
    return;
  }
  // prune toward a parameter-free/stabilizer choice when one exists, else
  // kernel re-draw at the same expansion
  std::vector<int> pool;
  for (int c = 0; c < m; ++c) {
    if (c != g && is_passthrough(choices[c])) pool.push_back(c);
  }
  if (pool.empty() && choices[g].kind == ChoiceKind::InvertedBottleneck) {
    for (int c = 0; c < m; ++c) {
      if (c != g && choices[c].kind == ChoiceKind::InvertedBottleneck &&
          choices[c].expansion == choices[g].expansion) {
        pool.push_back(c);
      }
    }
  }
  pool.empty() ? redraw_any_other() : redraw_among(pool);
}

}  // namespace detail

// One child from two tournament winners: crossover pathway with chance p_km
// (uniform per-gene), otherwise the mutation pathway on the first parent
// (whole-arch chance p_m, then per-gene chance mutation_ratio).
inline Architecture make_offspring(const SpaceSpec& spec, const Architecture& a,
                                   const Architecture& b, const SearchConfig& cfg, Rng& rng) {
  const int L = spec.layer_count();
  Architecture child = a;
  if (rng.next_double() < cfg.p_km) {
    for (int l = 0; l < L; ++l) {
      if (rng.next_below(2) == 1) child.genes[l] = b.genes[l];
    }
    return child;
  }
  if (rng.next_double() < cfg.p_m) {
    for (int l = 0; l < L; ++l) {
      if (rng.next_double() < cfg.mutation_ratio) detail::mutate_gene(spec, child, l, cfg, rng);
    }
  }
  return child;
}

struct GenerationStat {
  int generation = 0;
  float best_acc = 0;
  double mean_madds = 0;
  double skip_ratio = 0;  // fraction of genes resolving to skip/stabilizer choices
};

struct AuditEvent {
  int generation = 0;  // -1 while seeding the initial populations
  std::string arch;
  std::int64_t madds = 0;
  bool madds_ok = false;
  bool acc_checked = false;  // accuracy is only ever measured after the madds gate
  float acc = 0;
  bool acc_ok = false;
};

struct SearchResult {
  std::vector<Individual> population;  // final P_N, ranks/crowding from the final sort
  std::vector<Individual> front;       // F1 of the final sort
  Individual best;                     // highest-accuracy feasible individual ever seen
  std::vector<GenerationStat> stats;
  std::vector<AuditEvent> audit;
};

namespace detail {

inline double skip_gene_ratio(const SpaceSpec& spec, const std::vector<Individual>& pop) {
  std::int64_t skips = 0, genes = 0;
  for (const auto& ind : pop) {
    for (int l = 0; l < spec.layer_count(); ++l) {
      ++genes;
      if (is_passthrough(spec.layers[l].choices[ind.arch.genes[l]])) ++skips;
    }
  }
  return genes == 0 ? 0.0 : static_cast<double>(skips) / genes;
}

}  // namespace detail

// Algorithm loop: seed P0/Q0 with uniform feasible draws, then per generation
// merge, non-dominated sort, truncate to n by rank and weighted crowding, and
// refill the offspring pool through the two-stage gate (madds, then one-shot
// accuracy). The last generation keeps its truncated population; no offspring
// are generated that could never be merged.
template <typename T>
SearchResult evolve(BasicSupernet<T>& net, const Dataset& valset, const SearchConfig& cfg) {
  cfg.validate();
  const SpaceSpec& spec = net.spec();
  // stabilizers fold away before deployment, so constraints and objectives
  // price every arch at its shipped cost
  const SpaceSpec cost_spec = without_stabilizers(spec);
  const int n = cfg.population;
  Rng rng(cfg.seed);

  SearchResult res;
  bool have_best = false;

  const auto gate = [&](const Architecture& arch, int generation, Individual& out) {
    AuditEvent ev;
    ev.generation = generation;
    ev.arch = arch.str();
    ev.madds = count_madds(cost_spec, arch);
    ev.madds_ok = ev.madds <= cfg.madds_max;
    if (ev.madds_ok) {
      ev.acc_checked = true;
      ev.acc = evaluate_oneshot(net, arch, valset);
      ev.acc_ok = ev.acc > cfg.acc_min;
    }
    res.audit.push_back(ev);
    if (!(ev.madds_ok && ev.acc_ok)) return false;
    out.arch = arch;
    out.objectives = {ev.acc, ev.madds, count_params(cost_spec, arch)};
    out.rank = -1;
    out.crowding = 0;
    if (!have_best || out.objectives.acc > res.best.objectives.acc) {
      res.best = out;
      have_best = true;
    }
    return true;
  };

  std::vector<Individual> P, Q;
  {
    const long budget = static_cast<long>(cfg.init_patience) * 2 * n;
    long draws = 0;
    while (static_cast<int>(P.size() + Q.size()) < 2 * n) {
      if (++draws > budget) {
        throw std::invalid_argument(
            "search: no feasible population under madds_max=" + std::to_string(cfg.madds_max) +
            ", acc_min=" + std::to_string(cfg.acc_min) + " after " + std::to_string(budget) +
            " uniform draws");
      }
      Individual ind;
      if (!gate(sample_uniform(spec, rng), -1, ind)) continue;
      (static_cast<int>(P.size()) < n ? P : Q).push_back(ind);
    }
  }

  for (int gen = 0; gen < cfg.generations; ++gen) {
    std::vector<Individual> merged = P;
    merged.insert(merged.end(), Q.begin(), Q.end());
    const std::vector<std::vector<int>> fronts = non_dominated_sort(merged);
    for (std::size_t f = 0; f < fronts.size(); ++f) {
      const std::vector<double> dist = weighted_crowding(merged, fronts[f], cfg.weights);
      for (std::size_t k = 0; k < fronts[f].size(); ++k) {
        merged[fronts[f][k]].rank = static_cast<int>(f);
        merged[fronts[f][k]].crowding = dist[k];
      }
    }

    std::vector<Individual> next;
    next.reserve(n);
    for (const auto& front : fronts) {
      if (static_cast<int>(next.size()) >= n) break;
      std::vector<int> order = front;
      std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
        if (merged[x].crowding != merged[y].crowding) {
          return merged[x].crowding > merged[y].crowding;
        }
        return x < y;
      });
      for (int idx : order) {
        if (static_cast<int>(next.size()) >= n) break;
        next.push_back(merged[idx]);
      }
    }

    GenerationStat stat;
    stat.generation = gen;
    stat.best_acc = 0;
    for (const auto& ind : next) stat.best_acc = std::max(stat.best_acc, ind.objectives.acc);
    double madds_sum = 0;
    for (const auto& ind : next) madds_sum += static_cast<double>(ind.objectives.madds);
    stat.mean_madds = madds_sum / next.size();
    stat.skip_ratio = detail::skip_gene_ratio(spec, next);
    res.stats.push_back(stat);

    P = std::move(next);
    if (gen + 1 == cfg.generations) break;

    Q.clear();
    const long budget = static_cast<long>(cfg.init_patience) * n;
    long attempts = 0;
    while (static_cast<int>(Q.size()) < n) {
      if (++attempts > budget) {
        throw std::runtime_error("search: offspring pool stalled at generation " +
                                 std::to_string(gen));
      }
      const Architecture& pa = detail::tournament_pick(P, rng).arch;
      const Architecture& pb = detail::tournament_pick(P, rng).arch;
      Individual child;
      if (gate(make_offspring(spec, pa, pb, cfg, rng), gen, child)) Q.push_back(child);
    }
  }

  const std::vector<std::vector<int>> fronts = non_dominated_sort(P);
  for (std::size_t f = 0; f < fronts.size(); ++f) {
    const std::vector<double> dist = weighted_crowding(P, fronts[f], cfg.weights);
    for (std::size_t k = 0; k < fronts[f].size(); ++k) {
      P[fronts[f][k]].rank = static_cast<int>(f);
      P[fronts[f][k]].crowding = dist[k];
    }
  }
  res.population = std::move(P);
  for (int idx : fronts.front()) res.front.push_back(res.population[idx]);
  return res;
}

// k members of a front at equal spacing along the madds axis; k=1 keeps the
// cheapest member.
inline std::vector<Architecture> select_equispaced(std::vector<Individual> front, int k) {
  if (k < 1 || k > static_cast<int>(front.size())) {
    throw std::invalid_argument("select_equispaced: k=" + std::to_string(k) +
                                " for a front of " + std::to_string(front.size()));
  }
  std::sort(front.begin(), front.end(), [](const Individual& a, const Individual& b) {
    if (a.objectives.madds != b.objectives.madds) return a.objectives.madds < b.objectives.madds;
    return a.arch < b.arch;
  });
  std::vector<Architecture> picks;
  if (k == 1) {
    picks.push_back(front.front().arch);
    return picks;
  }
  const double span = static_cast<double>(front.size() - 1) / (k - 1);
  for (int i = 0; i < k; ++i) {
    picks.push_back(front[static_cast<std::size_t>(std::llround(i * span))].arch);
  }
  return picks;
}

}  // namespace scnt
