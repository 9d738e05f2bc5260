// CSV and manifest plumbing shared by the CLI and the experiment drivers.
//
// Conventions for every artifact file:
//   - UTF-8, comma-delimited, one mandatory header row
//   - genes inside a field are dash-joined ("0-1-2-0"); commas stay delimiters
//   - floats print with %.9g, which round-trips binary32 exactly, so a replay
//     with the same binary produces byte-identical files
#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "scnt/diagnostics.hpp"
#include "scnt/evolution.hpp"
#include "scnt/oracle.hpp"
#include "scnt/space.hpp"
#include "scnt/trainer.hpp"

namespace scnt {

inline constexpr const char* kToolName = "scarlet-kit";
inline constexpr const char* kToolVersion = "0.1.0";

using Json = nlohmann::ordered_json;

namespace detail {

inline std::string format_float(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

inline std::ofstream open_artifact(const std::string& path) {
  std::ofstream out(path, std::ios::binary);  // binary: no CRLF surprises
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  return out;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  return in;
}

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

inline void expect_header(const std::string& got, const std::string& want,
                          const std::string& path) {
  std::string trimmed = got;
  while (!trimmed.empty() && trimmed.back() == '\r') trimmed.pop_back();
  if (trimmed != want) {
    throw std::runtime_error(path + ": expected header '" + want + "', got '" + trimmed + "'");
  }
}

inline double parse_number(const std::string& field, const std::string& path, int line) {
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (end == field.c_str() || *end != '\0') {
    throw std::runtime_error(path + ": line " + std::to_string(line) + ": bad number '" +
                             field + "'");
  }
  return v;
}

}  // namespace detail

// "0,1,2,0" is the human form; fields use dashes so CSV columns stay columns
inline std::string genes_field(const Architecture& arch) {
  std::string out;
  for (std::size_t i = 0; i < arch.genes.size(); ++i) {
    if (i) out.push_back('-');
    out += std::to_string(arch.genes[i]);
  }
  return out;
}

inline Architecture parse_genes_field(const std::string& field) {
  Architecture a;
  std::string token;
  std::istringstream in(field);
  while (std::getline(in, token, '-')) {
    if (token.empty()) throw std::invalid_argument("bad genes field '" + field + "'");
    a.genes.push_back(std::atoi(token.c_str()));
  }
  if (a.genes.empty()) throw std::invalid_argument("bad genes field '" + field + "'");
  return a;
}

// FNV-1a over the canonical config dump; cheap, stable, good enough to detect
// a config/artifact mismatch (not a cryptographic seal).
inline std::string config_hash(const std::string& canonical) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---- ground truth table ----

inline void save_ground_truth_csv(const std::string& path, const GroundTruthTable& table) {
  auto out = detail::open_artifact(path);
  out << "genes,acc,madds,params,seed\n";
  for (const auto& [arch, e] : table.entries) {
    out << genes_field(arch) << ',' << detail::format_float(e.acc) << ',' << e.madds << ','
        << e.params << ',' << e.seed << '\n';
  }
}

inline GroundTruthTable load_ground_truth_csv(const std::string& path) {
  auto in = detail::open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  detail::expect_header(line, "genes,acc,madds,params,seed", path);
  GroundTruthTable table;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_fields(line);
    if (f.size() != 5) {
      throw std::runtime_error(path + ": line " + std::to_string(lineno) + ": expected 5 fields, got " +
                               std::to_string(f.size()));
    }
    GroundTruthEntry e;
    e.acc = static_cast<float>(detail::parse_number(f[1], path, lineno));
    e.madds = static_cast<std::int64_t>(detail::parse_number(f[2], path, lineno));
    e.params = static_cast<std::int64_t>(detail::parse_number(f[3], path, lineno));
    e.seed = static_cast<std::uint64_t>(detail::parse_number(f[4], path, lineno));
    table.entries[parse_genes_field(f[0])] = e;
  }
  return table;
}

inline Json oracle_config_json(const OracleConfig& cfg) {
  Json j;
  j["epochs"] = cfg.epochs;
  j["batch-size"] = cfg.batch_size;
  j["lr"] = cfg.lr;
  j["momentum"] = cfg.momentum;
  j["weight-decay"] = cfg.weight_decay;
  j["seed"] = cfg.seed;
  j["budget"] = cfg.budget;
  j["workers"] = cfg.workers;
  return j;
}

inline void save_table_manifest(const std::string& path, const SpaceSpec& spec,
                                const OracleConfig& cfg, int entries) {
  Json j;
  j["kind"] = "ground-truth";
  j["tool"] = kToolName;
  j["version"] = kToolVersion;
  j["space"] = spec.name;
  j["entries"] = entries;
  j["oracle"] = oracle_config_json(cfg);
  j["config-hash"] = config_hash(spec.name + "|" + oracle_config_json(cfg).dump());
  auto out = detail::open_artifact(path);
  out << j.dump(2) << '\n';
}

// ---- ranking ----

inline void save_scatter_csv(const std::string& path, const std::vector<ScatterPoint>& points) {
  auto out = detail::open_artifact(path);
  out << "genes,oneshot,truth\n";
  for (const auto& p : points) {
    out << genes_field(p.arch) << ',' << detail::format_float(p.oneshot) << ','
        << detail::format_float(p.truth) << '\n';
  }
}

// ---- supernet training ----

inline void save_train_log_csv(const std::string& path, const TrainLog& log) {
  auto out = detail::open_artifact(path);
  out << "step,path-genes,loss,acc\n";
  for (const auto& s : log.steps) {
    std::string genes = s.arch;
    for (char& ch : genes) {
      if (ch == ',') ch = '-';
    }
    out << s.step << ',' << genes << ',' << detail::format_float(s.loss) << ','
        << detail::format_float(s.acc) << '\n';
  }
}

inline void save_train_summary(const std::string& path, const TrainLog& log) {
  auto out = detail::open_artifact(path);
  out << "strategy: " << strategy_name(log.config.strategy) << '\n';
  out << "epochs: " << log.config.epochs << '\n';
  out << "stabilizers: " << (log.config.els_enabled ? "on" : "off") << '\n';
  out << "seed: " << log.config.seed << '\n';
  out << '\n';
  out << "epoch  train-loss  train-acc  train-acc-std  val-acc  val-acc-std\n";
  for (const auto& e : log.epochs) {
    out << e.epoch << "  " << detail::format_float(e.train_loss) << "  "
        << detail::format_float(e.train_acc) << "  " << detail::format_float(e.train_acc_std)
        << "  " << detail::format_float(e.val_acc_mean) << "  "
        << detail::format_float(e.val_acc_std) << '\n';
  }
  out << '\n';
  out << "update counts per layer choice:\n";
  for (std::size_t l = 0; l < log.update_counts.size(); ++l) {
    out << "layer " << l << ':';
    for (std::int64_t c : log.update_counts[l]) out << ' ' << c;
    out << '\n';
  }
}

// ---- diagnostics ----

inline void save_similarity_csv(const std::string& path, const SimilarityMatrix& sim) {
  auto out = detail::open_artifact(path);
  out << "block";
  for (const auto& l : sim.labels) out << ',' << l;
  out << ",row-mean\n";
  for (int i = 0; i < sim.rows(); ++i) {
    out << sim.labels[i];
    for (int j = 0; j < sim.rows(); ++j) out << ',' << detail::format_float(sim.values[i][j]);
    out << ',' << detail::format_float(sim.row_means[i]) << '\n';
  }
}

struct Histogram {
  double lo = 0;
  double hi = 1;
  std::vector<std::int64_t> counts;
};

inline Histogram build_histogram(const std::vector<double>& values, int bins, double lo,
                                 double hi) {
  if (bins < 1 || !(hi > lo)) throw std::invalid_argument("histogram: need bins >= 1 and hi > lo");
  Histogram h;
  h.lo = lo;
  h.hi = hi;
  h.counts.assign(bins, 0);
  for (double v : values) {
    int b = static_cast<int>((v - lo) / (hi - lo) * bins);
    if (b < 0) b = 0;
    if (b >= bins) b = bins - 1;  // hi lands in the last bin
    ++h.counts[b];
  }
  return h;
}

inline void save_histogram_csv(const std::string& path, const Histogram& h) {
  auto out = detail::open_artifact(path);
  out << "bin-lo,bin-hi,count\n";
  const int bins = static_cast<int>(h.counts.size());
  for (int b = 0; b < bins; ++b) {
    const double lo = h.lo + (h.hi - h.lo) * b / bins;
    const double hi = h.lo + (h.hi - h.lo) * (b + 1) / bins;
    out << detail::format_float(lo) << ',' << detail::format_float(hi) << ',' << h.counts[b]
        << '\n';
  }
}

// ---- search ----

inline void save_generation_csv(const std::string& path, const std::vector<GenerationStat>& stats) {
  auto out = detail::open_artifact(path);
  out << "generation,best-acc,mean-madds,skip-ratio\n";
  for (const auto& g : stats) {
    out << g.generation << ',' << detail::format_float(g.best_acc) << ','
        << detail::format_float(g.mean_madds) << ',' << detail::format_float(g.skip_ratio)
        << '\n';
  }
}

inline void save_front_csv(const std::string& path, const std::vector<Individual>& front) {
  auto out = detail::open_artifact(path);
  out << "genes,acc,madds,params\n";
  for (const auto& ind : front) {
    out << genes_field(ind.arch) << ',' << detail::format_float(ind.objectives.acc) << ','
        << ind.objectives.madds << ',' << ind.objectives.params << '\n';
  }
}

inline void save_audit_csv(const std::string& path, const std::vector<AuditEvent>& audit) {
  auto out = detail::open_artifact(path);
  out << "generation,genes,madds,madds-ok,acc-checked,acc,acc-ok\n";
  for (const auto& a : audit) {
    std::string genes = a.arch;
    for (char& ch : genes) {
      if (ch == ',') ch = '-';
    }
    out << a.generation << ',' << genes << ',' << a.madds << ','
        << (a.madds_ok ? 1 : 0) << ',' << (a.acc_checked ? 1 : 0) << ','
        << detail::format_float(a.acc) << ',' << (a.acc_ok ? 1 : 0) << '\n';
  }
}

// one small file per selected arch so downstream fold/train jobs can take a
// single path instead of slicing a CSV
inline void save_selected_arch(const std::string& path, const Individual& ind) {
  auto out = detail::open_artifact(path);
  out << "arch: " << ind.arch.str() << '\n';
  out << "acc: " << detail::format_float(ind.objectives.acc) << '\n';
  out << "madds: " << ind.objectives.madds << '\n';
  out << "params: " << ind.objectives.params << '\n';
}

inline Architecture load_selected_arch(const std::string& path) {
  auto in = detail::open_input(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("arch: ", 0) == 0) {
      std::string v = line.substr(6);
      while (!v.empty() && v.back() == '\r') v.pop_back();
      return Architecture::parse(v);
    }
  }
  throw std::runtime_error(path + ": no 'arch:' line");
}

}  // namespace scnt
