// Pipeline entry point: gen-data -> train -> search -> fold -> rank-eval,
// plus diagnose. One output directory holds every artifact a stage produces,
// and each stage writes a manifest that replays it (same binary, same bytes).
//
// Exit codes: 0 ok, 1 runtime failure, 2 bad command line, 3 bad config.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "scnt/artifacts.hpp"
#include "scnt/costs.hpp"
#include "scnt/dataset.hpp"
#include "scnt/els.hpp"
#include "scnt/supernet.hpp"

namespace scnt::cli {

namespace fs = std::filesystem;

struct Flags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
};

// ---- config plumbing ----

inline Json default_config() {
  Json j;
  j["out"] = "";
  j["space"] = {{"name", "t1"}, {"file", ""}, {"stabilizers", true}, {"relu", false}};
  j["dataset"] = {{"n", 5632},         {"classes", 4},        {"size", 16},
                  {"channels", 3},     {"seed", 0},           {"noise-sigma", 0.1},
                  {"amp-lo", 0.25},    {"amp-hi", 0.38}};
  j["split"] = {{"val-fraction", 1.0 / 9.0}, {"test-fraction", 2.0 / 11.0}, {"seed", 5}};
  j["trainer"] = {{"strategy", "fairnas"}, {"epochs", 1},       {"batch-size", 64},
                  {"lr", 0.05},            {"momentum", 0.9},   {"weight-decay", 1e-4},
                  {"seed", 0},             {"supernet-seed", 1}};
  j["search"] = {{"population", 8},
                 {"generations", 2},
                 {"madds-max", 0},  // 0: 60% of the most expensive arch
                 {"acc-min", 0.0},
                 {"mutation-ratio", 0.8},
                 {"p-rm", 0.2},
                 {"p-re", 0.65},
                 {"p-pr", 0.15},
                 {"p-m", 0.7},
                 {"p-km", 0.3},
                 {"seed", 0},
                 {"select-k", 3},
                 {"weights", {{"acc", 0.4}, {"madds", 0.4}, {"params", 0.2}}}};
  j["oracle"] = {{"epochs", 30},     {"batch-size", 64}, {"lr", 0.08},
                 {"momentum", 0.9},  {"weight-decay", 1e-4}, {"seed", 0},
                 {"budget", 256},    {"workers", 1}};
  j["rank"] = {{"table", ""}, {"sample-size", 0}, {"pair-gap", 0.05}};
  j["fold"] = {{"arch", ""}, {"arch-file", ""}, {"probes", 16}, {"tolerance", 1e-4}, {"seed", 0}};
  j["diagnose"] = {{"layer", -1}, {"paths", 64}, {"bins", 20}, {"probe-batch", 8}, {"seed", 0}};
  return j;
}

namespace detail {

inline bool same_kind(const Json& a, const Json& b) {
  if (a.is_number() && b.is_number()) return true;
  if (a.is_boolean() && b.is_boolean()) return true;
  if (a.is_string() && b.is_string()) return true;
  if (a.is_object() && b.is_object()) return true;
  return false;
}

inline const char* kind_name(const Json& v) {
  if (v.is_number()) return "a number";
  if (v.is_boolean()) return "a boolean";
  if (v.is_string()) return "a string";
  if (v.is_object()) return "a section";
  return "an unsupported value";
}

// overlay user keys onto the defaults; anything the defaults do not know is a
// typo worth failing loudly on
inline void merge_config(Json& base, const Json& overlay, const std::string& prefix) {
  if (!overlay.is_object()) {
    throw std::invalid_argument("config: '" + (prefix.empty() ? std::string("<root>") : prefix) +
                                "' must be a section");
  }
  for (const auto& [key, value] : overlay.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) {
      throw std::invalid_argument("config: unknown key '" + path + "'");
    }
    Json& slot = base[key];
    if (slot.is_object()) {
      merge_config(slot, value, path);
      continue;
    }
    if (!same_kind(slot, value)) {
      throw std::invalid_argument("config: '" + path + "' expects " + kind_name(slot) + ", got " +
                                  kind_name(value));
    }
    slot = value;
  }
}

}  // namespace detail

inline Json load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("config: cannot read '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("config '" + path + "': " + e.what());
  }
  // a run manifest wraps the config it ran with; accept it directly
  if (j.is_object() && j.contains("config")) return j.at("config");
  return j;
}

// defaults <- config file <- flags; the winning values land in the config
// object itself so the manifest alone replays the run
inline Json resolve_config(const std::string& command, const Flags& flags) {
  Json cfg = default_config();
  if (!flags.config.empty()) detail::merge_config(cfg, load_config_file(flags.config), "");
  if (!flags.out.empty()) cfg["out"] = flags.out;
  if (flags.workers) cfg["oracle"]["workers"] = *flags.workers;
  if (flags.seed) {
    if (command == "gen-data") cfg["dataset"]["seed"] = *flags.seed;
    if (command == "train") cfg["trainer"]["seed"] = *flags.seed;
    if (command == "search") cfg["search"]["seed"] = *flags.seed;
    if (command == "rank-eval") cfg["oracle"]["seed"] = *flags.seed;
    if (command == "fold") cfg["fold"]["seed"] = *flags.seed;
    if (command == "diagnose") cfg["diagnose"]["seed"] = *flags.seed;
  }
  if (cfg["out"].get<std::string>().empty()) {
    const char* env = std::getenv("SCARLET_KIT_OUT");
    if (env && *env) cfg["out"] = std::string(env);
  }
  if (cfg["out"].get<std::string>().empty()) {
    throw std::invalid_argument(
        "config: no output directory; pass --out, set 'out', or export SCARLET_KIT_OUT");
  }
  return cfg;
}

inline void write_manifest(const std::string& command, const Json& cfg) {
  const fs::path out = cfg.at("out").get<std::string>();
  Json m;
  m["tool"] = kToolName;
  m["version"] = kToolVersion;
  m["command"] = command;
  m["config-hash"] = config_hash(cfg.dump());
  m["config"] = cfg;
  auto f = scnt::detail::open_artifact((out / ("manifest-" + command + ".json")).string());
  f << m.dump(2) << '\n';
}

// ---- shared loaders ----

inline SpaceSpec space_from_config(const Json& sec) {
  const std::string file = sec.at("file").get<std::string>();
  if (!file.empty()) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::invalid_argument("config: space.file '" + file + "' does not exist");
    try {
      return space_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument("space file '" + file + "': " + e.what());
    }
  }
  const std::string name = sec.at("name").get<std::string>();
  if (name == "t1") return t1_space();
  if (name == "s1") return s1_space(false);
  if (name == "s2") return s1_space(true);
  throw std::invalid_argument("config: unknown space '" + name + "' (t1|s1|s2, or set space.file)");
}

inline Dataset load_tagged(const fs::path& path, SplitTag tag, const char* hint) {
  if (!fs::exists(path)) {
    throw std::invalid_argument("missing '" + path.string() + "'; run " + hint + " first");
  }
  Dataset ds = load_dataset_container(path.string());
  ds.tag = tag;  // the container stores tensors only; the file role restores the tag
  return ds;
}

inline SplitDataset load_splits(const fs::path& out) {
  SplitDataset sp;
  sp.train = load_tagged(out / "data" / "train.scnt", SplitTag::Train, "gen-data");
  sp.val = load_tagged(out / "data" / "val.scnt", SplitTag::Val, "gen-data");
  sp.test = load_tagged(out / "data" / "test.scnt", SplitTag::Test, "gen-data");
  return sp;
}

struct LoadedNet {
  SpaceSpec base;  // deploy view, stabilizers swapped back to skips
  bool stabilizers = false;
  bool relu = false;
  Supernet net;
};

inline LoadedNet load_supernet(const fs::path& out) {
  const fs::path meta_path = out / "supernet.json";
  if (!fs::exists(meta_path)) {
    throw std::invalid_argument("missing '" + meta_path.string() + "'; run train first");
  }
  std::ifstream in(meta_path, std::ios::binary);
  Json meta;
  try {
    meta = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("supernet meta '" + meta_path.string() + "': " + e.what());
  }
  std::ifstream sf((out / "space.json").string(), std::ios::binary);
  if (!sf) throw std::invalid_argument("missing '" + (out / "space.json").string() + "'; run train first");
  const SpaceSpec base = space_from_json(nlohmann::json::parse(sf));
  const bool stab = meta.at("stabilizers").get<bool>();
  const bool relu = meta.at("relu").get<bool>();
  LoadedNet ln{base, stab, relu, Supernet(stab ? with_stabilizers(base, relu) : base, 0)};
  ln.net.load((out / "supernet.scnt").string());
  return ln;
}

// ---- subcommands ----

inline void run_gen_data(const Json& cfg) {
  const Json& d = cfg.at("dataset");
  SynthConfig sc;
  sc.n = d.at("n").get<int>();
  sc.classes = d.at("classes").get<int>();
  sc.size = d.at("size").get<int>();
  sc.channels = d.at("channels").get<int>();
  sc.seed = d.at("seed").get<std::uint64_t>();
  sc.noise_sigma = d.at("noise-sigma").get<float>();
  sc.amp_lo = d.at("amp-lo").get<float>();
  sc.amp_hi = d.at("amp-hi").get<float>();

  const Json& s = cfg.at("split");
  const Dataset full = generate_synthetic(sc);
  const SplitDataset sp = split(full, s.at("val-fraction").get<double>(),
                                s.at("seed").get<std::uint64_t>(),
                                s.at("test-fraction").get<double>());

  const fs::path out = cfg.at("out").get<std::string>();
  fs::create_directories(out / "data");
  save_dataset((out / "data" / "full.scnt").string(), full);
  save_dataset((out / "data" / "train.scnt").string(), sp.train);
  save_dataset((out / "data" / "val.scnt").string(), sp.val);
  save_dataset((out / "data" / "test.scnt").string(), sp.test);
  std::cout << "gen-data: " << full.size() << " samples -> " << sp.train.size() << " train / "
            << sp.val.size() << " val / " << sp.test.size() << " test\n";
}

inline void run_train(const Json& cfg) {
  const fs::path out = cfg.at("out").get<std::string>();
  const SplitDataset sp = load_splits(out);

  const SpaceSpec base = space_from_config(cfg.at("space"));
  const bool stab = cfg.at("space").at("stabilizers").get<bool>();
  const bool relu = cfg.at("space").at("relu").get<bool>();

  const Json& t = cfg.at("trainer");
  TrainConfig tc;
  tc.strategy = parse_strategy(t.at("strategy").get<std::string>());
  tc.epochs = t.at("epochs").get<int>();
  tc.batch_size = t.at("batch-size").get<int>();
  tc.lr = t.at("lr").get<float>();
  tc.momentum = t.at("momentum").get<float>();
  tc.weight_decay = t.at("weight-decay").get<float>();
  tc.seed = t.at("seed").get<std::uint64_t>();
  tc.els_enabled = stab;
  tc.validate();

  Supernet net(stab ? with_stabilizers(base, relu) : base,
               t.at("supernet-seed").get<std::uint64_t>());
  const TrainLog log = train_supernet(net, sp.train, sp.val, tc);

  net.save((out / "supernet.scnt").string());
  {
    auto f = scnt::detail::open_artifact((out / "space.json").string());
    f << space_to_json(base).dump(2) << '\n';
    Json meta;
    meta["stabilizers"] = stab;
    meta["relu"] = relu;
    meta["strategy"] = strategy_name(tc.strategy);
    meta["supernet-seed"] = t.at("supernet-seed").get<std::uint64_t>();
    auto m = scnt::detail::open_artifact((out / "supernet.json").string());
    m << meta.dump(2) << '\n';
  }
  save_train_log_csv((out / "train-log.csv").string(), log);
  save_train_summary((out / "train-summary.txt").string(), log);
  std::cout << "train: " << strategy_name(tc.strategy) << " x" << tc.epochs
            << " epochs, stabilizers " << (stab ? "on" : "off") << ", final val "
            << (log.epochs.empty() ? 0.0f : log.epochs.back().val_acc_mean) << "\n";
}

inline void run_search(const Json& cfg) {
  const fs::path out = cfg.at("out").get<std::string>();
  LoadedNet ln = load_supernet(out);
  const Dataset val = load_tagged(out / "data" / "val.scnt", SplitTag::Val, "gen-data");

  const Json& s = cfg.at("search");
  SearchConfig sc;
  sc.population = s.at("population").get<int>();
  sc.generations = s.at("generations").get<int>();
  sc.madds_max = s.at("madds-max").get<std::int64_t>();
  if (sc.madds_max == 0) {
    sc.madds_max = static_cast<std::int64_t>(
        0.6 * static_cast<double>(count_madds(ln.base, max_madds_arch(ln.base))));
  }
  sc.acc_min = s.at("acc-min").get<float>();
  sc.mutation_ratio = s.at("mutation-ratio").get<double>();
  sc.p_rm = s.at("p-rm").get<double>();
  sc.p_re = s.at("p-re").get<double>();
  sc.p_pr = s.at("p-pr").get<double>();
  sc.p_m = s.at("p-m").get<double>();
  sc.p_km = s.at("p-km").get<double>();
  sc.seed = s.at("seed").get<std::uint64_t>();
  sc.weights.acc = s.at("weights").at("acc").get<double>();
  sc.weights.madds = s.at("weights").at("madds").get<double>();
  sc.weights.params = s.at("weights").at("params").get<double>();

  const SearchResult res = evolve(ln.net, val, sc);

  fs::create_directories(out / "search");
  save_generation_csv((out / "search" / "generations.csv").string(), res.stats);
  save_front_csv((out / "search" / "front.csv").string(), res.front);
  save_audit_csv((out / "search" / "audit.csv").string(), res.audit);
  const int k = std::min<int>(s.at("select-k").get<int>(), static_cast<int>(res.front.size()));
  const std::vector<Architecture> picks = select_equispaced(res.front, std::max(k, 1));
  for (std::size_t i = 0; i < picks.size(); ++i) {
    const auto it = std::find_if(res.front.begin(), res.front.end(),
                                 [&](const Individual& ind) { return ind.arch == picks[i]; });
    save_selected_arch((out / "search" / ("selected-" + std::to_string(i) + ".txt")).string(),
                       *it);
  }
  std::cout << "search: front " << res.front.size() << " archs, best feasible acc "
            << res.best.objectives.acc << ", selected " << picks.size() << "\n";
}

inline void run_fold(const Json& cfg) {
  const fs::path out = cfg.at("out").get<std::string>();
  LoadedNet ln = load_supernet(out);

  const Json& f = cfg.at("fold");
  Architecture arch;
  const std::string genes = f.at("arch").get<std::string>();
  std::string arch_file = f.at("arch-file").get<std::string>();
  if (!genes.empty()) {
    arch = Architecture::parse(genes);
  } else {
    if (arch_file.empty()) arch_file = (out / "search" / "selected-0.txt").string();
    if (!fs::exists(arch_file)) {
      throw std::invalid_argument("fold: no architecture; set fold.arch, fold.arch-file, or run search");
    }
    arch = load_selected_arch(arch_file);
  }
  validate_arch(ln.net.spec(), arch);

  StandaloneNet sa = strip_stabilizers(ln.net, arch);
  const FoldReport rep = verify_equivalence(ln.net, arch, sa, f.at("probes").get<int>(),
                                            f.at("tolerance").get<double>(),
                                            f.at("seed").get<std::uint64_t>());

  fs::create_directories(out / "fold");
  sa.save((out / "fold" / "standalone.scnt").string());
  {
    auto r = scnt::detail::open_artifact((out / "fold" / "report.txt").string());
    r << "arch: " << arch.str() << '\n';
    r << "probes: " << rep.probes << '\n';
    r << "passed: " << rep.passed << '\n';
    r << "tolerance: " << scnt::detail::format_float(rep.tolerance) << '\n';
    r << "max-abs-diff: " << scnt::detail::format_float(rep.max_abs_diff) << '\n';
    r << "equivalent: " << (rep.all_passed() ? "yes" : "no") << '\n';
  }
  std::cout << "fold: arch " << arch.str() << ", " << rep.passed << "/" << rep.probes
            << " probes within " << rep.tolerance << ", max drift " << rep.max_abs_diff << "\n";
}

inline void run_rank_eval(const Json& cfg) {
  const fs::path out = cfg.at("out").get<std::string>();
  LoadedNet ln = load_supernet(out);
  const Dataset val = load_tagged(out / "data" / "val.scnt", SplitTag::Val, "gen-data");

  const Json& o = cfg.at("oracle");
  OracleConfig oc;
  oc.epochs = o.at("epochs").get<int>();
  oc.batch_size = o.at("batch-size").get<int>();
  oc.lr = o.at("lr").get<float>();
  oc.momentum = o.at("momentum").get<float>();
  oc.weight_decay = o.at("weight-decay").get<float>();
  oc.seed = o.at("seed").get<std::uint64_t>();
  oc.budget = o.at("budget").get<std::int64_t>();
  oc.workers = o.at("workers").get<int>();

  fs::create_directories(out / "rank");
  const Json& r = cfg.at("rank");
  const std::string table_path = r.at("table").get<std::string>();
  GroundTruthTable table;
  if (!table_path.empty()) {
    if (!fs::exists(table_path)) {
      throw std::invalid_argument("config: rank.table '" + table_path + "' does not exist");
    }
    table = load_ground_truth_csv(table_path);
  } else {
    const SplitDataset sp = load_splits(out);
    table = exhaustive_ground_truth(ln.base, sp, oc);
    save_ground_truth_csv((out / "rank" / "table.csv").string(), table);
    save_table_manifest((out / "rank" / "table-manifest.json").string(), ln.base, oc,
                        table.size());
  }

  const int sample_size = r.at("sample-size").get<int>();
  RankingResult res;
  if (sample_size > 0) {
    Rng rng(oc.seed);
    res = ranking_experiment(ln.net, val, table, sample_size, rng);
  } else {
    // no sampling: score the whole table in its own order
    std::vector<double> one, truth;
    for (const auto& [arch, e] : table.entries) {
      ScatterPoint p;
      p.arch = arch;
      p.truth = e.acc;
      p.oneshot = evaluate_oneshot(ln.net, arch, val);
      one.push_back(p.oneshot);
      truth.push_back(p.truth);
      res.points.push_back(std::move(p));
    }
    res.tau = kendall_tau(one, truth);
  }

  const PairOrdering po = ordered_pair_fraction(res.points, r.at("pair-gap").get<float>());
  save_scatter_csv((out / "rank" / "scatter.csv").string(), res.points);
  {
    auto f = scnt::detail::open_artifact((out / "rank" / "summary.txt").string());
    f << "table: " << (table_path.empty() ? "computed" : table_path) << '\n';
    f << "entries: " << table.size() << '\n';
    f << "scored: " << res.points.size() << '\n';
    f << "kendall-tau: " << scnt::detail::format_float(res.tau) << '\n';
    f << "ordered-pairs: " << po.correct << "/" << po.comparable << " at gap "
      << scnt::detail::format_float(r.at("pair-gap").get<double>()) << '\n';
  }
  std::cout << "rank-eval: tau " << res.tau << " over " << res.points.size() << " archs ("
            << po.correct << "/" << po.comparable << " clear pairs ordered)\n";
}

inline void run_diagnose(const Json& cfg) {
  const fs::path out = cfg.at("out").get<std::string>();
  LoadedNet ln = load_supernet(out);
  const Dataset val = load_tagged(out / "data" / "val.scnt", SplitTag::Val, "gen-data");

  const Json& d = cfg.at("diagnose");
  const int probe_batch = d.at("probe-batch").get<int>();
  if (probe_batch < 1 || probe_batch > val.size()) {
    throw std::invalid_argument("config: diagnose.probe-batch must be in [1," +
                                std::to_string(val.size()) + "]");
  }
  std::vector<int> idx(probe_batch);
  std::iota(idx.begin(), idx.end(), 0);
  const Tensor probe = select(val, idx).images;

  fs::create_directories(out / "diagnose");
  const int layer = d.at("layer").get<int>();
  const int layers = ln.net.spec().layer_count();
  if (layer >= layers) {
    throw std::invalid_argument("config: diagnose.layer " + std::to_string(layer) +
                                " out of range, space has " + std::to_string(layers));
  }
  for (int l = layer < 0 ? 0 : layer; l <= (layer < 0 ? layers - 1 : layer); ++l) {
    const SimilarityMatrix sim = layer_similarity(ln.net, l, probe);
    save_similarity_csv((out / "diagnose" / ("similarity-layer" + std::to_string(l) + ".csv")).string(),
                        sim);
  }

  const int paths = d.at("paths").get<int>();
  if (paths < 1) throw std::invalid_argument("config: diagnose.paths must be >= 1");
  Rng rng(d.at("seed").get<std::uint64_t>());
  std::vector<double> accs;
  {
    auto f = scnt::detail::open_artifact((out / "diagnose" / "oneshot.csv").string());
    f << "genes,acc\n";
    for (int i = 0; i < paths; ++i) {
      const Architecture a = sample_uniform(ln.net.spec(), rng);
      const float acc = evaluate_oneshot(ln.net, a, val);
      accs.push_back(acc);
      f << genes_field(a) << ',' << scnt::detail::format_float(acc) << '\n';
    }
  }
  save_histogram_csv((out / "diagnose" / "oneshot-hist.csv").string(),
                     build_histogram(accs, d.at("bins").get<int>(), 0.0, 1.0));
  std::cout << "diagnose: " << (layer < 0 ? layers : 1) << " similarity matrices, " << paths
            << " one-shot paths\n";
}

// ---- dispatch ----

inline int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"scarlet-kit: supernet training, stabilizer fold-out, and search"};
  app.require_subcommand(1);
  app.fallthrough();

  Flags flags;
  std::uint64_t seed_value = 0;
  int workers_value = 1;
  app.add_option("--config", flags.config, "JSON config file (or a run manifest)");
  app.add_option("--out", flags.out, "output directory (or set SCARLET_KIT_OUT)");
  auto* seed_opt = app.add_option("--seed", seed_value, "override the subcommand's seed");
  auto* workers_opt = app.add_option("--workers", workers_value, "oracle worker threads");

  app.add_subcommand("gen-data", "generate the synthetic dataset and its splits");
  app.add_subcommand("train", "train a weight-sharing supernet");
  app.add_subcommand("search", "evolve architectures against the trained supernet");
  app.add_subcommand("fold", "strip stabilizers from a path into a standalone net");
  app.add_subcommand("rank-eval", "score one-shot ranking against ground truth");
  app.add_subcommand("diagnose", "feature similarity matrices and one-shot spread");

  std::vector<const char*> argv;
  argv.push_back("scarlet-kit");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  if (seed_opt->count() > 0) flags.seed = seed_value;
  if (workers_opt->count() > 0) flags.workers = workers_value;

  try {
    const Json cfg = resolve_config(command, flags);
    fs::create_directories(cfg.at("out").get<std::string>());
    write_manifest(command, cfg);
    if (command == "gen-data") run_gen_data(cfg);
    if (command == "train") run_train(cfg);
    if (command == "search") run_search(cfg);
    if (command == "fold") run_fold(cfg);
    if (command == "rank-eval") run_rank_eval(cfg);
    if (command == "diagnose") run_diagnose(cfg);
    return 0;
  } catch (const std::invalid_argument& e) {
    std::cerr << "scarlet-kit " << command << ": " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "scarlet-kit " << command << ": " << e.what() << "\n";
    return 1;
  }
}

}  // namespace scnt::cli
