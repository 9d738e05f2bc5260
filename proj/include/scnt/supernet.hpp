#pragma once

// Weight-sharing supernet: per-(layer, choice) parameter banks plus stem and
// tail. Forward passes assemble a transient node chain that binds the shared
// parameters of one chosen path, so unchosen banks are never touched and
// concurrent eval-mode passes need no locking. The same bank builders back
// BasicStandalone, the from-scratch single-architecture network.

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "scnt/checkpoint.hpp"
#include "scnt/costs.hpp"
#include "scnt/nodes.hpp"
#include "scnt/space.hpp"

namespace scnt {

enum class ElsInit { IdentityNoise, Random };

inline constexpr float kBnMomentum = 0.1f;
inline constexpr float kBnEps = 1e-5f;

template <typename T>
struct IbBank {
  ParamPtr<T> expand;
  BnState<T> bn1;
  ParamPtr<T> dw;
  BnState<T> bn2;
  ParamPtr<T> se_reduce, se_expand;  // null unless the choice has SE
  ParamPtr<T> project;
  BnState<T> bn3;
};

template <typename T>
struct ChoiceBank {
  ChoiceSpec choice;
  IbBank<T> ib;     // populated for inverted bottlenecks
  ParamPtr<T> els;  // populated for stabilizers
};

template <typename T>
ParamPtr<T> make_els_param(const std::string& name, int in_c, int out_c, ElsInit init, Rng& rng) {
  BasicTensor<T> w(out_c, in_c, 1, 1);
  if (init == ElsInit::IdentityNoise) {
    w.fill_normal(rng, T(0), T(0.01));
    for (int i = 0; i < std::min(out_c, in_c); ++i) w.at(i, i, 0, 0) += T(1);
  } else {
    w.fill_normal(rng, T(0), std::sqrt(T(2) / in_c));
  }
  return make_param<T>(name, std::move(w));
}

template <typename T>
IbBank<T> make_ib_bank(const std::string& prefix, int in_c, int out_c, const ChoiceSpec& c,
                       Rng& rng) {
  IbBank<T> bank;
  const int mid = c.expansion * in_c;
  bank.expand = he_conv_param<T>(prefix + ".expand", mid, in_c, 1, rng);
  bank.bn1 = BnState<T>(prefix + ".bn1", mid);
  bank.dw = he_conv_param<T>(prefix + ".dw", mid, 1, c.kernel, rng);
  bank.bn2 = BnState<T>(prefix + ".bn2", mid);
  if (c.se) {
    const int semid = se_mid_channels(mid);
    bank.se_reduce = he_conv_param<T>(prefix + ".se_reduce", semid, mid, 1, rng);
    bank.se_expand = he_conv_param<T>(prefix + ".se_expand", mid, semid, 1, rng);
  }
  bank.project = he_conv_param<T>(prefix + ".project", out_c, mid, 1, rng);
  bank.bn3 = BnState<T>(prefix + ".bn3", out_c);
  return bank;
}

template <typename T>
void append_ib_nodes(Network<T>& net, const IbBank<T>& bank, const ChoiceSpec& c, int stride) {
  const int mid = bank.expand->value.n();  // expand output width survives folding
  net.add(std::make_unique<ConvNode<T>>(bank.expand, 1, 0, 1));
  net.add(std::make_unique<BnNode<T>>(bank.bn1, T(kBnMomentum), T(kBnEps)));
  net.add(std::make_unique<ActNode<T>>(ActKind::Relu6));
  net.add(std::make_unique<ConvNode<T>>(bank.dw, stride, c.kernel / 2, mid));
  net.add(std::make_unique<BnNode<T>>(bank.bn2, T(kBnMomentum), T(kBnEps)));
  net.add(std::make_unique<ActNode<T>>(ActKind::Relu6));
  if (c.se) {
    net.add(std::make_unique<SqueezeExciteNode<T>>(bank.se_reduce, bank.se_expand));
  }
  net.add(std::make_unique<ConvNode<T>>(bank.project, 1, 0, 1));
  net.add(std::make_unique<BnNode<T>>(bank.bn3, T(kBnMomentum), T(kBnEps)));
}

namespace detail {

template <typename T>
void add_named_param(std::vector<std::pair<std::string, BasicTensor<T>*>>& out,
                     const ParamPtr<T>& p) {
  if (p) out.emplace_back(p->name, &p->value);
}

template <typename T>
void add_named_bn(std::vector<std::pair<std::string, BasicTensor<T>*>>& out,
                  const BnState<T>& bn) {
  add_named_param(out, bn.gamma);
  add_named_param(out, bn.beta);
  const std::string prefix = bn.gamma->name.substr(0, bn.gamma->name.size() - 6);
  out.emplace_back(prefix + ".running_mean", bn.running_mean.get());
  out.emplace_back(prefix + ".running_var", bn.running_var.get());
}

template <typename T>
void add_named_ib(std::vector<std::pair<std::string, BasicTensor<T>*>>& out,
                  const IbBank<T>& bank) {
  add_named_param(out, bank.expand);
  add_named_bn(out, bank.bn1);
  add_named_param(out, bank.dw);
  add_named_bn(out, bank.bn2);
  add_named_param(out, bank.se_reduce);
  add_named_param(out, bank.se_expand);
  add_named_param(out, bank.project);
  add_named_bn(out, bank.bn3);
}

template <typename T>
void save_named(const std::string& path,
                std::vector<std::pair<std::string, BasicTensor<T>*>> named) {
  std::vector<NamedTensor> tensors;
  tensors.reserve(named.size());
  for (auto& [name, t] : named) tensors.push_back(to_named(name, t->template cast<float>()));
  save_checkpoint(path, tensors);
}

template <typename T>
void load_named(const std::string& path,
                std::vector<std::pair<std::string, BasicTensor<T>*>> named) {
  auto loaded = load_checkpoint(path);
  if (loaded.size() != named.size()) {
    throw std::runtime_error("load: checkpoint '" + path + "' has " +
                             std::to_string(loaded.size()) + " tensors, network expects " +
                             std::to_string(named.size()));
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    if (loaded[i].name != named[i].first) {
      throw std::runtime_error("load: tensor " + std::to_string(i) + " is '" + loaded[i].name +
                               "', expected '" + named[i].first + "'");
    }
    BasicTensor<float> v = from_named(loaded[i]);
    if (!(v.shape() == named[i].second->shape())) {
      throw std::runtime_error("load: shape mismatch for '" + loaded[i].name + "': " +
                               v.shape().str() + " vs " + named[i].second->shape().str());
    }
    *named[i].second = v.template cast<T>();
  }
}

}  // namespace detail

template <typename T>
class BasicSupernet {
 public:
  BasicSupernet(const SpaceSpec& spec, std::uint64_t seed,
                ElsInit els_init = ElsInit::IdentityNoise)
      : spec_(spec) {
    spec_.validate();
    Rng rng(seed);
    stem_conv_ = he_conv_param<T>("stem.conv", spec_.stem_channels, spec_.input_channels, 3, rng);
    stem_bn_ = BnState<T>("stem.bn", spec_.stem_channels);

    banks_.resize(spec_.layers.size());
    counters_.assign(spec_.layers.size(), {});
    for (std::size_t l = 0; l < spec_.layers.size(); ++l) {
      const auto& layer = spec_.layers[l];
      counters_[l].assign(layer.choices.size(), 0);
      for (std::size_t c = 0; c < layer.choices.size(); ++c) {
        const std::string prefix =
            "layer" + std::to_string(l) + ".choice" + std::to_string(c);
        ChoiceBank<T> bank;
        bank.choice = layer.choices[c];
        switch (bank.choice.kind) {
          case ChoiceKind::Skip:
            break;
          case ChoiceKind::Els:
            bank.els = make_els_param<T>(prefix + ".els", layer.in_channels, layer.out_channels,
                                         els_init, rng);
            break;
          case ChoiceKind::InvertedBottleneck:
            bank.ib = make_ib_bank<T>(prefix, layer.in_channels, layer.out_channels, bank.choice,
                                      rng);
            break;
        }
        banks_[l].push_back(std::move(bank));
      }
    }

    tail_conv_ = he_conv_param<T>("tail.conv", spec_.tail_channels,
                                  spec_.layers.back().out_channels, 1, rng);
    BasicTensor<T> fc(spec_.classes, spec_.tail_channels, 1, 1);
    fc.fill_normal(rng, T(0), std::sqrt(T(1) / spec_.tail_channels));
    fc_ = make_param<T>("head.fc", std::move(fc));
  }

  const SpaceSpec& spec() const { return spec_; }
  const ChoiceBank<T>& bank(int layer, int choice) const { return banks_[layer][choice]; }
  const ParamPtr<T>& stem_conv() const { return stem_conv_; }
  const BnState<T>& stem_bn() const { return stem_bn_; }
  const ParamPtr<T>& tail_conv() const { return tail_conv_; }
  const ParamPtr<T>& fc() const { return fc_; }

  const std::vector<std::vector<std::int64_t>>& update_counts() const { return counters_; }
  void count_update(const Architecture& arch) {
    for (std::size_t l = 0; l < arch.genes.size(); ++l) ++counters_[l][arch.genes[l]];
  }

  void append_stem(Network<T>& net) const {
    net.add(std::make_unique<ConvNode<T>>(stem_conv_, 2, 1, 1));
    net.add(std::make_unique<BnNode<T>>(stem_bn_, T(kBnMomentum), T(kBnEps)));
    net.add(std::make_unique<ActNode<T>>(ActKind::Relu6));
  }

  void append_choice(Network<T>& net, int layer, int choice) const {
    const auto& bank = banks_[layer][choice];
    const auto& l = spec_.layers[layer];
    switch (bank.choice.kind) {
      case ChoiceKind::Skip:
        net.add(std::make_unique<IdentityNode<T>>());
        break;
      case ChoiceKind::Els:
        net.add(std::make_unique<ConvNode<T>>(bank.els, 1, 0, 1));
        if (bank.choice.relu) net.add(std::make_unique<ActNode<T>>(ActKind::Relu));
        break;
      case ChoiceKind::InvertedBottleneck:
        append_ib_nodes(net, bank.ib, bank.choice, l.stride);
        break;
    }
  }

  void append_tail(Network<T>& net) const {
    net.add(std::make_unique<ConvNode<T>>(tail_conv_, 1, 0, 1));
    net.add(std::make_unique<GapNode<T>>());
    net.add(std::make_unique<LinearNode<T>>(fc_));
  }

  Network<T> path_network(const Architecture& arch) const {
    validate_arch(spec_, arch);
    Network<T> net;
    append_stem(net);
    for (std::size_t l = 0; l < arch.genes.size(); ++l) {
      append_choice(net, static_cast<int>(l), arch.genes[l]);
    }
    append_tail(net);
    return net;
  }

  // Stem plus layers [0, layer) along `prefix`; feeds layer_similarity probes.
  Network<T> prefix_network(int layer, const Architecture& prefix) const {
    Network<T> net;
    append_stem(net);
    for (int l = 0; l < layer; ++l) append_choice(net, l, prefix.genes[l]);
    return net;
  }

  BasicTensor<T> forward_path(const Architecture& arch, const BasicTensor<T>& batch,
                              Mode mode) const {
    Network<T> net = path_network(arch);
    return net.forward(batch, mode);
  }

  // Every tensor in construction order: parameters, then running stats per BN.
  std::vector<std::pair<std::string, BasicTensor<T>*>> named_tensors() {
    std::vector<std::pair<std::string, BasicTensor<T>*>> out;
    detail::add_named_param(out, stem_conv_);
    detail::add_named_bn(out, stem_bn_);
    for (auto& layer : banks_) {
      for (auto& bank : layer) {
        switch (bank.choice.kind) {
          case ChoiceKind::Skip:
            break;
          case ChoiceKind::Els:
            detail::add_named_param(out, bank.els);
            break;
          case ChoiceKind::InvertedBottleneck:
            detail::add_named_ib(out, bank.ib);
            break;
        }
      }
    }
    detail::add_named_param(out, tail_conv_);
    detail::add_named_param(out, fc_);
    return out;
  }

  void save(const std::string& path) { detail::save_named<T>(path, named_tensors()); }
  void load(const std::string& path) { detail::load_named<T>(path, named_tensors()); }

 private:
  SpaceSpec spec_;
  ParamPtr<T> stem_conv_;
  BnState<T> stem_bn_;
  std::vector<std::vector<ChoiceBank<T>>> banks_;
  ParamPtr<T> tail_conv_;
  ParamPtr<T> fc_;
  std::vector<std::vector<std::int64_t>> counters_;
};

using Supernet = BasicSupernet<float>;

// A single architecture's standalone network. Skip and stabilizer genes
// contribute no blocks (the stripped, from-scratch family); inverted
// bottlenecks keep their layer's stride and width.
template <typename T>
struct StandaloneBlock {
  ChoiceSpec choice;
  int in_channels = 0;
  int out_channels = 0;
  int stride = 1;
  IbBank<T> bank;
};

template <typename T>
class BasicStandalone {
 public:
  SpaceSpec source_space;
  Architecture arch;
  ParamPtr<T> stem_conv;
  BnState<T> stem_bn;
  std::vector<StandaloneBlock<T>> blocks;
  ParamPtr<T> tail_conv;
  ParamPtr<T> fc;

  // Transient node chain over the shared parameters; hold it across a
  // forward/backward pair.
  Network<T> network() const {
    Network<T> net;
    net.add(std::make_unique<ConvNode<T>>(stem_conv, 2, 1, 1));
    net.add(std::make_unique<BnNode<T>>(stem_bn, T(kBnMomentum), T(kBnEps)));
    net.add(std::make_unique<ActNode<T>>(ActKind::Relu6));
    for (const auto& b : blocks) {
      append_ib_nodes(net, b.bank, b.choice, b.stride);
    }
    net.add(std::make_unique<ConvNode<T>>(tail_conv, 1, 0, 1));
    net.add(std::make_unique<GapNode<T>>());
    net.add(std::make_unique<LinearNode<T>>(fc));
    return net;
  }

  std::vector<std::pair<std::string, BasicTensor<T>*>> named_tensors() {
    std::vector<std::pair<std::string, BasicTensor<T>*>> out;
    detail::add_named_param(out, stem_conv);
    detail::add_named_bn(out, stem_bn);
    for (auto& b : blocks) detail::add_named_ib(out, b.bank);
    detail::add_named_param(out, tail_conv);
    detail::add_named_param(out, fc);
    return out;
  }

  void save(const std::string& path) { detail::save_named<T>(path, named_tensors()); }
  void load(const std::string& path) { detail::load_named<T>(path, named_tensors()); }
};

using StandaloneNet = BasicStandalone<float>;

template <typename T>
BasicStandalone<T> build_standalone(const SpaceSpec& spec, const Architecture& arch,
                                    std::uint64_t seed) {
  validate_arch(spec, arch);
  BasicStandalone<T> sa;
  sa.source_space = spec;
  sa.arch = arch;
  Rng rng(seed);
  sa.stem_conv = he_conv_param<T>("stem.conv", spec.stem_channels, spec.input_channels, 3, rng);
  sa.stem_bn = BnState<T>("stem.bn", spec.stem_channels);
  int block_idx = 0;
  for (std::size_t l = 0; l < arch.genes.size(); ++l) {
    const auto& layer = spec.layers[l];
    const ChoiceSpec& c = layer.choices[arch.genes[l]];
    if (c.kind != ChoiceKind::InvertedBottleneck) continue;
    StandaloneBlock<T> b;
    b.choice = c;
    b.in_channels = layer.in_channels;
    b.out_channels = layer.out_channels;
    b.stride = layer.stride;
    b.bank = make_ib_bank<T>("block" + std::to_string(block_idx++), layer.in_channels,
                             layer.out_channels, c, rng);
    sa.blocks.push_back(std::move(b));
  }
  sa.tail_conv = he_conv_param<T>("tail.conv", spec.tail_channels,
                                  spec.layers.back().out_channels, 1, rng);
  BasicTensor<T> fc(spec.classes, spec.tail_channels, 1, 1);
  fc.fill_normal(rng, T(0), std::sqrt(T(1) / spec.tail_channels));
  sa.fc = make_param<T>("head.fc", std::move(fc));
  return sa;
}

}  // namespace scnt
