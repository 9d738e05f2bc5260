#pragma once

// Stabilizer fold-out. A learnable stabilizer is a bias-free 1x1 conv, so it
// composes into whatever conv consumes its output: for following weights
// w2 (c,p,k,k) and stabilizer w1 (p,u,1,1),
//   w3[c][u][qy][qx] = sum_p w2[c][p][qy][qx] * w1[p][u][0][0]
// computes the same function. strip_stabilizers walks a chosen path and folds
// every stabilizer forward, yielding a standalone network with no trace of
// them; verify_equivalence probes both networks and reports the drift.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "scnt/supernet.hpp"

namespace scnt {

template <typename T>
BasicTensor<T> fold_pointwise(const BasicTensor<T>& following, const BasicTensor<T>& pointwise) {
  if (pointwise.h() != 1 || pointwise.w() != 1) {
    throw std::invalid_argument("fold: stabilizer kernel must be 1x1, got " +
                                pointwise.shape().str());
  }
  if (following.c() != pointwise.n()) {
    throw std::invalid_argument("fold: channel mismatch, following conv takes " +
                                std::to_string(following.c()) + " channels but stabilizer puts " +
                                std::to_string(pointwise.n()));
  }
  const int oc = following.n(), p = following.c(), k = following.h();
  const int u = pointwise.c();
  BasicTensor<T> out(oc, u, k, following.w());
  for (int c = 0; c < oc; ++c) {
    for (int uu = 0; uu < u; ++uu) {
      for (int qy = 0; qy < k; ++qy) {
        for (int qx = 0; qx < following.w(); ++qx) {
          double acc = 0;
          for (int pp = 0; pp < p; ++pp) {
            acc += static_cast<double>(following.at(c, pp, qy, qx)) *
                   static_cast<double>(pointwise.at(pp, uu, 0, 0));
          }
          out.at(c, uu, qy, qx) = static_cast<T>(acc);
        }
      }
    }
  }
  return out;
}

namespace detail {

template <typename T>
ParamPtr<T> clone_param(const std::string& name, const ParamPtr<T>& src) {
  return make_param<T>(name, BasicTensor<T>(src->value));
}

template <typename T>
BnState<T> clone_bn(const std::string& prefix, const BnState<T>& src) {
  BnState<T> out(prefix, src.gamma->value.c());
  out.gamma->value = src.gamma->value;
  out.beta->value = src.beta->value;
  *out.running_mean = *src.running_mean;
  *out.running_var = *src.running_var;
  return out;
}

template <typename T>
IbBank<T> clone_bank(const std::string& prefix, const IbBank<T>& src) {
  IbBank<T> out;
  out.expand = clone_param(prefix + ".expand", src.expand);
  out.bn1 = clone_bn(prefix + ".bn1", src.bn1);
  out.dw = clone_param(prefix + ".dw", src.dw);
  out.bn2 = clone_bn(prefix + ".bn2", src.bn2);
  if (src.se_reduce) {
    out.se_reduce = clone_param(prefix + ".se_reduce", src.se_reduce);
    out.se_expand = clone_param(prefix + ".se_expand", src.se_expand);
  }
  out.project = clone_param(prefix + ".project", src.project);
  out.bn3 = clone_bn(prefix + ".bn3", src.bn3);
  return out;
}

}  // namespace detail

// Fold every stabilizer on `arch`'s path into the next conv (the following
// block's expand, or the tail conv when nothing else follows) and return the
// resulting standalone network. Skip genes are transparent; a stabilizer's
// relu variant is folded the same way, which is exactly what
// verify_equivalence is meant to catch.
template <typename T>
BasicStandalone<T> strip_stabilizers(const BasicSupernet<T>& net, const Architecture& arch) {
  const SpaceSpec& spec = net.spec();
  validate_arch(spec, arch);

  BasicStandalone<T> sa;
  sa.source_space = spec;
  sa.arch = arch;
  sa.stem_conv = detail::clone_param("stem.conv", net.stem_conv());
  sa.stem_bn = detail::clone_bn("stem.bn", net.stem_bn());

  BasicTensor<T> pending;  // accumulated stabilizer product, empty when degenerate
  bool have_pending = false;
  int block_idx = 0;
  for (std::size_t l = 0; l < arch.genes.size(); ++l) {
    const auto& layer = spec.layers[l];
    const ChoiceBank<T>& bank = net.bank(static_cast<int>(l), arch.genes[l]);
    switch (bank.choice.kind) {
      case ChoiceKind::Skip:
        break;
      case ChoiceKind::Els:
        pending = have_pending ? fold_pointwise(bank.els->value, pending)
                               : BasicTensor<T>(bank.els->value);
        have_pending = true;
        break;
      case ChoiceKind::InvertedBottleneck: {
        const std::string prefix = "block" + std::to_string(block_idx++);
        StandaloneBlock<T> b;
        b.choice = bank.choice;
        b.out_channels = layer.out_channels;
        b.stride = layer.stride;
        b.bank = detail::clone_bank(prefix, bank.ib);
        if (have_pending) {
          b.bank.expand->value = fold_pointwise(bank.ib.expand->value, pending);
          have_pending = false;
        }
        b.in_channels = b.bank.expand->value.c();
        sa.blocks.push_back(std::move(b));
        break;
      }
    }
  }

  sa.tail_conv = detail::clone_param("tail.conv", net.tail_conv());
  if (have_pending) {
    sa.tail_conv->value = fold_pointwise(net.tail_conv()->value, pending);
  }
  sa.fc = detail::clone_param("head.fc", net.fc());
  return sa;
}

struct FoldProbe {
  double max_abs = 0;
  bool ok = false;
};

struct FoldReport {
  int probes = 0;
  int passed = 0;
  double tolerance = 0;
  double max_abs_diff = 0;
  std::vector<FoldProbe> per_probe;

  bool all_passed() const { return probes > 0 && passed == probes; }
};

// Drive both networks with the same random batches (eval mode, shared running
// stats) and compare logits elementwise. A probe passes when its worst logit
// drift stays under `tolerance`.
template <typename T>
FoldReport verify_equivalence(const BasicSupernet<T>& net, const Architecture& arch,
                              const BasicStandalone<T>& stripped, int probes, double tolerance,
                              std::uint64_t seed, int batch = 2) {
  const SpaceSpec& spec = net.spec();
  FoldReport report;
  report.probes = probes;
  report.tolerance = tolerance;
  Rng rng(seed);
  for (int i = 0; i < probes; ++i) {
    BasicTensor<T> x(batch, spec.input_channels, spec.input_size, spec.input_size);
    x.fill_uniform(rng, T(0), T(1));
    const BasicTensor<T> a = net.forward_path(arch, x, Mode::Eval);
    Network<T> sn = stripped.network();
    const BasicTensor<T> b = sn.forward(x, Mode::Eval);
    FoldProbe probe;
    for (std::size_t j = 0; j < a.shape().numel(); ++j) {
      const double d = std::abs(static_cast<double>(a.raw()[j]) - b.raw()[j]);
      if (d > probe.max_abs) probe.max_abs = d;
    }
    probe.ok = probe.max_abs < tolerance;
    if (probe.ok) ++report.passed;
    if (probe.max_abs > report.max_abs_diff) report.max_abs_diff = probe.max_abs;
    report.per_probe.push_back(probe);
  }
  return report;
}

}  // namespace scnt
