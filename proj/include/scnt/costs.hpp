#pragma once

// Pure cost model: multiply-adds and parameter counts as functions of
// (space, architecture). Counting convention: one madd per multiply in a
// convolution or linear layer (output positions x out_c x in_c/groups x k^2);
// pooling, BN, activations, and the SE channel-scale multiply are not counted.
// Parameter counts include BN affine pairs; running stats are not parameters.

#include <cstdint>

#include "scnt/space.hpp"

namespace scnt {

inline int conv_out_size(int in, int kernel, int stride, int padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

// Spatial side length entering layer `l` (stem is a 3x3 stride-2 conv, pad 1).
inline int spatial_at_layer(const SpaceSpec& spec, int layer) {
  int s = conv_out_size(spec.input_size, 3, 2, 1);
  for (int i = 0; i < layer; ++i) {
    s = conv_out_size(s, 3, spec.layers[i].stride, 1);
  }
  return s;
}

inline int se_mid_channels(int channels) { return channels / 4 > 0 ? channels / 4 : 1; }

inline std::int64_t choice_madds(const LayerSpec& l, const ChoiceSpec& c, int in_spatial) {
  const auto sq = [](std::int64_t v) { return v * v; };
  const std::int64_t hw_in = sq(in_spatial);
  // any odd kernel at pad k/2 gives the same output size, so k=3 stands in
  const int out_spatial = conv_out_size(in_spatial, 3, l.stride, 1);
  const std::int64_t hw_out = sq(out_spatial);
  switch (c.kind) {
    case ChoiceKind::Skip:
      return 0;
    case ChoiceKind::Els:
      return hw_in * l.out_channels * l.in_channels;
    case ChoiceKind::InvertedBottleneck: {
      const std::int64_t mid = static_cast<std::int64_t>(c.expansion) * l.in_channels;
      std::int64_t total = hw_in * mid * l.in_channels;          // pointwise expand
      total += hw_out * mid * c.kernel * c.kernel;               // depthwise (in_c/groups = 1)
      if (c.se) {
        const std::int64_t semid = se_mid_channels(static_cast<int>(mid));
        total += mid * semid + semid * mid;                      // two 1x1 convs at 1x1
      }
      total += hw_out * l.out_channels * mid;                    // pointwise project
      return total;
    }
  }
  return 0;
}

inline std::int64_t choice_params(const LayerSpec& l, const ChoiceSpec& c) {
  switch (c.kind) {
    case ChoiceKind::Skip:
      return 0;
    case ChoiceKind::Els:
      return static_cast<std::int64_t>(l.out_channels) * l.in_channels;
    case ChoiceKind::InvertedBottleneck: {
      const std::int64_t mid = static_cast<std::int64_t>(c.expansion) * l.in_channels;
      std::int64_t total = mid * l.in_channels;                 // expand
      total += mid * c.kernel * c.kernel;                       // depthwise
      total += static_cast<std::int64_t>(l.out_channels) * mid; // project
      total += 2 * (mid + mid + l.out_channels);                // three BN affine pairs
      if (c.se) {
        const std::int64_t semid = se_mid_channels(static_cast<int>(mid));
        total += mid * semid + semid * mid;
      }
      return total;
    }
  }
  return 0;
}

/// Stem: 3x3 stride-2 conv + BN. Tail: 1x1 conv, global pool, linear.
inline std::int64_t fixed_madds(const SpaceSpec& spec) {
  const auto sq = [](std::int64_t v) { return v * v; };
  const std::int64_t stem_hw = sq(conv_out_size(spec.input_size, 3, 2, 1));
  std::int64_t total = stem_hw * spec.stem_channels * spec.input_channels * 9;
  const int last = spec.layer_count();
  const std::int64_t tail_hw = sq(spatial_at_layer(spec, last));
  total += tail_hw * spec.tail_channels * spec.layers.back().out_channels;
  total += static_cast<std::int64_t>(spec.tail_channels) * spec.classes;
  return total;
}

inline std::int64_t fixed_params(const SpaceSpec& spec) {
  std::int64_t total = static_cast<std::int64_t>(spec.stem_channels) * spec.input_channels * 9;
  total += 2 * spec.stem_channels;  // stem BN affine
  total += static_cast<std::int64_t>(spec.tail_channels) * spec.layers.back().out_channels;
  total += static_cast<std::int64_t>(spec.tail_channels) * spec.classes;
  return total;
}

inline std::int64_t count_madds(const SpaceSpec& spec, const Architecture& arch) {
  validate_arch(spec, arch);
  std::int64_t total = fixed_madds(spec);
  for (int l = 0; l < spec.layer_count(); ++l) {
    total += choice_madds(spec.layers[l], spec.layers[l].choices[arch.genes[l]],
                          spatial_at_layer(spec, l));
  }
  return total;
}

inline std::int64_t count_params(const SpaceSpec& spec, const Architecture& arch) {
  validate_arch(spec, arch);
  std::int64_t total = fixed_params(spec);
  for (int l = 0; l < spec.layer_count(); ++l) {
    total += choice_params(spec.layers[l], spec.layers[l].choices[arch.genes[l]]);
  }
  return total;
}

// Per-layer argmax of block madds; the space's most expensive architecture.
inline Architecture max_madds_arch(const SpaceSpec& spec) {
  Architecture a;
  for (int l = 0; l < spec.layer_count(); ++l) {
    const int sp = spatial_at_layer(spec, l);
    int best = 0;
    std::int64_t best_madds = -1;
    for (std::size_t c = 0; c < spec.layers[l].choices.size(); ++c) {
      const std::int64_t m = choice_madds(spec.layers[l], spec.layers[l].choices[c], sp);
      if (m > best_madds) {
        best_madds = m;
        best = static_cast<int>(c);
      }
    }
    a.genes.push_back(best);
  }
  return a;
}

}  // namespace scnt
