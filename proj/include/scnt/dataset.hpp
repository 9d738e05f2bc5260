#pragma once

// Synthetic image classes built from four spatial pattern families: oriented
// stripes, checkerboards, radial blobs, and corner gradients. Every image is
// the same mosaic: a 3x3 grid of square wave-texture tiles separated by 1px
// noise gutters (borders included). Each tile carries one of two orthogonal
// orientations (random global base angle, independent phase per tile), always
// five tiles of one orientation and four of the other. The label only decides
// WHICH tiles get which orientation: striped rows/columns with one flipped
// tile, a checkerboard, a center plus against the corners (radial blob), or a
// 2x2 corner block (corner gradient). The multiset of tiles is identical
// across classes up to one deliberate, weak cue: tiles get a small
// family-dependent gain against the gutters, which survives per-image
// standardization as a texture-to-noise ratio. Pooled rectified filter
// responses (a stem plus global pooling) can read only that ratio and land
// modestly above chance; telling the classes apart properly requires
// comparing texture on both sides of a gutter, which takes stacked
// convolutions.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "scnt/checkpoint.hpp"
#include "scnt/rng.hpp"
#include "scnt/tensor.hpp"

namespace scnt {

enum class SplitTag { None, Train, Val, Test };

inline const char* split_tag_name(SplitTag t) {
  switch (t) {
    case SplitTag::None:
      return "none";
    case SplitTag::Train:
      return "train";
    case SplitTag::Val:
      return "val";
    case SplitTag::Test:
      return "test";
  }
  return "?";
}

struct Dataset {
  Tensor images;  // (n, c, h, w) in [0,1]
  std::vector<int> labels;
  int classes = 0;
  SplitTag tag = SplitTag::None;

  int size() const { return static_cast<int>(labels.size()); }
};

// Trainer and search entry points call this; the test split must never leak
// into anything that updates weights or steers the search.
inline void require_trainable(const Dataset& ds, const char* who) {
  if (ds.tag == SplitTag::Test) {
    throw std::invalid_argument(std::string(who) + ": refusing to consume the test split");
  }
}

struct SynthConfig {
  int n = 5632;
  int classes = 4;
  int channels = 3;
  int size = 16;
  std::uint64_t seed = 0;
  float noise_sigma = 0.1f;
  float amp_lo = 0.25f;  // per-sample contrast jitter; swamps amplitude cues
  float amp_hi = 0.38f;
};

namespace detail {

constexpr double kTau = 6.283185307179586;

// tile gain spread across the four families; the whole pooled-readout signal
constexpr double kFamilyGain = 0.06;

inline void standardize(std::vector<double>& p) {
  double mean = 0;
  for (double v : p) mean += v;
  mean /= p.size();
  double var = 0;
  for (double v : p) var += (v - mean) * (v - mean);
  const double inv = 1.0 / std::sqrt(var / p.size() + 1e-12);
  for (double& v : p) v = (v - mean) * inv;
}

// One pattern stack: the tile mosaic described at the top of the file. The
// layout matrix marks which tiles are rotated 90 degrees; every family uses a
// 5/4 split (up to a global swap), so classes share the tile multiset exactly.
inline void paint_pattern(std::vector<double>& p, int channels, int size, int family, int variant,
                          Rng& r) {
  const int hw = size * size;
  const double freq = 3.0 + 1.2 * r.next_double() + 0.5 * variant;
  const double theta0 = r.next_double() * kTau;
  const double gain = 1.0 + kFamilyGain * (family - 1.5) / 1.5;

  int m[3][3] = {};
  switch (family) {
    case 0: {  // striped rows or columns, one majority tile flipped
      const bool cols = r.next_below(2) != 0;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m[i][j] = ((cols ? j : i) == 1) ? 1 : 0;
      int d = static_cast<int>(r.next_below(6));
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
          if (m[i][j] == 0 && d-- == 0) m[i][j] = 1;
      break;
    }
    case 1:  // checkerboard
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m[i][j] = (i + j) & 1;
      break;
    case 2:  // radial: four corners against the center plus
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m[i][j] = (i != 1 && j != 1) ? 1 : 0;
      break;
    default: {  // 2x2 block in a random corner
      const int c = static_cast<int>(r.next_below(4));
      const int i0 = (c & 1) ? 1 : 0, j0 = (c & 2) ? 1 : 0;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m[i][j] = (i >= i0 && i <= i0 + 1 && j >= j0 && j <= j0 + 1);
      break;
    }
  }
  if (r.next_below(2)) {
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m[i][j] ^= 1;
  }

  double tile_phase[3][3];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) tile_phase[i][j] = r.next_double() * kTau;

  // gutters at both borders and the rounded thirds; exact 4px tiles at size 16
  const int g1 = (size - 1) / 3, g2 = 2 * (size - 1) / 3, g3 = size - 1;
  const auto gutter = [&](int i) { return i == 0 || i == g1 || i == g2 || i == g3; };
  const auto tile_of = [&](int i) { return i < g1 ? 0 : i < g2 ? 1 : 2; };
  const auto uv = [&](int i) { return (i + 0.5) / size - 0.5; };

  for (int ch = 0; ch < channels; ++ch) {
    const double chphase = ch * 0.3 * r.next_double();
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        double val;
        if (gutter(x) || gutter(y)) {
          val = r.next_normal() * 0.7071;  // rms-matched to the wave tiles
        } else {
          const int ti = tile_of(y), tj = tile_of(x);
          const double th = theta0 + (m[ti][tj] ? kTau / 4 : 0.0);
          const double t = uv(x) * std::cos(th) + uv(y) * std::sin(th);
          val = gain * std::sin(kTau * freq * t + tile_phase[ti][tj] + chphase);
        }
        p[ch * hw + y * size + x] = val;
      }
    }
  }
  standardize(p);
}

}  // namespace detail

inline Dataset generate_synthetic(const SynthConfig& cfg) {
  if (cfg.classes < 2) throw std::invalid_argument("dataset: classes must be >= 2");
  if (cfg.n <= 0 || cfg.n % cfg.classes != 0) {
    throw std::invalid_argument("dataset: n=" + std::to_string(cfg.n) +
                                " must be a positive multiple of classes=" +
                                std::to_string(cfg.classes));
  }
  if (cfg.channels < 1 || cfg.size < 8) {
    throw std::invalid_argument("dataset: need channels >= 1 and size >= 8");
  }
  Dataset ds;
  ds.classes = cfg.classes;
  ds.images = Tensor(cfg.n, cfg.channels, cfg.size, cfg.size);
  ds.labels.resize(cfg.n);

  Rng master(cfg.seed);
  const int pix = cfg.channels * cfg.size * cfg.size;
  std::vector<double> signal(pix);
  for (int s = 0; s < cfg.n; ++s) {
    const int label = s % cfg.classes;
    ds.labels[s] = label;
    Rng r = master.fork(static_cast<std::uint64_t>(s));
    detail::paint_pattern(signal, cfg.channels, cfg.size, label % 4, label / 4, r);
    const double amp = cfg.amp_lo + (cfg.amp_hi - cfg.amp_lo) * r.next_double();
    float* out = ds.images.raw().data() + static_cast<std::size_t>(s) * pix;
    for (int i = 0; i < pix; ++i) {
      double v = 0.5 + amp * signal[i] + cfg.noise_sigma * r.next_normal();
      out[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return ds;
}

inline Dataset select(const Dataset& ds, const std::vector<int>& idx) {
  Dataset out;
  out.classes = ds.classes;
  out.tag = ds.tag;
  out.images = Tensor(static_cast<int>(idx.size()), ds.images.c(), ds.images.h(), ds.images.w());
  out.labels.reserve(idx.size());
  const std::size_t pix = ds.images.shape().numel() / ds.images.n();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const int src = idx[i];
    std::copy_n(ds.images.raw().data() + src * pix, pix, out.images.raw().data() + i * pix);
    out.labels.push_back(ds.labels[src]);
  }
  return out;
}

struct SplitDataset {
  Dataset train, val, test;
};

// Stratified split. The test portion is the per-class tail in generation
// order, independent of the shuffle seed; validation is carved out of the
// shuffled remainder.
inline SplitDataset split(const Dataset& ds, double val_fraction, std::uint64_t seed,
                          double test_fraction = 2.0 / 11.0) {
  if (val_fraction < 0 || val_fraction >= 1 || test_fraction < 0 || test_fraction >= 1) {
    throw std::invalid_argument("split: fractions must lie in [0,1)");
  }
  std::vector<std::vector<int>> per_class(ds.classes);
  for (int i = 0; i < ds.size(); ++i) {
    if (ds.labels[i] < 0 || ds.labels[i] >= ds.classes) {
      throw std::invalid_argument("split: label " + std::to_string(ds.labels[i]) +
                                  " outside [0," + std::to_string(ds.classes) + ")");
    }
    per_class[ds.labels[i]].push_back(i);
  }
  Rng rng(seed);
  std::vector<int> train_idx, val_idx, test_idx;
  for (int c = 0; c < ds.classes; ++c) {
    auto& idx = per_class[c];
    const int total = static_cast<int>(idx.size());
    const int n_test = static_cast<int>(total * test_fraction);
    const int remain = total - n_test;
    const int n_val = static_cast<int>(remain * val_fraction);
    if (remain - n_val < 1 || (val_fraction > 0 && n_val < 1)) {
      throw std::invalid_argument("split: class " + std::to_string(c) + " with " +
                                  std::to_string(total) + " samples cannot honor the fractions");
    }
    test_idx.insert(test_idx.end(), idx.begin() + remain, idx.end());
    idx.resize(remain);
    Rng r = rng.fork(static_cast<std::uint64_t>(c));
    for (int i = remain - 1; i > 0; --i) {
      const int j = static_cast<int>(r.next_below(static_cast<std::uint64_t>(i) + 1));
      std::swap(idx[i], idx[j]);
    }
    val_idx.insert(val_idx.end(), idx.begin(), idx.begin() + n_val);
    train_idx.insert(train_idx.end(), idx.begin() + n_val, idx.end());
  }
  std::sort(test_idx.begin(), test_idx.end());
  SplitDataset out;
  out.train = select(ds, train_idx);
  out.train.tag = SplitTag::Train;
  out.val = select(ds, val_idx);
  out.val.tag = SplitTag::Val;
  out.test = select(ds, test_idx);
  out.test.tag = SplitTag::Test;
  return out;
}

// ---- persistence ----

inline void save_dataset(const std::string& path, const Dataset& ds) {
  std::vector<NamedTensor> tensors;
  tensors.push_back(to_named("images", ds.images));
  NamedTensor labels;
  labels.name = "labels";
  labels.dims = {static_cast<std::uint32_t>(ds.labels.size())};
  for (int l : ds.labels) labels.data.push_back(static_cast<float>(l));
  tensors.push_back(std::move(labels));
  save_checkpoint(path, tensors);
}

inline Dataset load_dataset_container(const std::string& path) {
  const auto tensors = load_checkpoint(path);
  Dataset ds;
  bool have_images = false, have_labels = false;
  for (const auto& t : tensors) {
    if (t.name == "images") {
      ds.images = from_named(t);
      have_images = true;
    } else if (t.name == "labels") {
      for (float v : t.data) ds.labels.push_back(static_cast<int>(v));
      have_labels = true;
    }
  }
  if (!have_images || !have_labels) {
    throw std::runtime_error("dataset '" + path + "': needs tensors named 'images' and 'labels'");
  }
  if (static_cast<int>(ds.labels.size()) != ds.images.n()) {
    throw std::runtime_error("dataset '" + path + "': " + std::to_string(ds.images.n()) +
                             " images but " + std::to_string(ds.labels.size()) + " labels");
  }
  int maxl = -1;
  for (int l : ds.labels) {
    if (l < 0) throw std::runtime_error("dataset '" + path + "': negative label");
    maxl = std::max(maxl, l);
  }
  ds.classes = maxl + 1;
  float lo = 1.0f, hi = 0.0f;
  for (float v : ds.images.raw()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (lo < 0.0f || hi > 1.0f) {
    // external data may live on another scale; bring it back to [0,1]
    const float range = hi - lo > 1e-12f ? hi - lo : 1.0f;
    for (float& v : ds.images.raw()) v = (v - lo) / range;
  }
  return ds;
}

// rows: label,v0,v1,...  (row-major c,h,w); geometry is supplied by the caller
inline void save_csv(const std::string& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("dataset: cannot write '" + path + "'");
  const std::size_t pix = ds.images.shape().numel() / std::max(1, ds.images.n());
  char buf[32];
  for (int i = 0; i < ds.size(); ++i) {
    out << ds.labels[i];
    const float* row = ds.images.raw().data() + i * pix;
    for (std::size_t j = 0; j < pix; ++j) {
      std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(row[j]));
      out << ',' << buf;
    }
    out << '\n';
  }
}

// `classes` > 0 bounds the labels; 0 infers the count from the data
inline Dataset load_csv(const std::string& path, int channels, int size, int classes = 0) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("dataset: cannot open '" + path + "'");
  const int pix = channels * size * size;
  std::vector<float> values;
  std::vector<int> labels;
  std::string line;
  int lineno = 0;
  float lo = 1.0f, hi = 0.0f;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const char* ptr = line.data();
    const char* end = ptr + line.size();
    int label = 0;
    auto lr = std::from_chars(ptr, end, label);
    if (lr.ec != std::errc() || label < 0) {
      throw std::runtime_error("dataset '" + path + "' line " + std::to_string(lineno) +
                               ": bad label");
    }
    if (classes > 0 && label >= classes) {
      throw std::runtime_error("dataset '" + path + "' line " + std::to_string(lineno) +
                               ": label " + std::to_string(label) + " >= classes " +
                               std::to_string(classes));
    }
    ptr = lr.ptr;
    int fields = 0;
    while (ptr < end) {
      if (*ptr != ',') {
        throw std::runtime_error("dataset '" + path + "' line " + std::to_string(lineno) +
                                 ": expected ',' at column " +
                                 std::to_string(ptr - line.data() + 1));
      }
      ++ptr;
      float v = 0;
      auto fr = std::from_chars(ptr, end, v);
      if (fr.ec != std::errc()) {
        throw std::runtime_error("dataset '" + path + "' line " + std::to_string(lineno) +
                                 ": bad value at column " + std::to_string(ptr - line.data() + 1));
      }
      values.push_back(v);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      ptr = fr.ptr;
      ++fields;
    }
    if (fields != pix) {
      throw std::runtime_error("dataset '" + path + "' line " + std::to_string(lineno) +
                               ": expected " + std::to_string(pix) + " values, got " +
                               std::to_string(fields));
    }
    labels.push_back(label);
  }
  if (labels.empty()) throw std::runtime_error("dataset '" + path + "': no samples");
  if (lo < 0.0f || hi > 1.0f) {
    const float range = hi - lo > 1e-12f ? hi - lo : 1.0f;
    for (float& v : values) v = (v - lo) / range;
  }
  Dataset ds;
  ds.labels = std::move(labels);
  ds.images = Tensor(static_cast<int>(ds.labels.size()), channels, size, size);
  std::copy(values.begin(), values.end(), ds.images.raw().begin());
  int maxl = 0;
  for (int l : ds.labels) maxl = std::max(maxl, l);
  ds.classes = classes > 0 ? classes : maxl + 1;
  return ds;
}

// container files start with the checkpoint magic; anything else is CSV
inline Dataset load_external(const std::string& path, int channels, int size, int classes = 0) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw std::runtime_error("dataset: cannot open '" + path + "'");
  char magic[4] = {};
  probe.read(magic, 4);
  probe.close();
  if (std::string(magic, 4) == "SCNT") return load_dataset_container(path);
  return load_csv(path, channels, size, classes);
}

}  // namespace scnt
