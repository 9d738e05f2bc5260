#pragma once

// Forward and backward kernels for every primitive the supernet needs.
// All kernels are pure functions of their inputs, single-threaded, and use a
// fixed accumulation order (input-channel outer, kernel row, kernel column)
// so that results are bit-stable across runs.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "scnt/tensor.hpp"

namespace scnt {

enum class ActKind { Relu, Relu6, Sigmoid };

namespace detail {

inline int ceil_div(int a, int b) { return (a + b - 1) / b; }

inline void check(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace detail

inline Shape4 conv2d_output_shape(const Shape4& in, const Shape4& w, int stride, int padding,
                                  int groups) {
  using detail::check;
  check(w.h == w.w, "conv2d: kernel must be square, got " + std::to_string(w.h) + "x" +
                        std::to_string(w.w));
  check(stride >= 1, "conv2d: stride must be >= 1, got " + std::to_string(stride));
  check(padding >= 0, "conv2d: padding must be >= 0, got " + std::to_string(padding));
  check(groups >= 1, "conv2d: groups must be >= 1, got " + std::to_string(groups));
  check(w.n % groups == 0, "conv2d: out_channels " + std::to_string(w.n) +
                               " not divisible by groups " + std::to_string(groups));
  check(in.c == w.c * groups, "conv2d: input channel axis is " + std::to_string(in.c) +
                                  " but weight expects " + std::to_string(w.c * groups) +
                                  " (in_c/groups=" + std::to_string(w.c) +
                                  ", groups=" + std::to_string(groups) + ")");
  const int oh = (in.h + 2 * padding - w.h) / stride + 1;
  const int ow = (in.w + 2 * padding - w.w) / stride + 1;
  check(oh >= 1 && ow >= 1, "conv2d: spatial axes " + std::to_string(in.h) + "x" +
                                std::to_string(in.w) + " too small for kernel " +
                                std::to_string(w.h) + " at stride " + std::to_string(stride) +
                                ", padding " + std::to_string(padding));
  return {in.n, w.n, oh, ow};
}

// weight layout: (out_c, in_c/groups, k, k)
template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                              int stride, int padding, int groups) {
  const Shape4 os = conv2d_output_shape(input.shape(), weight.shape(), stride, padding, groups);
  BasicTensor<T> out(os);
  const int N = input.n(), H = input.h(), W = input.w();
  const int OC = os.c, OH = os.h, OW = os.w;
  const int CG = weight.c(), K = weight.h();
  const int oc_per_group = OC / groups;

  for (int n = 0; n < N; ++n) {
    for (int oc = 0; oc < OC; ++oc) {
      const int g = oc / oc_per_group;
      T* out_plane = out.data() + out.index(n, oc, 0, 0);
      for (int icl = 0; icl < CG; ++icl) {
        const int ic = g * CG + icl;
        const T* in_plane = input.data() + input.index(n, ic, 0, 0);
        for (int kh = 0; kh < K; ++kh) {
          for (int kw = 0; kw < K; ++kw) {
            const T wv = weight.at(oc, icl, kh, kw);
            const int ow_lo = std::max(0, detail::ceil_div(padding - kw, stride));
            const int ow_hi = std::min(OW, (W - 1 - kw + padding) / stride + 1);
            for (int oh = 0; oh < OH; ++oh) {
              const int ih = oh * stride - padding + kh;
              if (ih < 0 || ih >= H) continue;
              const T* in_row = in_plane + static_cast<std::size_t>(ih) * W;
              T* out_row = out_plane + static_cast<std::size_t>(oh) * OW;
              const int base = -padding + kw;
              for (int ow = ow_lo; ow < ow_hi; ++ow) {
                out_row[ow] += wv * in_row[ow * stride + base];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

// Accumulates into grad_input / grad_weight when non-null.
template <typename T>
void conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                     const BasicTensor<T>& grad_out, int stride, int padding, int groups,
                     BasicTensor<T>* grad_input, BasicTensor<T>* grad_weight) {
  const Shape4 os = conv2d_output_shape(input.shape(), weight.shape(), stride, padding, groups);
  detail::check(grad_out.shape() == os, "conv2d backward: upstream gradient shape " +
                                            grad_out.shape().str() + " does not match output " +
                                            os.str());
  const int N = input.n(), H = input.h(), W = input.w();
  const int OC = os.c, OH = os.h, OW = os.w;
  const int CG = weight.c(), K = weight.h();
  const int oc_per_group = OC / groups;

  if (grad_input != nullptr) {
    detail::check(grad_input->shape() == input.shape(), "conv2d backward: grad_input shape");
    for (int n = 0; n < N; ++n) {
      for (int oc = 0; oc < OC; ++oc) {
        const int g = oc / oc_per_group;
        const T* go_plane = grad_out.data() + grad_out.index(n, oc, 0, 0);
        for (int icl = 0; icl < CG; ++icl) {
          const int ic = g * CG + icl;
          T* gi_plane = grad_input->data() + grad_input->index(n, ic, 0, 0);
          for (int kh = 0; kh < K; ++kh) {
            for (int kw = 0; kw < K; ++kw) {
              const T wv = weight.at(oc, icl, kh, kw);
              const int ow_lo = std::max(0, detail::ceil_div(padding - kw, stride));
              const int ow_hi = std::min(OW, (W - 1 - kw + padding) / stride + 1);
              for (int oh = 0; oh < OH; ++oh) {
                const int ih = oh * stride - padding + kh;
                if (ih < 0 || ih >= H) continue;
                T* gi_row = gi_plane + static_cast<std::size_t>(ih) * W;
                const T* go_row = go_plane + static_cast<std::size_t>(oh) * OW;
                const int base = -padding + kw;
                for (int ow = ow_lo; ow < ow_hi; ++ow) {
                  gi_row[ow * stride + base] += wv * go_row[ow];
                }
              }
            }
          }
        }
      }
    }
  }

  if (grad_weight != nullptr) {
    detail::check(grad_weight->shape() == weight.shape(), "conv2d backward: grad_weight shape");
    for (int n = 0; n < N; ++n) {
      for (int oc = 0; oc < OC; ++oc) {
        const int g = oc / oc_per_group;
        const T* go_plane = grad_out.data() + grad_out.index(n, oc, 0, 0);
        for (int icl = 0; icl < CG; ++icl) {
          const int ic = g * CG + icl;
          const T* in_plane = input.data() + input.index(n, ic, 0, 0);
          for (int kh = 0; kh < K; ++kh) {
            for (int kw = 0; kw < K; ++kw) {
              const int ow_lo = std::max(0, detail::ceil_div(padding - kw, stride));
              const int ow_hi = std::min(OW, (W - 1 - kw + padding) / stride + 1);
              T acc = T(0);
              for (int oh = 0; oh < OH; ++oh) {
                const int ih = oh * stride - padding + kh;
                if (ih < 0 || ih >= H) continue;
                const T* in_row = in_plane + static_cast<std::size_t>(ih) * W;
                const T* go_row = go_plane + static_cast<std::size_t>(oh) * OW;
                const int base = -padding + kw;
                for (int ow = ow_lo; ow < ow_hi; ++ow) {
                  acc += in_row[ow * stride + base] * go_row[ow];
                }
              }
              grad_weight->at(oc, icl, kh, kw) += acc;
            }
          }
        }
      }
    }
  }
}

template <typename T>
struct BnCache {
  BasicTensor<T> xhat;
  std::vector<T> inv_std;  // per channel
};

// Per-channel statistics over (n, h, w). Running stats are EMA-updated with
// the given momentum; the biased variance is used both for normalization and
// for the running estimate.
template <typename T>
BasicTensor<T> batchnorm_forward_train(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                                       const BasicTensor<T>& beta, BasicTensor<T>& running_mean,
                                       BasicTensor<T>& running_var, T momentum, T eps,
                                       BnCache<T>* cache) {
  using detail::check;
  const int N = x.n(), C = x.c(), H = x.h(), W = x.w();
  check(N >= 2, "batchnorm: training statistics need batch size >= 2, got " + std::to_string(N));
  check(gamma.size() == static_cast<std::size_t>(C) && beta.size() == static_cast<std::size_t>(C),
        "batchnorm: gamma/beta length must equal channel count " + std::to_string(C));
  const T inv_m = T(1) / (static_cast<T>(N) * H * W);

  BasicTensor<T> out(x.shape());
  if (cache != nullptr) {
    cache->xhat = BasicTensor<T>(x.shape());
    cache->inv_std.assign(C, T(0));
  }
  for (int c = 0; c < C; ++c) {
    T sum = T(0), sq = T(0);
    for (int n = 0; n < N; ++n) {
      const T* p = x.data() + x.index(n, c, 0, 0);
      for (int i = 0; i < H * W; ++i) {
        sum += p[i];
        sq += p[i] * p[i];
      }
    }
    const T mean = sum * inv_m;
    T var = sq * inv_m - mean * mean;
    if (var < T(0)) var = T(0);
    const T inv_std = T(1) / std::sqrt(var + eps);
    running_mean.data()[c] = (T(1) - momentum) * running_mean.data()[c] + momentum * mean;
    running_var.data()[c] = (T(1) - momentum) * running_var.data()[c] + momentum * var;
    if (cache != nullptr) cache->inv_std[c] = inv_std;

    const T g = gamma.data()[c], b = beta.data()[c];
    for (int n = 0; n < N; ++n) {
      const T* p = x.data() + x.index(n, c, 0, 0);
      T* o = out.data() + out.index(n, c, 0, 0);
      T* xh = cache != nullptr ? cache->xhat.data() + cache->xhat.index(n, c, 0, 0) : nullptr;
      for (int i = 0; i < H * W; ++i) {
        const T hat = (p[i] - mean) * inv_std;
        if (xh != nullptr) xh[i] = hat;
        o[i] = g * hat + b;
      }
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> batchnorm_forward_eval(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                                      const BasicTensor<T>& beta,
                                      const BasicTensor<T>& running_mean,
                                      const BasicTensor<T>& running_var, T eps, BnCache<T>* cache) {
  const int N = x.n(), C = x.c(), H = x.h(), W = x.w();
  detail::check(gamma.size() == static_cast<std::size_t>(C) &&
                    beta.size() == static_cast<std::size_t>(C),
                "batchnorm: gamma/beta length must equal channel count " + std::to_string(C));
  BasicTensor<T> out(x.shape());
  if (cache != nullptr) {
    cache->xhat = BasicTensor<T>(x.shape());
    cache->inv_std.assign(C, T(0));
  }
  for (int c = 0; c < C; ++c) {
    const T mean = running_mean.data()[c];
    const T inv_std = T(1) / std::sqrt(running_var.data()[c] + eps);
    if (cache != nullptr) cache->inv_std[c] = inv_std;
    const T g = gamma.data()[c], b = beta.data()[c];
    for (int n = 0; n < N; ++n) {
      const T* p = x.data() + x.index(n, c, 0, 0);
      T* o = out.data() + out.index(n, c, 0, 0);
      T* xh = cache != nullptr ? cache->xhat.data() + cache->xhat.index(n, c, 0, 0) : nullptr;
      for (int i = 0; i < H * W; ++i) {
        const T hat = (p[i] - mean) * inv_std;
        if (xh != nullptr) xh[i] = hat;
        o[i] = g * hat + b;
      }
    }
  }
  return out;
}

// Train-mode backward; batch statistics are part of the differentiated graph.
template <typename T>
BasicTensor<T> batchnorm_backward_train(const BasicTensor<T>& grad_out, const BnCache<T>& cache,
                                        const BasicTensor<T>& gamma, BasicTensor<T>* grad_gamma,
                                        BasicTensor<T>* grad_beta) {
  const int N = grad_out.n(), C = grad_out.c(), H = grad_out.h(), W = grad_out.w();
  const T inv_m = T(1) / (static_cast<T>(N) * H * W);
  BasicTensor<T> gx(grad_out.shape());
  for (int c = 0; c < C; ++c) {
    T sum_g = T(0), sum_gx = T(0);
    for (int n = 0; n < N; ++n) {
      const T* g = grad_out.data() + grad_out.index(n, c, 0, 0);
      const T* xh = cache.xhat.data() + cache.xhat.index(n, c, 0, 0);
      for (int i = 0; i < H * W; ++i) {
        sum_g += g[i];
        sum_gx += g[i] * xh[i];
      }
    }
    if (grad_beta != nullptr) grad_beta->data()[c] += sum_g;
    if (grad_gamma != nullptr) grad_gamma->data()[c] += sum_gx;
    const T scale = gamma.data()[c] * cache.inv_std[c];
    for (int n = 0; n < N; ++n) {
      const T* g = grad_out.data() + grad_out.index(n, c, 0, 0);
      const T* xh = cache.xhat.data() + cache.xhat.index(n, c, 0, 0);
      T* o = gx.data() + gx.index(n, c, 0, 0);
      for (int i = 0; i < H * W; ++i) {
        o[i] = scale * (g[i] - sum_g * inv_m - xh[i] * sum_gx * inv_m);
      }
    }
  }
  return gx;
}

// Eval-mode backward; running statistics are constants.
template <typename T>
BasicTensor<T> batchnorm_backward_eval(const BasicTensor<T>& grad_out, const BnCache<T>& cache,
                                       const BasicTensor<T>& gamma, BasicTensor<T>* grad_gamma,
                                       BasicTensor<T>* grad_beta) {
  const int N = grad_out.n(), C = grad_out.c(), H = grad_out.h(), W = grad_out.w();
  BasicTensor<T> gx(grad_out.shape());
  for (int c = 0; c < C; ++c) {
    T sum_g = T(0), sum_gx = T(0);
    const T scale = gamma.data()[c] * cache.inv_std[c];
    for (int n = 0; n < N; ++n) {
      const T* g = grad_out.data() + grad_out.index(n, c, 0, 0);
      const T* xh = cache.xhat.data() + cache.xhat.index(n, c, 0, 0);
      T* o = gx.data() + gx.index(n, c, 0, 0);
      for (int i = 0; i < H * W; ++i) {
        sum_g += g[i];
        sum_gx += g[i] * xh[i];
        o[i] = scale * g[i];
      }
    }
    if (grad_beta != nullptr) grad_beta->data()[c] += sum_g;
    if (grad_gamma != nullptr) grad_gamma->data()[c] += sum_gx;
  }
  return gx;
}

template <typename T>
BasicTensor<T> activation_forward(const BasicTensor<T>& x, ActKind kind) {
  BasicTensor<T> out(x.shape());
  const T* p = x.data();
  T* o = out.data();
  const std::size_t n = x.size();
  switch (kind) {
    case ActKind::Relu:
      for (std::size_t i = 0; i < n; ++i) o[i] = p[i] > T(0) ? p[i] : T(0);
      break;
    case ActKind::Relu6:
      for (std::size_t i = 0; i < n; ++i) o[i] = std::min(std::max(p[i], T(0)), T(6));
      break;
    case ActKind::Sigmoid:
      for (std::size_t i = 0; i < n; ++i) o[i] = T(1) / (T(1) + std::exp(-p[i]));
      break;
  }
  return out;
}

// `x` is the forward input, `y` the forward output (needed for sigmoid).
template <typename T>
BasicTensor<T> activation_backward(const BasicTensor<T>& grad_out, const BasicTensor<T>& x,
                                   const BasicTensor<T>& y, ActKind kind) {
  BasicTensor<T> gx(grad_out.shape());
  const T* g = grad_out.data();
  const T* p = x.data();
  const T* q = y.data();
  T* o = gx.data();
  const std::size_t n = grad_out.size();
  switch (kind) {
    case ActKind::Relu:
      for (std::size_t i = 0; i < n; ++i) o[i] = p[i] > T(0) ? g[i] : T(0);
      break;
    case ActKind::Relu6:
      for (std::size_t i = 0; i < n; ++i) o[i] = (p[i] > T(0) && p[i] < T(6)) ? g[i] : T(0);
      break;
    case ActKind::Sigmoid:
      for (std::size_t i = 0; i < n; ++i) o[i] = g[i] * q[i] * (T(1) - q[i]);
      break;
  }
  return gx;
}

template <typename T>
BasicTensor<T> global_avg_pool_forward(const BasicTensor<T>& x) {
  BasicTensor<T> out(x.n(), x.c(), 1, 1);
  const T inv = T(1) / (static_cast<T>(x.h()) * x.w());
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const T* p = x.data() + x.index(n, c, 0, 0);
      T acc = T(0);
      for (int i = 0; i < x.h() * x.w(); ++i) acc += p[i];
      out.at(n, c, 0, 0) = acc * inv;
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> global_avg_pool_backward(const BasicTensor<T>& grad_out, const Shape4& in_shape) {
  BasicTensor<T> gx(in_shape);
  const T inv = T(1) / (static_cast<T>(in_shape.h) * in_shape.w);
  for (int n = 0; n < in_shape.n; ++n) {
    for (int c = 0; c < in_shape.c; ++c) {
      const T v = grad_out.at(n, c, 0, 0) * inv;
      T* p = gx.data() + gx.index(n, c, 0, 0);
      for (int i = 0; i < in_shape.h * in_shape.w; ++i) p[i] = v;
    }
  }
  return gx;
}

// weight layout: (out_features, in_features, 1, 1); input must be (n, in, 1, 1).
template <typename T>
BasicTensor<T> linear_forward(const BasicTensor<T>& x, const BasicTensor<T>& weight) {
  detail::check(x.h() == 1 && x.w() == 1, "linear: input spatial axes must be 1x1, got " +
                                              x.shape().str());
  detail::check(x.c() == weight.c(), "linear: input features " + std::to_string(x.c()) +
                                         " do not match weight in_features " +
                                         std::to_string(weight.c()));
  BasicTensor<T> out(x.n(), weight.n(), 1, 1);
  for (int n = 0; n < x.n(); ++n) {
    const T* xv = x.data() + x.index(n, 0, 0, 0);
    for (int k = 0; k < weight.n(); ++k) {
      const T* wv = weight.data() + weight.index(k, 0, 0, 0);
      T acc = T(0);
      for (int c = 0; c < x.c(); ++c) acc += wv[c] * xv[c];
      out.at(n, k, 0, 0) = acc;
    }
  }
  return out;
}

template <typename T>
void linear_backward(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                     const BasicTensor<T>& grad_out, BasicTensor<T>* grad_input,
                     BasicTensor<T>* grad_weight) {
  for (int n = 0; n < x.n(); ++n) {
    const T* xv = x.data() + x.index(n, 0, 0, 0);
    const T* gv = grad_out.data() + grad_out.index(n, 0, 0, 0);
    for (int k = 0; k < weight.n(); ++k) {
      const T* wv = weight.data() + weight.index(k, 0, 0, 0);
      const T g = gv[k];
      if (grad_weight != nullptr) {
        T* gw = grad_weight->data() + grad_weight->index(k, 0, 0, 0);
        for (int c = 0; c < x.c(); ++c) gw[c] += g * xv[c];
      }
      if (grad_input != nullptr) {
        T* gi = grad_input->data() + grad_input->index(n, 0, 0, 0);
        for (int c = 0; c < x.c(); ++c) gi[c] += g * wv[c];
      }
    }
  }
}

template <typename T>
struct SoftmaxLoss {
  double loss = 0.0;                // mean cross-entropy, accumulated in double
  BasicTensor<T> grad_logits;       // d(loss)/d(logits)
  std::vector<int> predictions;     // argmax per sample, lowest index wins ties
};

template <typename T>
SoftmaxLoss<T> softmax_cross_entropy(const BasicTensor<T>& logits, const std::vector<int>& labels) {
  using detail::check;
  check(logits.h() == 1 && logits.w() == 1,
        "softmax: logits spatial axes must be 1x1, got " + logits.shape().str());
  check(labels.size() == static_cast<std::size_t>(logits.n()),
        "softmax: label count " + std::to_string(labels.size()) + " does not match batch " +
            std::to_string(logits.n()));
  const int N = logits.n(), C = logits.c();
  SoftmaxLoss<T> res;
  res.grad_logits = BasicTensor<T>(logits.shape());
  res.predictions.resize(N);
  double total = 0.0;
  std::vector<double> p(C);
  for (int n = 0; n < N; ++n) {
    check(labels[n] >= 0 && labels[n] < C, "softmax: label " + std::to_string(labels[n]) +
                                               " out of range [0," + std::to_string(C) +
                                               ") at sample " + std::to_string(n));
    const T* lv = logits.data() + logits.index(n, 0, 0, 0);
    double mx = lv[0];
    int arg = 0;
    for (int c = 1; c < C; ++c) {
      if (lv[c] > mx) {
        mx = lv[c];
        arg = c;
      }
    }
    res.predictions[n] = arg;
    double z = 0.0;
    for (int c = 0; c < C; ++c) {
      p[c] = std::exp(static_cast<double>(lv[c]) - mx);
      z += p[c];
    }
    total += std::log(z) - (static_cast<double>(lv[labels[n]]) - mx);
    for (int c = 0; c < C; ++c) {
      const double soft = p[c] / z;
      res.grad_logits.at(n, c, 0, 0) =
          static_cast<T>((soft - (c == labels[n] ? 1.0 : 0.0)) / N);
    }
  }
  res.loss = total / N;
  return res;
}

}  // namespace scnt
