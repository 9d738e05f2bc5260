#pragma once

// Static per-network tape: each node caches what its backward pass needs
// during forward. Networks are fixed sequential chains; there is no general
// graph. Nodes may share Parameter objects (the weight-sharing supernet relies
// on this), so gradient buffers always accumulate.

#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "scnt/kernels.hpp"
#include "scnt/tensor.hpp"

namespace scnt {

enum class Mode { Train, Eval };

template <typename T>
using ParamPtr = std::shared_ptr<BasicParameter<T>>;

template <typename T>
ParamPtr<T> make_param(const std::string& name, BasicTensor<T> value) {
  return std::make_shared<BasicParameter<T>>(name, std::move(value));
}

template <typename T>
ParamPtr<T> he_conv_param(const std::string& name, int out_c, int in_c_per_group, int k,
                          Rng& rng) {
  BasicTensor<T> w(out_c, in_c_per_group, k, k);
  w.fill_normal(rng, T(0), std::sqrt(T(2) / (in_c_per_group * k * k)));
  return make_param<T>(name, std::move(w));
}

// BatchNorm state bundle: learnable affine plus running statistics. Running
// stats live outside the Parameter list because the optimizer must not touch
// them, but checkpoints still persist them.
template <typename T>
struct BnState {
  ParamPtr<T> gamma;
  ParamPtr<T> beta;
  std::shared_ptr<BasicTensor<T>> running_mean;
  std::shared_ptr<BasicTensor<T>> running_var;

  BnState() = default;
  BnState(const std::string& prefix, int channels) {
    BasicTensor<T> g(1, channels, 1, 1);
    g.fill(T(1));
    gamma = make_param<T>(prefix + ".gamma", std::move(g));
    beta = make_param<T>(prefix + ".beta", BasicTensor<T>(1, channels, 1, 1));
    running_mean = std::make_shared<BasicTensor<T>>(1, channels, 1, 1);
    running_var = std::make_shared<BasicTensor<T>>(1, channels, 1, 1);
    running_var->fill(T(1));
  }
};

template <typename T>
class Node {
 public:
  virtual ~Node() = default;
  virtual BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) = 0;
  virtual BasicTensor<T> backward(const BasicTensor<T>& grad_out) = 0;
  virtual void collect_params(std::vector<ParamPtr<T>>& out) const {}
  virtual std::string kind() const = 0;

 protected:
  void require_forward(bool has) const {
    if (!has) throw std::logic_error(kind() + ": backward called before forward");
  }
};

template <typename T>
class ConvNode : public Node<T> {
 public:
  ConvNode(ParamPtr<T> weight, int stride, int padding, int groups)
      : weight_(std::move(weight)), stride_(stride), padding_(padding), groups_(groups) {}

  BasicTensor<T> forward(const BasicTensor<T>& x, Mode) override {
    input_ = x;
    has_input_ = true;
    return conv2d_forward(x, weight_->value, stride_, padding_, groups_);
  }

  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override {
    this->require_forward(has_input_);
    BasicTensor<T> gx(input_.shape());
    conv2d_backward(input_, weight_->value, grad_out, stride_, padding_, groups_, &gx,
                    &weight_->grad);
    return gx;
  }

  void collect_params(std::vector<ParamPtr<T>>& out) const override { out.push_back(weight_); }
  std::string kind() const override { return "conv"; }

  const ParamPtr<T>& weight() const { return weight_; }
  int stride() const { return stride_; }
  int padding() const { return padding_; }
  int groups() const { return groups_; }

 private:
  ParamPtr<T> weight_;
  int stride_, padding_, groups_;
  BasicTensor<T> input_;
  bool has_input_ = false;
};

template <typename T>
class BnNode : public Node<T> {
 public:
  BnNode(BnState<T> state, T momentum, T eps)
      : state_(std::move(state)), momentum_(momentum), eps_(eps) {}

  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override {
    mode_ = mode;
    has_cache_ = true;
    if (mode == Mode::Train) {
      return batchnorm_forward_train(x, state_.gamma->value, state_.beta->value,
                                     *state_.running_mean, *state_.running_var, momentum_, eps_,
                                     &cache_);
    }
    return batchnorm_forward_eval(x, state_.gamma->value, state_.beta->value,
                                  *state_.running_mean, *state_.running_var, eps_, &cache_);
  }

  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override {
    this->require_forward(has_cache_);
    if (mode_ == Mode::Train) {
      return batchnorm_backward_train(grad_out, cache_, state_.gamma->value, &state_.gamma->grad,
                                      &state_.beta->grad);
    }
    return batchnorm_backward_eval(grad_out, cache_, state_.gamma->value, &state_.gamma->grad,
                                   &state_.beta->grad);
  }

  void collect_params(std::vector<ParamPtr<T>>& out) const override {
    out.push_back(state_.gamma);
    out.push_back(state_.beta);
  }
  std::string kind() const override { return "batchnorm"; }

  const BnState<T>& state() const { return state_; }

 private:
  BnState<T> state_;
  T momentum_, eps_;
  Mode mode_ = Mode::Train;
  BnCache<T> cache_;
  bool has_cache_ = false;
};

template <typename T>
class ActNode : public Node<T> {
 public:
  explicit ActNode(ActKind kind) : act_(kind) {}

  BasicTensor<T> forward(const BasicTensor<T>& x, Mode) override {
    input_ = x;
    output_ = activation_forward(x, act_);
    has_cache_ = true;
    return output_;
  }

  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override {
    this->require_forward(has_cache_);
    return activation_backward(grad_out, input_, output_, act_);
  }

  std::string kind() const override {
    switch (act_) {
      case ActKind::Relu: return "relu";
      case ActKind::Relu6: return "relu6";
      case ActKind::Sigmoid: return "sigmoid";
    }
    return "activation";
  }

 private:
  ActKind act_;
  BasicTensor<T> input_, output_;
  bool has_cache_ = false;
};

template <typename T>
class GapNode : public Node<T> {
 public:
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode) override {
    in_shape_ = x.shape();
    has_cache_ = true;
    return global_avg_pool_forward(x);
  }

  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override {
    this->require_forward(has_cache_);
    return global_avg_pool_backward(grad_out, in_shape_);
  }

  std::string kind() const override { return "global-avg-pool"; }

 private:
  Shape4 in_shape_{0, 0, 0, 0};
  bool has_cache_ = false;
};

template <typename T>
class LinearNode : public Node<T> {
 public:
  explicit LinearNode(ParamPtr<T> weight) : weight_(std::move(weight)) {}

  BasicTensor<T> forward(const BasicTensor<T>& x, Mode) override {
    input_ = x;
    has_input_ = true;
    return linear_forward(x, weight_->value);
  }

  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override {
    this->require_forward(has_input_);
    BasicTensor<T> gx(input_.shape());
    linear_backward(input_, weight_->value, grad_out, &gx, &weight_->grad);
    return gx;
  }

  void collect_params(std::vector<ParamPtr<T>>& out) const override { out.push_back(weight_); }
  std::string kind() const override { return "linear"; }

  const ParamPtr<T>& weight() const { return weight_; }

 private:
  ParamPtr<T> weight_;
  BasicTensor<T> input_;
  bool has_input_ = false;
};

// Squeeze-and-excitation: pool -> 1x1 reduce -> relu -> 1x1 expand -> sigmoid,
// then scale the input per (n, c). Both 1x1 weights are bias-free.
template <typename T>
class SqueezeExciteNode : public Node<T> {
 public:
  SqueezeExciteNode(ParamPtr<T> reduce, ParamPtr<T> expand)
      : reduce_(std::move(reduce)), expand_(std::move(expand)) {}

  BasicTensor<T> forward(const BasicTensor<T>& x, Mode) override {
    input_ = x;
    pooled_ = global_avg_pool_forward(x);
    mid_pre_ = conv2d_forward(pooled_, reduce_->value, 1, 0, 1);
    mid_ = activation_forward(mid_pre_, ActKind::Relu);
    gate_pre_ = conv2d_forward(mid_, expand_->value, 1, 0, 1);
    gate_ = activation_forward(gate_pre_, ActKind::Sigmoid);
    has_cache_ = true;

    BasicTensor<T> out(x.shape());
    scale_apply(x, gate_, out);
    return out;
  }

  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override {
    this->require_forward(has_cache_);
    const int N = input_.n(), C = input_.c(), HW = input_.h() * input_.w();

    // d/dx through the scaling branch, and d/dgate collected per (n, c).
    BasicTensor<T> gx(input_.shape());
    BasicTensor<T> ggate(gate_.shape());
    for (int n = 0; n < N; ++n) {
      for (int c = 0; c < C; ++c) {
        const T s = gate_.at(n, c, 0, 0);
        const T* g = grad_out.data() + grad_out.index(n, c, 0, 0);
        const T* xv = input_.data() + input_.index(n, c, 0, 0);
        T* o = gx.data() + gx.index(n, c, 0, 0);
        T acc = T(0);
        for (int i = 0; i < HW; ++i) {
          o[i] = g[i] * s;
          acc += g[i] * xv[i];
        }
        ggate.at(n, c, 0, 0) = acc;
      }
    }

    BasicTensor<T> g1 = activation_backward(ggate, gate_pre_, gate_, ActKind::Sigmoid);
    BasicTensor<T> g2(mid_.shape());
    conv2d_backward(mid_, expand_->value, g1, 1, 0, 1, &g2, &expand_->grad);
    BasicTensor<T> g3 = activation_backward(g2, mid_pre_, mid_, ActKind::Relu);
    BasicTensor<T> g4(pooled_.shape());
    conv2d_backward(pooled_, reduce_->value, g3, 1, 0, 1, &g4, &reduce_->grad);
    BasicTensor<T> g5 = global_avg_pool_backward(g4, input_.shape());
    for (std::size_t i = 0; i < gx.size(); ++i) gx.data()[i] += g5.data()[i];
    return gx;
  }

  void collect_params(std::vector<ParamPtr<T>>& out) const override {
    out.push_back(reduce_);
    out.push_back(expand_);
  }
  std::string kind() const override { return "squeeze-excite"; }

 private:
  static void scale_apply(const BasicTensor<T>& x, const BasicTensor<T>& gate,
                          BasicTensor<T>& out) {
    const int N = x.n(), C = x.c(), HW = x.h() * x.w();
    for (int n = 0; n < N; ++n) {
      for (int c = 0; c < C; ++c) {
        const T s = gate.at(n, c, 0, 0);
        const T* p = x.data() + x.index(n, c, 0, 0);
        T* o = out.data() + out.index(n, c, 0, 0);
        for (int i = 0; i < HW; ++i) o[i] = p[i] * s;
      }
    }
  }

  ParamPtr<T> reduce_, expand_;
  BasicTensor<T> input_, pooled_, mid_pre_, mid_, gate_pre_, gate_;
  bool has_cache_ = false;
};

// Identity pass-through, used for plain skip connections in the search space.
template <typename T>
class IdentityNode : public Node<T> {
 public:
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode) override {
    has_cache_ = true;
    return x;
  }
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override {
    this->require_forward(has_cache_);
    return grad_out;
  }
  std::string kind() const override { return "identity"; }

 private:
  bool has_cache_ = false;
};

// Fixed sequential chain of nodes.
template <typename T>
class Network {
 public:
  Network() = default;
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  void add(std::unique_ptr<Node<T>> node) { nodes_.push_back(std::move(node)); }

  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) {
    BasicTensor<T> cur = x;
    for (auto& n : nodes_) cur = n->forward(cur, mode);
    return cur;
  }

  BasicTensor<T> backward(const BasicTensor<T>& grad_out) {
    BasicTensor<T> cur = grad_out;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) cur = (*it)->backward(cur);
    return cur;
  }

  // Unique parameters in first-seen order; nodes may share parameters.
  std::vector<ParamPtr<T>> params() const {
    std::vector<ParamPtr<T>> all, out;
    for (const auto& n : nodes_) n->collect_params(all);
    std::unordered_set<const BasicParameter<T>*> seen;
    for (auto& p : all) {
      if (seen.insert(p.get()).second) out.push_back(p);
    }
    return out;
  }

  std::size_t node_count() const { return nodes_.size(); }
  Node<T>& node(std::size_t i) { return *nodes_[i]; }
  const Node<T>& node(std::size_t i) const { return *nodes_[i]; }

 private:
  std::vector<std::unique_ptr<Node<T>>> nodes_;
};

// SGD with classical momentum: v <- mu * v + g + wd * w, then w <- w - lr * v.
// Gradients are cleared after the update so accumulation starts fresh.
template <typename T>
class Sgd {
 public:
  Sgd(T lr, T momentum, T weight_decay) : lr_(lr), momentum_(momentum), wd_(weight_decay) {
    if (lr < T(0)) {
      throw std::invalid_argument("sgd: learning rate must be >= 0, got " + std::to_string(lr));
    }
  }

  void set_lr(T lr) {
    if (lr < T(0)) {
      throw std::invalid_argument("sgd: learning rate must be >= 0, got " + std::to_string(lr));
    }
    lr_ = lr;
  }
  T lr() const { return lr_; }

  void step(const std::vector<ParamPtr<T>>& params) {
    for (const auto& p : params) {
      auto& v = velocity_[p.get()];
      if (v.size() != p->value.size()) v.assign(p->value.size(), T(0));
      T* w = p->value.data();
      T* g = p->grad.data();
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        v[i] = momentum_ * v[i] + g[i] + wd_ * w[i];
        w[i] -= lr_ * v[i];
        g[i] = T(0);
      }
    }
  }

 private:
  T lr_, momentum_, wd_;
  std::unordered_map<const BasicParameter<T>*, std::vector<T>> velocity_;
};

}  // namespace scnt
