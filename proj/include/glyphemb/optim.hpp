// Copyright 2026 The glyphemb Authors. Apache 2.0 License.

#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "glyphemb/tensor.hpp"

namespace glyphemb {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (!(lr > 0.0)) throw std::invalid_argument("adam: lr must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
      throw std::invalid_argument("adam: betas must lie in [0, 1)");
    if (!(epsilon > 0.0))
      throw std::invalid_argument("adam: epsilon must be positive");
  }
};

/// First/second moment estimates for a fixed list of parameters.
template <typename T>
class AdamState {
 public:
  AdamState() = default;
  AdamState(std::span<Parameter<T>* const> params, AdamOptions opts)
      : opts_(opts) {
    opts_.validate();
    for (const auto* p : params) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }

  const AdamOptions& options() const { return opts_; }
  std::size_t step_count() const { return t_; }
  const Tensor<T>& first_moment(std::size_t i) const { return m_.at(i); }
  const Tensor<T>& second_moment(std::size_t i) const { return v_.at(i); }

  /// One Adam update from the parameters' current grads. Throws before
  /// touching anything if a gradient is non-finite.
  void step(std::span<Parameter<T>* const> params) {
    if (params.size() != m_.size())
      throw ShapeError("adam: parameter list differs from optimizer state");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i]->grad.shape() != m_[i].shape())
        throw ShapeError("adam: shape of " + params[i]->name + " changed");
      if (!params[i]->grad.all_finite())
        throw NonFiniteError("adam: non-finite gradient for " + params[i]->name);
    }
    ++t_;
    const double b1 = opts_.beta1, b2 = opts_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto p = params[i]->value.data();
      auto g = params[i]->grad.data();
      auto m = m_[i].data();
      auto v = v_[i].data();
      for (std::size_t k = 0; k < p.size(); ++k) {
        const double gk = static_cast<double>(g[k]);
        m[k] = static_cast<T>(b1 * static_cast<double>(m[k]) + (1.0 - b1) * gk);
        v[k] = static_cast<T>(b2 * static_cast<double>(v[k]) +
                              (1.0 - b2) * gk * gk);
        const double mhat = static_cast<double>(m[k]) / c1;
        const double vhat = static_cast<double>(v[k]) / c2;
        p[k] = static_cast<T>(static_cast<double>(p[k]) -
                              opts_.lr * mhat / (std::sqrt(vhat) + opts_.epsilon));
      }
    }
  }

 private:
  AdamOptions opts_;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
  std::size_t t_ = 0;
};

/// Scales all gradients so their joint L2 norm is at most max_norm.
/// Returns the norm before clipping. max_norm <= 0 disables clipping.
template <typename T>
double clip_grad_norm(std::span<Parameter<T>* const> params, double max_norm) {
  double sq = 0.0;
  for (const auto* p : params)
    for (T g : p->grad.data()) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T scale = static_cast<T>(max_norm / norm);
    for (auto* p : params)
      for (auto& g : p->grad.data()) g *= scale;
  }
  return norm;
}

template <typename T>
void zero_grads(std::span<Parameter<T>* const> params) {
  for (auto* p : params) p->zero_grad();
}

}  // namespace glyphemb
