#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "mcdre/autodiff.hpp"

namespace mcdre {

struct AdamConfig {
  double lr = 4e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over every trainable slot of a store. Moments are kept in double.
template <class T>
class Adam {
 public:
  Adam(ParamStore<T>& params, AdamConfig config) : params_(params), config_(config) {
    if (!(config_.lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto n = params_[i].value.size();
      m_.emplace_back(n, 0.0);
      v_.emplace_back(n, 0.0);
    }
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& slot = params_[i];
      if (!slot.trainable) continue;
      auto value = slot.value.values();
      auto grad = slot.grad.values();
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t k = 0; k < value.size(); ++k) {
        const double g = grad[k];
        m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * g;
        v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * g * g;
        const double update = config_.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + config_.eps);
        value[k] = static_cast<T>(value[k] - update);
      }
    }
  }

  std::size_t steps() const noexcept { return t_; }
  const AdamConfig& config() const noexcept { return config_; }

 private:
  ParamStore<T>& params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

/// Clip group of a parameter: the path component before the first dot
/// ("embedding", "se", "sy", "do").
inline std::string clip_group(const std::string& name) {
  const auto dot = name.find('.');
  return dot == std::string::npos ? name : name.substr(0, dot);
}

/// Rescales gradients so that each clip group's 2-norm is at most max_norm.
/// Returns the largest pre-clip group norm. max_norm <= 0 disables clipping.
template <class T>
double clip_grad_norm(ParamStore<T>& params, double max_norm) {
  std::map<std::string, double> sq;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable) continue;
    double& s = sq[clip_group(params[i].name)];
    for (T g : params[i].grad.values()) s += static_cast<double>(g) * static_cast<double>(g);
  }
  double largest = 0.0;
  for (auto& [group, s] : sq) {
    s = std::sqrt(s);
    largest = std::max(largest, s);
  }
  if (max_norm <= 0.0) return largest;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable) continue;
    const double norm = sq[clip_group(params[i].name)];
    if (norm <= max_norm) continue;
    const double f = max_norm / norm;
    for (auto& g : params[i].grad.values()) g = static_cast<T>(g * f);
  }
  return largest;
}

}  // namespace mcdre
