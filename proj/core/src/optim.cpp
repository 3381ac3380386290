#include "fpsr/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fpsr {

double Schedule::lr(std::int64_t step) const {
  if (step < 0) throw std::invalid_argument("negative step");
  if (halving_interval <= 0) return base_lr;
  const auto halvings = step / halving_interval;
  return std::ldexp(base_lr, -static_cast<int>(std::min<std::int64_t>(halvings, 1000)));
}

Schedule Schedule::scaled(std::int64_t factor) const {
  if (factor < 1) throw std::invalid_argument("scale_factor must be >= 1");
  Schedule s = *this;
  if (total_steps > 0) s.total_steps = std::max<std::int64_t>(1, total_steps / factor);
  if (halving_interval > 0) s.halving_interval = std::max<std::int64_t>(1, halving_interval / factor);
  return s;
}

void Schedule::validate() const {
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw std::invalid_argument("learning rate must be positive");
  if (total_steps < 0 || halving_interval < 0) throw std::invalid_argument("negative step count in schedule");
}

template <typename T>
Adam<T>::Adam(models::ParamList<T> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  if (!(options_.beta1 >= 0 && options_.beta1 < 1 && options_.beta2 >= 0 && options_.beta2 < 1)) {
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  }
  if (!(options_.eps > 0)) throw std::invalid_argument("Adam epsilon must be positive");
  for (const auto& p : params_) {
    m_.emplace_back(static_cast<std::size_t>(p.tensor.numel()), T(0));
    v_.emplace_back(static_cast<std::size_t>(p.tensor.numel()), T(0));
    t_.push_back(0);
  }
}

template <typename T>
void Adam<T>::step(double lr, MissingGrad missing) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("learning rate must be finite and >= 0");
  if (missing == MissingGrad::Reject) {
    for (const auto& p : params_) {
      if (p.tensor.requires_grad() && !p.tensor.has_grad()) {
        throw std::invalid_argument("parameter '" + p.name + "' has no gradient");
      }
    }
  }
  const double b1 = options_.beta1, b2 = options_.beta2, eps = options_.eps;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i].tensor;
    if (!p.requires_grad() || !p.has_grad()) continue;
    const auto g = p.grad();
    auto theta = p.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    const std::int64_t t = ++t_[i];
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double gk = static_cast<double>(g[k]);
      m[k] = static_cast<T>(b1 * static_cast<double>(m[k]) + (1.0 - b1) * gk);
      v[k] = static_cast<T>(b2 * static_cast<double>(v[k]) + (1.0 - b2) * gk * gk);
      const double m_hat = static_cast<double>(m[k]) / c1;
      const double v_hat = static_cast<double>(v[k]) / c2;
      theta[k] = static_cast<T>(static_cast<double>(theta[k]) - lr * m_hat / (std::sqrt(v_hat) + eps));
    }
  }
}

template <typename T>
void Adam<T>::clear_grads() {
  for (auto& p : params_) p.tensor.clear_grad();
}

template <typename T>
void Adam<T>::set_state(std::size_t i, std::vector<T> m, std::vector<T> v, std::int64_t updates) {
  if (i >= params_.size()) throw std::out_of_range("Adam parameter index");
  if (m.size() != m_[i].size() || v.size() != v_[i].size()) {
    throw std::invalid_argument("Adam state size mismatch for '" + params_[i].name + "'");
  }
  if (updates < 0) throw std::invalid_argument("negative Adam update count");
  m_[i] = std::move(m);
  v_[i] = std::move(v);
  t_[i] = updates;
}

template class Adam<float>;
template class Adam<double>;

}  // namespace fpsr
