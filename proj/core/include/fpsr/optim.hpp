#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fpsr/models.hpp"

namespace fpsr {

/// Step-indexed learning rate: base_lr halved every `halving_interval` steps
/// (never, when the interval is 0).
struct Schedule {
  std::int64_t total_steps = 0;
  double base_lr = 1e-4;
  std::int64_t halving_interval = 0;

  double lr(std::int64_t step) const;
  /// Divides step counts by `factor` (each at least 1 when it was nonzero).
  Schedule scaled(std::int64_t factor) const;
  void validate() const;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

enum class MissingGrad { Reject, Skip };

/// Bias-corrected Adam over a named parameter list. Moments are kept in the
/// parameter precision and the per-parameter update counters are tracked so
/// parameters that receive no gradient on a step are left untouched.
template <typename T>
class Adam {
 public:
  Adam(models::ParamList<T> params, AdamOptions options = {});

  /// theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) for every parameter
  /// that requires grad. A parameter without a grad buffer is an error under
  /// MissingGrad::Reject and is left unchanged under MissingGrad::Skip.
  void step(double lr, MissingGrad missing = MissingGrad::Reject);
  /// Drops every grad buffer.
  void clear_grads();

  const AdamOptions& options() const { return options_; }
  const models::ParamList<T>& params() const { return params_; }
  std::size_t size() const { return params_.size(); }
  const std::vector<T>& first_moment(std::size_t i) const { return m_.at(i); }
  const std::vector<T>& second_moment(std::size_t i) const { return v_.at(i); }
  std::int64_t updates(std::size_t i) const { return t_.at(i); }

  /// Restores the state of parameter `i`; sizes must match.
  void set_state(std::size_t i, std::vector<T> m, std::vector<T> v, std::int64_t updates);

 private:
  models::ParamList<T> params_;
  AdamOptions options_;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  std::vector<std::int64_t> t_;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace fpsr
