#include "fpsr/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "fpsr/ops.hpp"

namespace fpsr {

ScoreDistribution::ScoreDistribution() { p_.fill(1.0 / kScoreBins); }

ScoreDistribution::ScoreDistribution(std::span<const double> p, double tol) {
  if (p.size() != kScoreBins) {
    throw std::invalid_argument("score distribution needs 10 bins, got " + std::to_string(p.size()));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i] >= 0.0) || !std::isfinite(p[i])) {
      throw std::invalid_argument("score distribution has a negative or non-finite bin");
    }
    p_[i] = p[i];
    total += p[i];
  }
  if (std::abs(total - 1.0) > tol) {
    throw std::invalid_argument("score distribution sums to " + std::to_string(total));
  }
}

ScoreDistribution ScoreDistribution::point_mass(int score) {
  if (score < 1 || score > kScoreBins) throw std::invalid_argument("score outside 1..10");
  std::array<double, kScoreBins> p{};
  p[static_cast<std::size_t>(score - 1)] = 1.0;
  return ScoreDistribution(p);
}

double ScoreDistribution::mean() const {
  double m = 0.0;
  for (int i = 0; i < kScoreBins; ++i) m += (i + 1) * p_[static_cast<std::size_t>(i)];
  return m;
}

std::array<double, kScoreBins> ScoreDistribution::cdf() const {
  std::array<double, kScoreBins> f{};
  std::partial_sum(p_.begin(), p_.end(), f.begin());
  return f;
}

namespace losses {

void ScoreLossParams::validate() const {
  if (!(s_max > 0.0)) throw std::invalid_argument("s_max must be positive");
  if (!(alpha > 0.0 && alpha <= 2.0)) throw std::invalid_argument("score alpha must lie in (0,2]");
}

LossWeights LossWeights::eq8() { return LossWeights{0.05, 0.1, 0.01, 0.1, 0.01, 0.1}; }

LossWeights LossWeights::eq10(double alpha_r, double alpha_p) {
  return LossWeights{alpha_r, 0.1, alpha_p * 0.01, alpha_p * 0.1, alpha_p * 0.01, alpha_p * 0.1};
}

void LossWeights::validate() const {
  for (double w : as_array()) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("loss weights must be >= 0");
  }
}

std::string LossWeights::to_string() const {
  std::ostringstream os;
  os.precision(17);
  const auto a = as_array();
  for (std::size_t i = 0; i < a.size(); ++i) os << (i ? "," : "") << a[i];
  return os.str();
}

template <typename T>
Tensor<T> recon_l1(const Tensor<T>& gt, const Tensor<T>& sr) {
  return ops::mean_abs(ops::sub(gt, sr));
}

template <typename T>
Tensor<T> adversarial_gen(const Tensor<T>& d_out) {
  return ops::scale(ops::mean(ops::log_clamped(d_out, T(1e-12))), T(-1));
}

template <typename T>
Tensor<T> adversarial_gen_logits(const Tensor<T>& logits) {
  return ops::mean(ops::softplus(ops::scale(logits, T(-1))));
}

template <typename T>
Tensor<T> disc_loss(const Tensor<T>& d_real, const Tensor<T>& d_fake) {
  auto real_term = ops::scale(ops::mean(ops::log_clamped(d_real, T(1e-12))), T(-1));
  auto one_minus = ops::add_scalar(ops::scale(d_fake, T(-1)), T(1));
  auto fake_term = ops::scale(ops::mean(ops::log_clamped(one_minus, T(1e-12))), T(-1));
  return ops::add(real_term, fake_term);
}

template <typename T>
Tensor<T> disc_loss_logits(const Tensor<T>& real_logits, const Tensor<T>& fake_logits) {
  // -log sigmoid(z) = softplus(-z); -log(1 - sigmoid(z)) = softplus(z).
  return ops::add(ops::mean(ops::softplus(ops::scale(real_logits, T(-1)))),
                  ops::mean(ops::softplus(fake_logits)));
}

double score_loss(double s_gt, double s_sr, const ScoreLossParams& p) {
  return std::max(0.0, (p.s_max - s_sr) - p.alpha * (p.s_max - s_gt));
}

template <typename T>
Tensor<T> score_loss(const Tensor<T>& s_gt, const Tensor<T>& s_sr, const ScoreLossParams& p) {
  if (s_gt.shape() != s_sr.shape()) {
    throw ShapeError("score_loss: shape mismatch " + shape_str(s_gt.shape()) + " vs " +
                     shape_str(s_sr.shape()));
  }
  const T s_max = static_cast<T>(p.s_max);
  auto deficit_sr = ops::add_scalar(ops::scale(s_sr, T(-1)), s_max);
  auto deficit_gt = ops::scale(ops::add_scalar(ops::scale(s_gt, T(-1)), s_max), static_cast<T>(p.alpha));
  return ops::mean(ops::relu(ops::sub(deficit_sr, deficit_gt)));
}

template <typename T>
Tensor<T> repr_loss(const Tensor<T>& r_gt, const Tensor<T>& r_sr) {
  if (r_gt.shape() != r_sr.shape() || r_gt.rank() != 2) {
    throw ShapeError("repr_loss: expected equal N x R shapes, got " + shape_str(r_gt.shape()) +
                     " and " + shape_str(r_sr.shape()));
  }
  return ops::scale(ops::sum(ops::square(ops::sub(r_gt, r_sr))), T(1) / static_cast<T>(r_gt.dim(0)));
}

double emd_sq(const ScoreDistribution& q_gt, const ScoreDistribution& q_pred) {
  const auto a = q_gt.cdf();
  const auto b = q_pred.cdf();
  double e = 0.0;
  for (int i = 0; i < kScoreBins; ++i) {
    const double d = a[static_cast<std::size_t>(i)] - b[static_cast<std::size_t>(i)];
    e += d * d;
  }
  return e;
}

template <typename T>
Tensor<T> emd_sq(const Tensor<T>& q_gt, const Tensor<T>& q_pred) {
  if (q_gt.shape() != q_pred.shape() || q_gt.rank() != 2 || q_gt.dim(1) != kScoreBins) {
    throw ShapeError("emd_sq: expected equal N x 10 shapes, got " + shape_str(q_gt.shape()) +
                     " and " + shape_str(q_pred.shape()));
  }
  auto diff = ops::sub(ops::cumsum(q_gt), ops::cumsum(q_pred));
  return ops::scale(ops::sum(ops::square(diff)), T(1) / static_cast<T>(q_gt.dim(0)));
}

ScoreDistribution gaussian_to_bins(double mean, double std, ScoreRange source) {
  if (!(std > 0.0)) throw std::invalid_argument("gaussian_to_bins: std must be positive");
  if (!(source.hi > source.lo)) throw std::invalid_argument("gaussian_to_bins: empty source range");
  const double m = 1.0 + (mean - source.lo) * (kScoreBins - 1) / (source.hi - source.lo);
  std::array<double, kScoreBins> p{};
  double total = 0.0;
  for (int i = 0; i < kScoreBins; ++i) {
    const double z = ((i + 1) - m) / std;
    total += (p[static_cast<std::size_t>(i)] = std::exp(-0.5 * z * z));
  }
  if (!(total > 0.0)) {
    // Every center is far in the tail; put the mass on the nearest bin.
    const int nearest = static_cast<int>(std::lround(std::clamp(m, 1.0, 10.0)));
    return ScoreDistribution::point_mass(nearest);
  }
  for (auto& v : p) v /= total;
  return ScoreDistribution(p, 1e-12);
}

double total_gen_loss(const std::array<double, 6>& parts, const LossWeights& w) {
  const auto c = w.as_array();
  double t = 0.0;
  for (std::size_t i = 0; i < parts.size(); ++i) t += c[i] * parts[i];
  return t;
}

template <typename T>
Tensor<T> total_gen_loss(const std::array<Tensor<T>, 6>& parts, const LossWeights& w) {
  const auto c = w.as_array();
  Tensor<T> total;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (c[i] == 0.0) continue;
    if (!parts[i].defined()) {
      throw std::invalid_argument(std::string("total_gen_loss: missing part ") + kLossPartNames[i]);
    }
    auto term = ops::scale(parts[i], static_cast<T>(c[i]));
    total = total.defined() ? ops::add(total, term) : term;
  }
  if (!total.defined()) return Tensor<T>::scalar(T(0));
  return total;
}

#define FPSR_INSTANTIATE_LOSSES(T)                                                         \
  template Tensor<T> recon_l1<T>(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> adversarial_gen<T>(const Tensor<T>&);                                 \
  template Tensor<T> adversarial_gen_logits<T>(const Tensor<T>&);                          \
  template Tensor<T> disc_loss<T>(const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> disc_loss_logits<T>(const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> score_loss<T>(const Tensor<T>&, const Tensor<T>&, const ScoreLossParams&); \
  template Tensor<T> repr_loss<T>(const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> emd_sq<T>(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> total_gen_loss<T>(const std::array<Tensor<T>, 6>&, const LossWeights&);

FPSR_INSTANTIATE_LOSSES(float)
FPSR_INSTANTIATE_LOSSES(double)

#undef FPSR_INSTANTIATE_LOSSES

}  // namespace losses
}  // namespace fpsr
