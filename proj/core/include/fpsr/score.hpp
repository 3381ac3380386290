#pragma once

#include <array>
#include <span>

namespace fpsr {

inline constexpr int kScoreBins = 10;

/// Probability vector over the quality scores 1..10.
class ScoreDistribution {
 public:
  /// Uniform distribution.
  ScoreDistribution();
  /// Rejects negative entries and sums farther than `tol` from 1.
  explicit ScoreDistribution(std::span<const double> p, double tol = 1e-9);

  static ScoreDistribution point_mass(int score);

  double operator[](int bin) const { return p_[static_cast<std::size_t>(bin)]; }
  const std::array<double, kScoreBins>& probabilities() const { return p_; }
  /// Expected score sum_i i p_i, in [1, 10].
  double mean() const;
  /// Cumulative distribution F_i, i = 1..10.
  std::array<double, kScoreBins> cdf() const;

 private:
  std::array<double, kScoreBins> p_{};
};

inline double mean_score(const ScoreDistribution& d) { return d.mean(); }

}  // namespace fpsr
