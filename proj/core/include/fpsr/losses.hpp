#pragma once

#include <array>
#include <string>

#include "fpsr/score.hpp"
#include "fpsr/tensor.hpp"

namespace fpsr::losses {

/// Hinge parameters shared by the aesthetic and subjective score losses.
struct ScoreLossParams {
  double s_max = 10.0;
  double alpha = 0.8;

  void validate() const;
};

/// Coefficients of the six generator losses, in the order
/// reconstruction, adversarial, aesthetic score, aesthetic representation,
/// subjective score, subjective representation.
struct LossWeights {
  double w_r = 0.05;
  double w_g = 0.1;
  double w_as = 0.01;
  double w_ar = 0.1;
  double w_ss = 0.01;
  double w_sr = 0.1;

  /// Default perceptual weighting (0.05, 0.1, 0.01, 0.1, 0.01, 0.1).
  static LossWeights eq8();
  /// Reconstruction weight `alpha_r`, perceptual terms gated by `alpha_p`.
  static LossWeights eq10(double alpha_r, double alpha_p);

  bool uses_aesthetic() const { return w_as != 0.0 || w_ar != 0.0; }
  bool uses_subjective() const { return w_ss != 0.0 || w_sr != 0.0; }
  std::array<double, 6> as_array() const { return {w_r, w_g, w_as, w_ar, w_ss, w_sr}; }
  void validate() const;
  std::string to_string() const;
};

inline constexpr std::array<const char*, 6> kLossPartNames = {"l_r", "l_g", "l_as",
                                                                "l_ar", "l_ss", "l_sr"};

/// Mean absolute difference over every pixel and channel.
template <typename T>
Tensor<T> recon_l1(const Tensor<T>& gt, const Tensor<T>& sr);

/// Mean of -log(d) over discriminator probabilities (log floored at 1e-12).
template <typename T>
Tensor<T> adversarial_gen(const Tensor<T>& d_out);
/// Same quantity from logits: mean softplus(-z).
template <typename T>
Tensor<T> adversarial_gen_logits(const Tensor<T>& logits);

/// mean(-log d_real) + mean(-log(1 - d_fake)), each over its own batch.
template <typename T>
Tensor<T> disc_loss(const Tensor<T>& d_real, const Tensor<T>& d_fake);
template <typename T>
Tensor<T> disc_loss_logits(const Tensor<T>& real_logits, const Tensor<T>& fake_logits);

/// max(0, (s_max - s_sr) - alpha (s_max - s_gt)).
double score_loss(double s_gt, double s_sr, const ScoreLossParams& p);
/// Batch mean of the hinge above; s_gt and s_sr are N x 1 mean scores.
template <typename T>
Tensor<T> score_loss(const Tensor<T>& s_gt, const Tensor<T>& s_sr, const ScoreLossParams& p);

/// Squared representation distance summed over features, averaged over the batch.
template <typename T>
Tensor<T> repr_loss(const Tensor<T>& r_gt, const Tensor<T>& r_sr);

/// Squared Earth mover's distance: sum_i (F_i(gt) - F_i(pred))^2.
double emd_sq(const ScoreDistribution& q_gt, const ScoreDistribution& q_pred);
/// Batch mean of the squared EMD between rows of two N x 10 tensors.
template <typename T>
Tensor<T> emd_sq(const Tensor<T>& q_gt, const Tensor<T>& q_pred);

/// Declared range of a source score scale.
struct ScoreRange {
  double lo;
  double hi;
};
inline constexpr ScoreRange kTidRange{0.0, 9.0};
inline constexpr ScoreRange kNativeRange{1.0, 10.0};

/// Maps `mean` linearly from `source` onto [1,10], evaluates a Gaussian
/// density with the given spread at the bin centers 1..10, and normalizes.
ScoreDistribution gaussian_to_bins(double mean, double std, ScoreRange source = kTidRange);

/// Weighted sum of the six parts.
double total_gen_loss(const std::array<double, 6>& parts, const LossWeights& w);
/// Tensor form; parts whose weight is zero may be undefined and are skipped.
template <typename T>
Tensor<T> total_gen_loss(const std::array<Tensor<T>, 6>& parts, const LossWeights& w);

}  // namespace fpsr::losses
