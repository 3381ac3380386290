#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fpsr/image.hpp"

namespace fpsr::metrics {

/// Pixels removed from every border before any metric is computed.
inline constexpr int kBorderCrop = 4;
inline constexpr int kNiqeFeatures = 36;

/// 10 log10(peak^2 / MSE); +infinity when the planes are identical.
double psnr_plane(const Plane& a, const Plane& b, double peak = 255.0);
/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, dynamic range L.
double ssim_plane(const Plane& a, const Plane& b, double dynamic_range = 255.0);

/// PSNR on the BT.601 Y channel after cropping kBorderCrop px per border.
double psnr_y(const ImageRGB& gt, const ImageRGB& sr);
double ssim_y(const ImageRGB& gt, const ImageRGB& sr);

/// 0.5 ((10 - sr_score) + niqe).
double perceptual_index(double niqe_value, double sr_score);

// ---- NIQE --------------------------------------------------------------

struct GgdFit {
  double alpha = 2.0;  // shape
  double beta = 0.0;   // scale
};
struct AggdFit {
  double alpha = 2.0;
  double mean = 0.0;
  double beta_left = 0.0;
  double beta_right = 0.0;
};

/// Moment-matching fits; the shape is searched on the grid 0.2:0.001:10.
GgdFit fit_ggd(std::span<const double> samples);
AggdFit fit_aggd(std::span<const double> samples);

/// Mean-subtracted contrast-normalized coefficients of a 0-255 plane using a
/// 7x7 Gaussian window (sigma 7/6) and stabilizer 1. `sigma_out`, when
/// given, receives the local deviation map.
Plane mscn(const Plane& y, Plane* sigma_out = nullptr);

/// Multivariate Gaussian of natural-image patch features.
struct PristineModel {
  std::vector<double> mean;        // kNiqeFeatures
  std::vector<double> covariance;  // kNiqeFeatures^2, row-major
  int patch_size = 96;
  double sharpness_threshold = 0.75;
  /// True when no patch cleared the sharpness threshold and all were used.
  bool used_fallback = false;

  void save(const std::filesystem::path& path) const;
  static PristineModel load(const std::filesystem::path& path);
};

/// 36 features per patch: 18 at full resolution, 18 after a x1/2 bicubic
/// downscale. `sharpness` receives the mean local deviation per patch.
std::vector<std::array<double, kNiqeFeatures>> niqe_patch_features(const Plane& y, int patch_size,
                                                                   std::vector<double>* sharpness = nullptr);

/// Fits the pristine model from the sharpest patches of each image (patches
/// whose sharpness exceeds threshold x the image maximum).
PristineModel fit_pristine(const std::vector<ImageRGB>& corpus, int patch_size = 96,
                           double sharpness_threshold = 0.75);

/// Distance between the image's patch-feature Gaussian and the pristine one.
double niqe(const ImageRGB& image, const PristineModel& model);

// ---- reports -----------------------------------------------------------

struct QualityRecord {
  std::string name;
  double psnr_db = 0.0;
  double ssim = 0.0;
  std::optional<double> niqe;
  std::optional<double> sr_score;
  std::optional<double> pi;
};

struct QualityReport {
  std::vector<QualityRecord> records;
  QualityRecord mean;
  std::vector<std::string> unmatched;
  std::vector<std::string> warnings;

  /// `name,psnr_db,ssim,niqe,sr_score,pi` rows plus a `__mean__` row.
  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

/// Fills the PI column where both NIQE and SR score are present and
/// recomputes the mean row.
void finalize_report(QualityReport& report);

/// Evaluates every PNG present under the same filename in both directories.
QualityReport quality_report(const std::filesystem::path& gt_dir, const std::filesystem::path& sr_dir,
                             const PristineModel* pristine,
                             const std::map<std::string, double>* sr_scores);

/// `name,score` lines; a header line whose score is not numeric is skipped.
std::map<std::string, double> read_sr_scores(const std::filesystem::path& path);

std::string format_metric(double v);

}  // namespace fpsr::metrics
