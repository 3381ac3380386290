#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fpsr/image.hpp"
#include "fpsr/rng.hpp"
#include "fpsr/score.hpp"

namespace fpsr {

/// Aligned low/high resolution crops; hr extents are exactly scale x lr.
struct PatchPair {
  ImageRGB lr;
  ImageRGB hr;
  int scale = 4;
};

/// Training record for a score predictor.
struct ScoredImage {
  ImageRGB image;
  ScoreDistribution score_dist;
  /// Ground-truth mean score in [1, 10].
  double label_mean = 0.0;
  /// Degradation strength in [0, 1] used to synthesize the record (0 if ingested).
  double degradation = 0.0;
};

/// Crops an HR window of (lr_size * scale)^2 at a scale-aligned origin and
/// derives the LR patch by bicubic downscaling.
PatchPair random_crop_pair(const ImageRGB& hr, int scale, int lr_size, Rng& rng);

/// Procedural images (gradients, sinusoids, checkerboards, shapes, filtered
/// noise), size x size, bit-identical for a given seed.
std::vector<ImageRGB> synth_sr_dataset(std::uint64_t seed, int count, int size);

struct ScoredSynthOptions {
  int size = 48;
  double max_blur_sigma = 2.0;
  double max_noise_sigma = 0.08;
  /// Label spread on the score scale.
  double label_std = 1.0;
};

/// Mean label assigned to degradation strength d in [0,1]: 10 - 9 d.
double degradation_to_score(double d);

/// Images degraded by blur sigma = d * max_blur and noise sigma = d * max_noise
/// for d ~ U[0,1]; labels are Gaussian score distributions around
/// degradation_to_score(d), built on the [0,9] source scale.
std::vector<ScoredImage> synth_scored_dataset(std::uint64_t seed, int count,
                                              const ScoredSynthOptions& opts = {});

/// Center square crop resized to size x size with bicubic resampling.
ImageRGB fit_square(const ImageRGB& image, int size);

ImageRGB gaussian_blur(const ImageRGB& image, double sigma);
ImageRGB add_gaussian_noise(const ImageRGB& image, double sigma, Rng& rng);

/// Relative paths listed in a plain-text manifest, resolved against the
/// manifest's directory. Blank lines and '#' comments are skipped.
std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& manifest);

/// PNG files of a directory in filename order.
std::vector<std::filesystem::path> list_png_files(const std::filesystem::path& dir);

/// Loads a dataset from `synthetic:<seed>:<count>`, a directory of PNGs, or a
/// manifest file. `synth_size` sets the synthetic image size.
std::vector<ImageRGB> load_image_source(const std::string& source, int synth_size);

/// Scored records from `synthetic:<seed>:<count>` or a manifest whose lines
/// are `path,mean,std` (mean on the [0,9] scale) or `path,p1,...,p10`.
std::vector<ScoredImage> load_scored_source(const std::string& source,
                                            const ScoredSynthOptions& opts);

struct SyntheticSpec {
  std::uint64_t seed = 0;
  int count = 0;
};
/// Parses `synthetic:<seed>:<count>`; returns false for other sources.
bool parse_synthetic_source(const std::string& source, SyntheticSpec& out);

}  // namespace fpsr
