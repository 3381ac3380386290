#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "fpsr/rng.hpp"
#include "fpsr/score.hpp"
#include "fpsr/tensor.hpp"

namespace fpsr::models {

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};
template <typename T>
using ParamList = std::vector<NamedTensor<T>>;

/// Uniform init bounds are gain / sqrt(fan_in): He for the classifier
/// networks, plain fan-in scaling for the generator.
inline constexpr double kHeGain = 2.449489742783178;
inline constexpr double kFanInGain = 1.0;

/// Convolution layer with "same" padding for stride 1.
template <typename T>
struct Conv {
  Tensor<T> weight;  // cout x cin x k x k
  Tensor<T> bias;    // cout
  int stride = 1;
  int pad = 1;

  static Conv make(int cin, int cout, int k, int stride, Rng& rng, double gain = kHeGain);
  Tensor<T> operator()(const Tensor<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

template <typename T>
struct Dense {
  Tensor<T> weight;  // in x out
  Tensor<T> bias;    // out

  static Dense make(int in, int out, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

/// conv3x3 -> ReLU -> conv3x3, scaled and added back to the input.
template <typename T>
struct ResidualBlock {
  Conv<T> first;
  Conv<T> second;
  T scaling = T(1);

  static ResidualBlock make(int channels, double scaling, Rng& rng, double gain = kHeGain);
  Tensor<T> operator()(const Tensor<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

/// Residual blocks, then a conv to 4C channels and a x2 depth-to-space.
template <typename T>
struct UpscaleModule {
  std::vector<ResidualBlock<T>> blocks;
  Conv<T> expand;

  Tensor<T> operator()(const Tensor<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

struct EusrConfig {
  int channels = 16;
  int shared_blocks = 4;
  int upscale_blocks = 1;
  double residual_scaling = 1.0;

  static EusrConfig desk() { return {}; }
  static EusrConfig paper() { return {64, 32, 1, 1.0}; }
  void validate() const;
};

inline constexpr std::array<int, 3> kScales = {2, 4, 8};
/// Constant removed from generator inputs; the tail biases start at it.
inline constexpr double kPixelMean = 0.5;
int scale_slot(int scale);

/// Multi-scale generator: shared head conv, per-scale residual feature
/// extraction, one shared residual module (with its own skip), and per-scale
/// chains of 1/2/3 upscaling modules followed by a 3-channel tail conv.
template <typename T>
class Eusr {
 public:
  Eusr(const EusrConfig& config, std::uint64_t seed);
  Eusr(Eusr&&) noexcept = default;
  Eusr& operator=(Eusr&&) noexcept = default;

  /// N x 3 x h x w -> N x 3 x (scale h) x (scale w), scale in {2,4,8}.
  Tensor<T> forward(const Tensor<T>& x, int scale) const;

  const EusrConfig& config() const { return config_; }
  ParamList<T> parameters() const;
  std::size_t path_modules(int scale) const { return up_[scale_slot(scale)].size(); }

  Conv<T>& tail(int scale) { return tails_[scale_slot(scale)]; }
  const ResidualBlock<T>& shared_block(std::size_t i) const { return shared_.at(i); }

  std::uint64_t forward_count() const { return forward_count_->load(); }
  void reset_forward_count() { forward_count_->store(0); }

 private:
  EusrConfig config_;
  Conv<T> head_;
  std::array<ResidualBlock<T>, 3> scale_aware_;
  std::vector<ResidualBlock<T>> shared_;
  Conv<T> shared_tail_;
  std::array<std::vector<UpscaleModule<T>>, 3> up_;
  std::array<Conv<T>, 3> tails_;
  std::unique_ptr<std::atomic<std::uint64_t>> forward_count_;
};

/// Three x4 reconstructions of one input: the x4 path, the x2 path applied
/// twice, and the x8 path followed by a x1/2 bicubic downscale. When
/// `multipass` is false only the x4 path runs.
template <typename T>
std::vector<Tensor<T>> multipass_x4(const Eusr<T>& model, const Tensor<T>& x, bool multipass = true);

/// Upscale by 4 through one named route: "x4", "x2x2" or "x8down".
template <typename T>
Tensor<T> upscale_x4_path(const Eusr<T>& model, const Tensor<T>& x, const std::string& path);

struct DiscriminatorConfig {
  int width = 8;
  int input_size = 48;
  int hidden = 64;
  double leaky_alpha = 0.2;

  static DiscriminatorConfig desk() { return {}; }
  static DiscriminatorConfig paper() { return {64, 192, 1024, 0.2}; }
  void validate() const;
};

/// Ten 3x3 convs (s1/s2 pairs at widths w, 2w, 4w, 8w, 16w) with LeakyReLU,
/// two dense layers, sigmoid output. No normalization layers.
template <typename T>
class Discriminator {
 public:
  Discriminator(const DiscriminatorConfig& config, std::uint64_t seed);

  /// Pre-sigmoid scores, N x 1.
  Tensor<T> logits(const Tensor<T>& images) const;
  /// Probability of "real", N x 1.
  Tensor<T> forward(const Tensor<T>& images) const;

  const DiscriminatorConfig& config() const { return config_; }
  ParamList<T> parameters() const;
  std::size_t conv_count() const { return convs_.size(); }
  const Dense<T>& output_layer() const { return fc2_; }
  Dense<T>& output_layer() { return fc2_; }

 private:
  DiscriminatorConfig config_;
  std::vector<Conv<T>> convs_;
  Dense<T> fc1_;
  Dense<T> fc2_;
};

struct PredictorConfig {
  int stem = 16;
  int repr = 64;
  int min_input = 16;

  static PredictorConfig desk() { return {}; }
  static PredictorConfig paper() { return {32, 1280, 32}; }
  void validate() const;
};

template <typename T>
struct PredictorOutput {
  Tensor<T> probs;        // N x 10
  Tensor<T> repr;         // N x R, pooled backbone activation
  Tensor<T> mean_scores;  // N x 1
};

/// Small stride-2 CNN ending in global average pooling, with a dense
/// 10-way softmax head over the scores 1..10.
template <typename T>
class ScorePredictor {
 public:
  ScorePredictor(const PredictorConfig& config, std::uint64_t seed);

  PredictorOutput<T> forward(const Tensor<T>& images) const;
  std::vector<ScoreDistribution> distributions(const PredictorOutput<T>& out) const;

  const PredictorConfig& config() const { return config_; }
  ParamList<T> parameters() const;
  ParamList<T> backbone_parameters() const;
  ParamList<T> head_parameters() const;
  Dense<T>& head() { return head_; }

  /// Toggles requires_grad on every parameter.
  void set_trainable(bool on);
  bool is_frozen() const;

  std::uint64_t forward_count() const { return forward_count_->load(); }
  void reset_forward_count() { forward_count_->store(0); }

 private:
  PredictorConfig config_;
  std::vector<Conv<T>> backbone_;
  Dense<T> head_;
  Tensor<T> bins_;
  Tensor<T> zero_bias_;
  std::unique_ptr<std::atomic<std::uint64_t>> forward_count_;
};

/// Deep copy of parameter values from `src` into `dst` (matched by name).
template <typename T>
void copy_parameters(const ParamList<T>& src, const ParamList<T>& dst);

std::size_t parameter_count(const ParamList<float>& params);

}  // namespace fpsr::models
