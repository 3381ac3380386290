#include "fpsr/models.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

#include "fpsr/ops.hpp"

namespace fpsr::models {

namespace {

template <typename T>
Tensor<T> uniform_param(Shape shape, int fan_in, double gain, Rng& rng) {
  const double bound = gain / std::sqrt(static_cast<double>(fan_in));
  std::vector<T> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
  Tensor<T> t(std::move(shape), std::move(v));
  t.set_requires_grad(true);
  return t;
}

template <typename T>
Tensor<T> zero_param(Shape shape) {
  Tensor<T> t(std::move(shape), T(0));
  t.set_requires_grad(true);
  return t;
}

}  // namespace

int scale_slot(int scale) {
  switch (scale) {
    case 2: return 0;
    case 4: return 1;
    case 8: return 2;
    default: throw std::invalid_argument("unsupported scale " + std::to_string(scale) + " (use 2, 4 or 8)");
  }
}

template <typename T>
Conv<T> Conv<T>::make(int cin, int cout, int k, int stride, Rng& rng, double gain) {
  Conv c;
  c.weight = uniform_param<T>({cout, cin, k, k}, cin * k * k, gain, rng);
  c.bias = zero_param<T>({cout});
  c.stride = stride;
  c.pad = (k - 1) / 2;
  return c;
}

template <typename T>
Tensor<T> Conv<T>::operator()(const Tensor<T>& x) const {
  return ops::conv2d(x, weight, bias, stride, pad);
}

template <typename T>
void Conv<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

template <typename T>
Dense<T> Dense<T>::make(int in, int out, Rng& rng) {
  Dense d;
  d.weight = uniform_param<T>({in, out}, in, kHeGain, rng);
  d.bias = zero_param<T>({out});
  return d;
}

template <typename T>
Tensor<T> Dense<T>::operator()(const Tensor<T>& x) const {
  return ops::dense(x, weight, bias);
}

template <typename T>
void Dense<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

template <typename T>
ResidualBlock<T> ResidualBlock<T>::make(int channels, double scaling, Rng& rng, double gain) {
  ResidualBlock b;
  b.first = Conv<T>::make(channels, channels, 3, 1, rng, gain);
  b.second = Conv<T>::make(channels, channels, 3, 1, rng, gain);
  b.scaling = static_cast<T>(scaling);
  return b;
}

template <typename T>
Tensor<T> ResidualBlock<T>::operator()(const Tensor<T>& x) const {
  auto r = second(ops::relu(first(x)));
  if (scaling != T(1)) r = ops::scale(r, scaling);
  return ops::add(x, r);
}

template <typename T>
void ResidualBlock<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  first.collect(prefix + ".conv1", out);
  second.collect(prefix + ".conv2", out);
}

template <typename T>
Tensor<T> UpscaleModule<T>::operator()(const Tensor<T>& x) const {
  auto h = x;
  for (const auto& b : blocks) h = b(h);
  return ops::pixel_shuffle(expand(h), 2);
}

template <typename T>
void UpscaleModule<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(prefix + ".block" + std::to_string(i), out);
  expand.collect(prefix + ".expand", out);
}

void EusrConfig::validate() const {
  if (channels < 4) throw std::invalid_argument("EUSR channels must be >= 4");
  if (shared_blocks < 1 || upscale_blocks < 1) throw std::invalid_argument("EUSR block counts must be >= 1");
  if (!(residual_scaling > 0.0)) throw std::invalid_argument("residual scaling must be positive");
}

template <typename T>
Eusr<T>::Eusr(const EusrConfig& config, std::uint64_t seed)
    : config_(config), forward_count_(std::make_unique<std::atomic<std::uint64_t>>(0)) {
  config_.validate();
  Rng rng(derive_seed(seed, "init/eusr"));
  const int c = config_.channels;
  head_ = Conv<T>::make(3, c, 3, 1, rng, kFanInGain);
  for (auto& b : scale_aware_) b = ResidualBlock<T>::make(c, config_.residual_scaling, rng, kFanInGain);
  for (int i = 0; i < config_.shared_blocks; ++i) {
    shared_.push_back(ResidualBlock<T>::make(c, config_.residual_scaling, rng, kFanInGain));
  }
  shared_tail_ = Conv<T>::make(c, c, 3, 1, rng, kFanInGain);
  for (std::size_t s = 0; s < kScales.size(); ++s) {
    for (std::size_t m = 0; m <= s; ++m) {
      UpscaleModule<T> mod;
      for (int i = 0; i < config_.upscale_blocks; ++i) mod.blocks.push_back(ResidualBlock<T>::make(c, config_.residual_scaling, rng, kFanInGain));
      mod.expand = Conv<T>::make(c, 4 * c, 3, 1, rng, kFanInGain);
      up_[s].push_back(std::move(mod));
    }
    tails_[s] = Conv<T>::make(c, 3, 3, 1, rng, kFanInGain);
    for (auto& v : tails_[s].bias.mutable_data()) v = T(kPixelMean);
  }
}

template <typename T>
Tensor<T> Eusr<T>::forward(const Tensor<T>& x, int scale) const {
  const int slot = scale_slot(scale);
  if (x.rank() != 4 || x.dim(1) != 3) {
    throw ShapeError("eusr_forward expects N x 3 x h x w, got " + shape_str(x.shape()));
  }
  if (x.dim(2) < 8 || x.dim(3) < 8) {
    throw ShapeError("eusr_forward needs inputs of at least 8x8, got " + shape_str(x.shape()));
  }
  forward_count_->fetch_add(1);
  auto h = head_(ops::add_scalar(x, T(-kPixelMean)));
  auto f = scale_aware_[slot](h);
  auto g = f;
  for (const auto& b : shared_) g = b(g);
  g = ops::add(shared_tail_(g), f);
  for (const auto& m : up_[slot]) g = m(g);
  return tails_[slot](g);
}

template <typename T>
ParamList<T> Eusr<T>::parameters() const {
  ParamList<T> out;
  head_.collect("head", out);
  for (std::size_t s = 0; s < kScales.size(); ++s) {
    scale_aware_[s].collect("x" + std::to_string(kScales[s]) + ".extract", out);
  }
  for (std::size_t i = 0; i < shared_.size(); ++i) shared_[i].collect("shared.block" + std::to_string(i), out);
  shared_tail_.collect("shared.conv", out);
  for (std::size_t s = 0; s < kScales.size(); ++s) {
    const std::string p = "x" + std::to_string(kScales[s]);
    for (std::size_t m = 0; m < up_[s].size(); ++m) up_[s][m].collect(p + ".up" + std::to_string(m), out);
    tails_[s].collect(p + ".tail", out);
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> multipass_x4(const Eusr<T>& model, const Tensor<T>& x, bool multipass) {
  std::vector<Tensor<T>> out;
  out.push_back(model.forward(x, 4));
  if (!multipass) return out;
  out.push_back(model.forward(model.forward(x, 2), 2));
  out.push_back(ops::resize_bicubic(model.forward(x, 8), Ratio{1, 2}));
  return out;
}

template <typename T>
Tensor<T> upscale_x4_path(const Eusr<T>& model, const Tensor<T>& x, const std::string& path) {
  if (path == "x4") return model.forward(x, 4);
  if (path == "x2x2") return model.forward(model.forward(x, 2), 2);
  if (path == "x8down") return ops::resize_bicubic(model.forward(x, 8), Ratio{1, 2});
  throw std::invalid_argument("unknown upscaling path '" + path + "' (use x4, x2x2 or x8down)");
}

void DiscriminatorConfig::validate() const {
  if (width < 1 || hidden < 1) throw std::invalid_argument("discriminator width and hidden size must be >= 1");
  if (input_size < 32) throw std::invalid_argument("discriminator input size must be >= 32");
  if (!(leaky_alpha > 0.0 && leaky_alpha < 1.0)) throw std::invalid_argument("LeakyReLU alpha must lie in (0,1)");
}

template <typename T>
Discriminator<T>::Discriminator(const DiscriminatorConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(derive_seed(seed, "init/discriminator"));
  int cin = 3;
  int extent = config_.input_size;
  for (int stage = 0; stage < 5; ++stage) {
    const int cout = config_.width << stage;
    convs_.push_back(Conv<T>::make(cin, cout, 3, 1, rng));
    convs_.push_back(Conv<T>::make(cout, cout, 3, 2, rng));
    extent = (extent + 2 - 3) / 2 + 1;
    cin = cout;
  }
  fc1_ = Dense<T>::make(cin * extent * extent, config_.hidden, rng);
  fc2_ = Dense<T>::make(config_.hidden, 1, rng);
}

template <typename T>
Tensor<T> Discriminator<T>::logits(const Tensor<T>& images) const {
  if (images.rank() != 4 || images.dim(1) != 3 || images.dim(2) != config_.input_size ||
      images.dim(3) != config_.input_size) {
    throw ShapeError("discriminator expects N x 3 x " + std::to_string(config_.input_size) + " x " +
                     std::to_string(config_.input_size) + ", got " + shape_str(images.shape()));
  }
  const T alpha = static_cast<T>(config_.leaky_alpha);
  auto h = images;
  for (const auto& c : convs_) h = ops::leaky_relu(c(h), alpha);
  const auto n = h.dim(0);
  h = h.reshape({n, h.numel() / n});
  h = ops::leaky_relu(fc1_(h), alpha);
  return fc2_(h);
}

template <typename T>
Tensor<T> Discriminator<T>::forward(const Tensor<T>& images) const {
  return ops::sigmoid(logits(images));
}

template <typename T>
ParamList<T> Discriminator<T>::parameters() const {
  ParamList<T> out;
  for (std::size_t i = 0; i < convs_.size(); ++i) convs_[i].collect("conv" + std::to_string(i), out);
  fc1_.collect("fc1", out);
  fc2_.collect("fc2", out);
  return out;
}

void PredictorConfig::validate() const {
  if (stem < 1 || repr < 1) throw std::invalid_argument("predictor widths must be >= 1");
  if (min_input < 8) throw std::invalid_argument("predictor minimum input must be >= 8");
}

template <typename T>
ScorePredictor<T>::ScorePredictor(const PredictorConfig& config, std::uint64_t seed)
    : config_(config), forward_count_(std::make_unique<std::atomic<std::uint64_t>>(0)) {
  config_.validate();
  Rng rng(derive_seed(seed, "init/predictor"));
  const int w = config_.stem;
  backbone_.push_back(Conv<T>::make(3, w, 3, 2, rng));
  backbone_.push_back(Conv<T>::make(w, w, 3, 1, rng));
  backbone_.push_back(Conv<T>::make(w, 2 * w, 3, 2, rng));
  backbone_.push_back(Conv<T>::make(2 * w, 2 * w, 3, 1, rng));
  backbone_.push_back(Conv<T>::make(2 * w, 4 * w, 3, 2, rng));
  backbone_.push_back(Conv<T>::make(4 * w, config_.repr, 3, 1, rng));
  head_ = Dense<T>::make(config_.repr, kScoreBins, rng);
  std::vector<T> bins(kScoreBins);
  for (int i = 0; i < kScoreBins; ++i) bins[static_cast<std::size_t>(i)] = static_cast<T>(i + 1);
  bins_ = Tensor<T>({kScoreBins, 1}, std::move(bins));
  zero_bias_ = Tensor<T>({1}, T(0));
}

template <typename T>
PredictorOutput<T> ScorePredictor<T>::forward(const Tensor<T>& images) const {
  if (images.rank() != 4 || images.dim(1) != 3) {
    throw ShapeError("score predictor expects N x 3 x H x W, got " + shape_str(images.shape()));
  }
  if (images.dim(2) < config_.min_input || images.dim(3) < config_.min_input) {
    throw ShapeError("score predictor needs inputs of at least " + std::to_string(config_.min_input) +
                     " px, got " + shape_str(images.shape()));
  }
  forward_count_->fetch_add(1);
  auto h = images;
  for (const auto& c : backbone_) h = ops::relu(c(h));
  PredictorOutput<T> out;
  out.repr = ops::global_avg_pool(h);
  out.probs = ops::softmax(head_(out.repr));
  out.mean_scores = ops::dense(out.probs, bins_, zero_bias_);
  return out;
}

template <typename T>
std::vector<ScoreDistribution> ScorePredictor<T>::distributions(const PredictorOutput<T>& out) const {
  std::vector<ScoreDistribution> d;
  const auto p = out.probs.data();
  for (std::int64_t n = 0; n < out.probs.dim(0); ++n) {
    std::array<double, kScoreBins> row{};
    for (int i = 0; i < kScoreBins; ++i) row[static_cast<std::size_t>(i)] = static_cast<double>(p[n * kScoreBins + i]);
    // 32-bit softmax rows can sit a few ulps away from 1.
    double total = 0.0;
    for (double v : row) total += v;
    for (auto& v : row) v /= total;
    d.emplace_back(row);
  }
  return d;
}

template <typename T>
ParamList<T> ScorePredictor<T>::backbone_parameters() const {
  ParamList<T> out;
  for (std::size_t i = 0; i < backbone_.size(); ++i) backbone_[i].collect("backbone" + std::to_string(i), out);
  return out;
}

template <typename T>
ParamList<T> ScorePredictor<T>::head_parameters() const {
  ParamList<T> out;
  head_.collect("head", out);
  return out;
}

template <typename T>
ParamList<T> ScorePredictor<T>::parameters() const {
  auto out = backbone_parameters();
  for (auto& p : head_parameters()) out.push_back(std::move(p));
  return out;
}

template <typename T>
void ScorePredictor<T>::set_trainable(bool on) {
  for (auto& p : parameters()) p.tensor.set_requires_grad(on);
}

template <typename T>
bool ScorePredictor<T>::is_frozen() const {
  for (const auto& p : parameters()) {
    if (p.tensor.requires_grad()) return false;
  }
  return true;
}

template <typename T>
void copy_parameters(const ParamList<T>& src, const ParamList<T>& dst) {
  std::map<std::string, const Tensor<T>*> by_name;
  for (const auto& p : src) by_name[p.name] = &p.tensor;
  for (const auto& p : dst) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw std::invalid_argument("copy_parameters: missing '" + p.name + "'");
    if (it->second->shape() != p.tensor.shape()) {
      throw ShapeError("copy_parameters: shape mismatch for '" + p.name + "'");
    }
    auto dst_tensor = p.tensor;
    const auto s = it->second->data();
    std::copy(s.begin(), s.end(), dst_tensor.mutable_data().begin());
  }
}

std::size_t parameter_count(const ParamList<float>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += static_cast<std::size_t>(p.tensor.numel());
  return n;
}

#define FPSR_INSTANTIATE_MODELS(T)                                                              \
  template struct Conv<T>;                                                                      \
  template struct Dense<T>;                                                                     \
  template struct ResidualBlock<T>;                                                             \
  template struct UpscaleModule<T>;                                                             \
  template class Eusr<T>;                                                                       \
  template class Discriminator<T>;                                                              \
  template class ScorePredictor<T>;                                                             \
  template std::vector<Tensor<T>> multipass_x4<T>(const Eusr<T>&, const Tensor<T>&, bool);      \
  template Tensor<T> upscale_x4_path<T>(const Eusr<T>&, const Tensor<T>&, const std::string&); \
  template void copy_parameters<T>(const ParamList<T>&, const ParamList<T>&);

FPSR_INSTANTIATE_MODELS(float)
FPSR_INSTANTIATE_MODELS(double)

#undef FPSR_INSTANTIATE_MODELS

}  // namespace fpsr::models
