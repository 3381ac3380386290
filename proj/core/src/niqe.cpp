#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "fpsr/metrics.hpp"
#include "fpsr/resample.hpp"

namespace fpsr::metrics {

namespace {

constexpr int kPerScale = kNiqeFeatures / 2;

struct ShapeGrid {
  std::vector<double> alpha;
  std::vector<double> ggd_ratio;   // Gamma(1/a) Gamma(3/a) / Gamma(2/a)^2
  std::vector<double> aggd_ratio;  // Gamma(2/a)^2 / (Gamma(1/a) Gamma(3/a))
};

const ShapeGrid& shape_grid() {
  static const ShapeGrid grid = [] {
    ShapeGrid g;
    for (int i = 0; i <= 9800; ++i) {
      const double a = 0.2 + 0.001 * i;
      const double g1 = std::lgamma(1.0 / a), g2 = std::lgamma(2.0 / a), g3 = std::lgamma(3.0 / a);
      g.alpha.push_back(a);
      g.ggd_ratio.push_back(std::exp(g1 + g3 - 2 * g2));
      g.aggd_ratio.push_back(std::exp(2 * g2 - g1 - g3));
    }
    return g;
  }();
  return grid;
}

double gamma_scale(double alpha) { return std::sqrt(std::exp(std::lgamma(1.0 / alpha) - std::lgamma(3.0 / alpha))); }

std::vector<double> gaussian_taps(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size));
  const double c = (size - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < size; ++i) total += (w[i] = std::exp(-0.5 * (i - c) * (i - c) / (sigma * sigma)));
  for (auto& v : w) v /= total;
  return w;
}

// Separable correlation with replicated borders, same-size output.
Plane filter_replicate(const Plane& p, const std::vector<double>& w) {
  const int k = static_cast<int>(w.size()), r = k / 2;
  auto clampi = [](int i, int n) { return std::clamp(i, 0, n - 1); };
  Plane tmp(p.height, p.width);
  for (int y = 0; y < p.height; ++y)
    for (int x = 0; x < p.width; ++x) {
      double acc = 0.0;
      for (int i = 0; i < k; ++i) acc += w[i] * p.at(y, clampi(x + i - r, p.width));
      tmp.at(y, x) = acc;
    }
  Plane out(p.height, p.width);
  for (int y = 0; y < p.height; ++y)
    for (int x = 0; x < p.width; ++x) {
      double acc = 0.0;
      for (int i = 0; i < k; ++i) acc += w[i] * tmp.at(clampi(y + i - r, p.height), x);
      out.at(y, x) = acc;
    }
  return out;
}

Plane sub_plane(const Plane& p, int y0, int x0, int size) {
  Plane out(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) out.at(y, x) = p.at(y0 + y, x0 + x);
  return out;
}

// 18 statistics of one MSCN patch; products use circular shifts inside the patch.
void patch_statistics(const Plane& m, double* out) {
  const GgdFit g = fit_ggd(m.data);
  out[0] = g.alpha;
  out[1] = g.beta;
  static constexpr int kShifts[4][2] = {{0, 1}, {1, 0}, {1, 1}, {1, -1}};
  std::vector<double> pair(m.data.size());
  const int h = m.height, w = m.width;
  for (int s = 0; s < 4; ++s) {
    const int dy = kShifts[s][0], dx = kShifts[s][1];
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int sy = ((y - dy) % h + h) % h;
        const int sx = ((x - dx) % w + w) % w;
        pair[static_cast<std::size_t>(y) * w + x] = m.at(y, x) * m.at(sy, sx);
      }
    const AggdFit a = fit_aggd(pair);
    double* o = out + 2 + 4 * s;
    o[0] = a.alpha;
    o[1] = a.mean;
    o[2] = a.beta_left;
    o[3] = a.beta_right;
  }
}

using Features = std::array<double, kNiqeFeatures>;

void mean_and_cov(const std::vector<Features>& feats, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
  const int n = static_cast<int>(feats.size());
  Eigen::MatrixXd x(n, kNiqeFeatures);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < kNiqeFeatures; ++j) x(i, j) = feats[i][j];
  mu = x.colwise().mean().transpose();
  cov = Eigen::MatrixXd::Zero(kNiqeFeatures, kNiqeFeatures);
  if (n > 1) {
    const Eigen::MatrixXd centered = x.rowwise() - mu.transpose();
    cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  }
}

Plane prepared_luma(const ImageRGB& image) { return crop_plane(rgb_to_y601(image), kBorderCrop); }

}  // namespace

GgdFit fit_ggd(std::span<const double> samples) {
  GgdFit fit;
  if (samples.empty()) return fit;
  double sq = 0.0, ab = 0.0;
  for (double v : samples) {
    sq += v * v;
    ab += std::abs(v);
  }
  sq /= static_cast<double>(samples.size());
  ab /= static_cast<double>(samples.size());
  if (sq <= 0.0 || ab <= 0.0) return fit;
  const double rho = sq / (ab * ab);
  const auto& grid = shape_grid();
  std::size_t best = 0;
  double best_d = std::abs(rho - grid.ggd_ratio[0]);
  for (std::size_t i = 1; i < grid.alpha.size(); ++i) {
    const double d = std::abs(rho - grid.ggd_ratio[i]);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  fit.alpha = grid.alpha[best];
  fit.beta = std::sqrt(sq) * gamma_scale(fit.alpha);
  return fit;
}

AggdFit fit_aggd(std::span<const double> samples) {
  AggdFit fit;
  if (samples.empty()) return fit;
  double left_sq = 0.0, right_sq = 0.0, sq = 0.0, ab = 0.0;
  std::size_t left_n = 0, right_n = 0;
  for (double v : samples) {
    if (v < 0) {
      left_sq += v * v;
      ++left_n;
    } else if (v > 0) {
      right_sq += v * v;
      ++right_n;
    }
    sq += v * v;
    ab += std::abs(v);
  }
  const double n = static_cast<double>(samples.size());
  sq /= n;
  ab /= n;
  if (sq <= 0.0) return fit;
  double left = left_n ? std::sqrt(left_sq / static_cast<double>(left_n)) : 0.0;
  double right = right_n ? std::sqrt(right_sq / static_cast<double>(right_n)) : 0.0;
  const double floor = 1e-6 * std::max(left, right);
  left = std::max(left, floor);
  right = std::max(right, floor);
  const double gamma_hat = left / right;
  const double r_hat = ab * ab / sq;
  const double r_norm =
      r_hat * (gamma_hat * gamma_hat * gamma_hat + 1) * (gamma_hat + 1) / std::pow(gamma_hat * gamma_hat + 1, 2);
  const auto& grid = shape_grid();
  std::size_t best = 0;
  double best_d = std::abs(r_norm - grid.aggd_ratio[0]);
  for (std::size_t i = 1; i < grid.alpha.size(); ++i) {
    const double d = std::abs(r_norm - grid.aggd_ratio[i]);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  fit.alpha = grid.alpha[best];
  const double sc = gamma_scale(fit.alpha);
  fit.beta_left = left * sc;
  fit.beta_right = right * sc;
  fit.mean = (fit.beta_right - fit.beta_left) *
             std::exp(std::lgamma(2.0 / fit.alpha) - std::lgamma(1.0 / fit.alpha));
  return fit;
}

Plane mscn(const Plane& y, Plane* sigma_out) {
  const auto w = gaussian_taps(7, 7.0 / 6.0);
  const Plane mu = filter_replicate(y, w);
  Plane sq(y.height, y.width);
  for (std::size_t i = 0; i < y.data.size(); ++i) sq.data[i] = y.data[i] * y.data[i];
  const Plane mu_sq = filter_replicate(sq, w);
  Plane out(y.height, y.width), sigma(y.height, y.width);
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    sigma.data[i] = std::sqrt(std::abs(mu_sq.data[i] - mu.data[i] * mu.data[i]));
    out.data[i] = (y.data[i] - mu.data[i]) / (sigma.data[i] + 1.0);
  }
  if (sigma_out) *sigma_out = std::move(sigma);
  return out;
}

std::vector<Features> niqe_patch_features(const Plane& y, int patch_size, std::vector<double>* sharpness) {
  if (patch_size < 4 || patch_size % 2 != 0) throw std::invalid_argument("NIQE patch size must be even and >= 4");
  const int rows = y.height / patch_size, cols = y.width / patch_size;
  if (rows < 1 || cols < 1) {
    throw std::invalid_argument("plane " + std::to_string(y.height) + "x" + std::to_string(y.width) +
                                " is smaller than one " + std::to_string(patch_size) + " px NIQE patch");
  }
  Plane base(rows * patch_size, cols * patch_size);
  for (int r = 0; r < base.height; ++r)
    for (int c = 0; c < base.width; ++c) base.at(r, c) = y.at(r, c);
  const Plane half = resize_plane(base, Ratio{1, 2});

  Plane sigma;
  const Plane m1 = mscn(base, &sigma);
  const Plane m2 = mscn(half, nullptr);
  const int half_patch = patch_size / 2;

  std::vector<Features> feats;
  if (sharpness) sharpness->clear();
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      Features f{};
      patch_statistics(sub_plane(m1, r * patch_size, c * patch_size, patch_size), f.data());
      patch_statistics(sub_plane(m2, r * half_patch, c * half_patch, half_patch), f.data() + kPerScale);
      feats.push_back(f);
      if (sharpness) {
        double total = 0.0;
        for (int yy = 0; yy < patch_size; ++yy)
          for (int xx = 0; xx < patch_size; ++xx) total += sigma.at(r * patch_size + yy, c * patch_size + xx);
        sharpness->push_back(total / (static_cast<double>(patch_size) * patch_size));
      }
    }
  return feats;
}

PristineModel fit_pristine(const std::vector<ImageRGB>& corpus, int patch_size, double sharpness_threshold) {
  if (corpus.size() < 10) {
    throw std::invalid_argument("pristine corpus needs at least 10 images, got " + std::to_string(corpus.size()));
  }
  std::vector<Features> selected, everything;
  for (const auto& image : corpus) {
    std::vector<double> sharp;
    const auto feats = niqe_patch_features(prepared_luma(image), patch_size, &sharp);
    const double peak = *std::max_element(sharp.begin(), sharp.end());
    for (std::size_t i = 0; i < feats.size(); ++i) {
      everything.push_back(feats[i]);
      if (peak > 0.0 && sharp[i] > sharpness_threshold * peak) selected.push_back(feats[i]);
    }
  }
  PristineModel model;
  model.patch_size = patch_size;
  model.sharpness_threshold = sharpness_threshold;
  if (selected.size() < 2) {
    selected = everything;
    model.used_fallback = true;
  }
  if (selected.size() < 2) throw std::invalid_argument("pristine corpus yields fewer than 2 patches");
  Eigen::VectorXd mu;
  Eigen::MatrixXd cov;
  mean_and_cov(selected, mu, cov);
  cov += 1e-6 * Eigen::MatrixXd::Identity(kNiqeFeatures, kNiqeFeatures);
  model.mean.assign(mu.data(), mu.data() + kNiqeFeatures);
  model.covariance.resize(static_cast<std::size_t>(kNiqeFeatures) * kNiqeFeatures);
  for (int i = 0; i < kNiqeFeatures; ++i)
    for (int j = 0; j < kNiqeFeatures; ++j)
      model.covariance[static_cast<std::size_t>(i) * kNiqeFeatures + j] = 0.5 * (cov(i, j) + cov(j, i));
  return model;
}

double niqe(const ImageRGB& image, const PristineModel& model) {
  if (model.mean.size() != static_cast<std::size_t>(kNiqeFeatures) ||
      model.covariance.size() != static_cast<std::size_t>(kNiqeFeatures) * kNiqeFeatures) {
    throw std::invalid_argument("pristine model has wrong dimensions");
  }
  const auto feats = niqe_patch_features(prepared_luma(image), model.patch_size);
  Eigen::VectorXd mu;
  Eigen::MatrixXd cov;
  mean_and_cov(feats, mu, cov);
  Eigen::VectorXd pristine_mu(kNiqeFeatures);
  Eigen::MatrixXd pristine_cov(kNiqeFeatures, kNiqeFeatures);
  for (int i = 0; i < kNiqeFeatures; ++i) {
    pristine_mu(i) = model.mean[i];
    for (int j = 0; j < kNiqeFeatures; ++j)
      pristine_cov(i, j) = model.covariance[static_cast<std::size_t>(i) * kNiqeFeatures + j];
  }
  const Eigen::MatrixXd pooled = 0.5 * (pristine_cov + cov);
  const Eigen::MatrixXd inv = pooled.completeOrthogonalDecomposition().pseudoInverse();
  const Eigen::VectorXd d = pristine_mu - mu;
  const double q = d.dot(inv * d);
  return std::sqrt(std::max(0.0, q));
}

void PristineModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write pristine model '" + path.string() + "'");
  out.precision(17);
  out << "FPSR-PRISTINE 1\n";
  out << "patch_size " << patch_size << "\n";
  out << "sharpness_threshold " << sharpness_threshold << "\n";
  out << "used_fallback " << (used_fallback ? 1 : 0) << "\n";
  out << "mean";
  for (double v : mean) out << ' ' << v;
  out << "\ncovariance";
  for (double v : covariance) out << ' ' << v;
  out << "\n";
}

PristineModel PristineModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open pristine model '" + path.string() + "'");
  auto bad = [&](const std::string& what) {
    return std::runtime_error("pristine model '" + path.string() + "': " + what);
  };
  std::string magic, version;
  in >> magic >> version;
  if (magic != "FPSR-PRISTINE" || version != "1") throw bad("unrecognized header");
  PristineModel m;
  std::string key;
  int fallback = 0;
  if (!(in >> key >> m.patch_size) || key != "patch_size") throw bad("missing patch_size");
  if (!(in >> key >> m.sharpness_threshold) || key != "sharpness_threshold") throw bad("missing threshold");
  if (!(in >> key >> fallback) || key != "used_fallback") throw bad("missing used_fallback");
  m.used_fallback = fallback != 0;
  if (!(in >> key) || key != "mean") throw bad("missing mean");
  m.mean.resize(kNiqeFeatures);
  for (auto& v : m.mean)
    if (!(in >> v)) throw bad("truncated mean");
  if (!(in >> key) || key != "covariance") throw bad("missing covariance");
  m.covariance.resize(static_cast<std::size_t>(kNiqeFeatures) * kNiqeFeatures);
  for (auto& v : m.covariance)
    if (!(in >> v)) throw bad("truncated covariance");
  return m;
}

}  // namespace fpsr::metrics
