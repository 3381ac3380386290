#include "fpsr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "fpsr/losses.hpp"
#include "fpsr/resample.hpp"

namespace fpsr {

namespace fs = std::filesystem;

PatchPair random_crop_pair(const ImageRGB& hr, int scale, int lr_size, Rng& rng) {
  if (scale < 1 || lr_size < 1) throw std::invalid_argument("random_crop_pair: bad scale or size");
  const int hr_size = lr_size * scale;
  if (hr.height() < hr_size || hr.width() < hr_size) {
    throw std::invalid_argument("random_crop_pair: image " + std::to_string(hr.height()) + "x" +
                                std::to_string(hr.width()) + " smaller than the " +
                                std::to_string(hr_size) + " px crop");
  }
  const auto gy = static_cast<int>(rng.uniform_int(0, (hr.height() - hr_size) / scale));
  const auto gx = static_cast<int>(rng.uniform_int(0, (hr.width() - hr_size) / scale));
  PatchPair pair;
  pair.scale = scale;
  pair.hr = hr.crop(gy * scale, gx * scale, hr_size, hr_size);
  pair.lr = bicubic_resize(pair.hr, Ratio{1, scale});
  return pair;
}

namespace {

Plane blur_plane(const Plane& p, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) total += (k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma)));
  for (auto& v : k) v /= total;
  auto mirror = [](int i, int n) {
    while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
    return i;
  };
  Plane tmp(p.height, p.width);
  for (int y = 0; y < p.height; ++y)
    for (int x = 0; x < p.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * p.at(y, mirror(x + i, p.width));
      tmp.at(y, x) = acc;
    }
  Plane out(p.height, p.width);
  for (int y = 0; y < p.height; ++y)
    for (int x = 0; x < p.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp.at(mirror(y + i, p.height), x);
      out.at(y, x) = acc;
    }
  return out;
}

// One procedural image. Layers are summed per channel and the result is
// stretched into [0,1].
ImageRGB synth_image(Rng& rng, int size) {
  const int n = size;
  std::array<Plane, 3> ch{Plane(n, n), Plane(n, n), Plane(n, n)};
  auto color = [&] { return std::array<double, 3>{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)}; };

  // Smooth gradient.
  {
    const auto c0 = color();
    const auto c1 = color();
    const double angle = rng.uniform(0, 2 * std::numbers::pi);
    const double ca = std::cos(angle), sa = std::sin(angle);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double t = ((x - n / 2.0) * ca + (y - n / 2.0) * sa) / n;
        for (int c = 0; c < 3; ++c) ch[c].at(y, x) += 0.6 * (c0[c] + t * c1[c]);
      }
  }
  // Sinusoidal gratings over a range of frequencies.
  const int waves = static_cast<int>(rng.uniform_int(1, 3));
  for (int i = 0; i < waves; ++i) {
    const auto c0 = color();
    const double cycles = rng.uniform(1.0, n / 4.0);
    const double angle = rng.uniform(0, std::numbers::pi);
    const double phase = rng.uniform(0, 2 * std::numbers::pi);
    const double amp = rng.uniform(0.1, 0.4);
    const double fx = std::cos(angle) * cycles / n, fy = std::sin(angle) * cycles / n;
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double v = amp * std::sin(2 * std::numbers::pi * (fx * x + fy * y) + phase);
        for (int c = 0; c < 3; ++c) ch[c].at(y, x) += v * c0[c];
      }
  }
  // Checkerboard inside a random rectangle.
  if (rng.uniform() < 0.7) {
    const auto c0 = color();
    const int period = static_cast<int>(rng.uniform_int(2, std::max(2, n / 6)));
    const int y0 = static_cast<int>(rng.uniform_int(0, n / 2));
    const int x0 = static_cast<int>(rng.uniform_int(0, n / 2));
    const int h = static_cast<int>(rng.uniform_int(n / 4, n - y0));
    const int w = static_cast<int>(rng.uniform_int(n / 4, n - x0));
    const double amp = rng.uniform(0.2, 0.5);
    for (int y = y0; y < y0 + h; ++y)
      for (int x = x0; x < x0 + w; ++x) {
        const double v = (((y / period) + (x / period)) % 2 == 0) ? amp : -amp;
        for (int c = 0; c < 3; ++c) ch[c].at(y, x) += v * c0[c];
      }
  }
  // Solid disks give sharp curved edges.
  const int disks = static_cast<int>(rng.uniform_int(1, 4));
  for (int i = 0; i < disks; ++i) {
    const auto c0 = color();
    const double cy = rng.uniform(0, n), cx = rng.uniform(0, n);
    const double r = rng.uniform(n / 12.0, n / 3.0);
    const double amp = rng.uniform(0.2, 0.6);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) {
          for (int c = 0; c < 3; ++c) ch[c].at(y, x) += amp * c0[c];
        }
      }
  }
  // Band-limited noise texture.
  {
    const double sigma = rng.uniform(0.5, 2.0);
    const double amp = rng.uniform(0.05, 0.3);
    Plane noise(n, n);
    for (auto& v : noise.data) v = rng.normal();
    noise = blur_plane(noise, sigma);
    const auto c0 = color();
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        for (int c = 0; c < 3; ++c) ch[c].at(y, x) += amp * sigma * noise.at(y, x) * (0.5 + 0.5 * std::abs(c0[c]));
  }

  double lo = ch[0].data[0], hi = lo;
  for (const auto& p : ch)
    for (double v : p.data) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  const double span = hi - lo > 1e-9 ? hi - lo : 1.0;
  const double low = rng.uniform(0.0, 0.15);
  const double high = rng.uniform(0.85, 1.0);
  for (auto& p : ch)
    for (auto& v : p.data) v = low + (high - low) * (v - lo) / span;
  return ImageRGB::from_planes(ch[0], ch[1], ch[2]);
}

}  // namespace

std::vector<ImageRGB> synth_sr_dataset(std::uint64_t seed, int count, int size) {
  if (count < 0) throw std::invalid_argument("synth_sr_dataset: negative count");
  if (size < 1) throw std::invalid_argument("synth_sr_dataset: size must be >= 1");
  std::vector<ImageRGB> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    // One stream per image keeps each image independent of the count.
    Rng rng(derive_seed(seed, "synth-sr/" + std::to_string(i)));
    out.push_back(synth_image(rng, size));
  }
  return out;
}

double degradation_to_score(double d) { return 10.0 - 9.0 * std::clamp(d, 0.0, 1.0); }

ImageRGB gaussian_blur(const ImageRGB& image, double sigma) {
  if (sigma <= 1e-6) return image;
  return ImageRGB::from_planes(blur_plane(image.channel(0), sigma), blur_plane(image.channel(1), sigma),
                               blur_plane(image.channel(2), sigma));
}

ImageRGB add_gaussian_noise(const ImageRGB& image, double sigma, Rng& rng) {
  if (sigma <= 0.0) return image;
  std::vector<double> v = image.data();
  for (auto& x : v) x += sigma * rng.normal();
  return ImageRGB(image.height(), image.width(), std::move(v));
}

std::vector<ScoredImage> synth_scored_dataset(std::uint64_t seed, int count,
                                              const ScoredSynthOptions& opts) {
  if (count < 0) throw std::invalid_argument("synth_scored_dataset: negative count");
  std::vector<ScoredImage> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, "synth-scored/" + std::to_string(i)));
    const double d = rng.uniform();
    ScoredImage rec;
    rec.degradation = d;
    rec.image = synth_image(rng, opts.size);
    rec.image = gaussian_blur(rec.image, d * opts.max_blur_sigma);
    rec.image = add_gaussian_noise(rec.image, d * opts.max_noise_sigma, rng);
    rec.label_mean = degradation_to_score(d);
    // Labels are built the TID way: mean and spread on the [0,9] scale.
    rec.score_dist = losses::gaussian_to_bins(rec.label_mean - 1.0, opts.label_std, losses::kTidRange);
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<fs::path> read_manifest(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw std::runtime_error("cannot open manifest '" + manifest.string() + "'");
  std::vector<fs::path> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    out.push_back(manifest.parent_path() / line.substr(b, e - b + 1));
  }
  return out;
}

std::vector<fs::path> list_png_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: '" + dir.string() + "'");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
  return out;
}

bool parse_synthetic_source(const std::string& source, SyntheticSpec& out) {
  constexpr std::string_view prefix = "synthetic:";
  if (source.rfind(prefix, 0) != 0) return false;
  const auto rest = source.substr(prefix.size());
  const auto colon = rest.find(':');
  if (colon == std::string::npos) {
    throw std::invalid_argument("synthetic source must be synthetic:<seed>:<count>, got '" + source + "'");
  }
  try {
    std::size_t used = 0;
    out.seed = std::stoull(rest.substr(0, colon), &used);
    if (used != colon) throw std::invalid_argument("seed");
    const auto count_text = rest.substr(colon + 1);
    out.count = std::stoi(count_text, &used);
    if (used != count_text.size() || out.count < 0) throw std::invalid_argument("count");
  } catch (const std::exception&) {
    throw std::invalid_argument("synthetic source must be synthetic:<seed>:<count>, got '" + source + "'");
  }
  return true;
}

std::vector<ImageRGB> load_image_source(const std::string& source, int synth_size) {
  SyntheticSpec spec;
  if (parse_synthetic_source(source, spec)) return synth_sr_dataset(spec.seed, spec.count, synth_size);
  const fs::path p(source);
  const auto files = fs::is_directory(p) ? list_png_files(p) : read_manifest(p);
  std::vector<ImageRGB> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(load_image(f));
  return out;
}

ImageRGB fit_square(const ImageRGB& image, int size) {
  if (size < 1) throw std::invalid_argument("fit_square size must be positive");
  const int side = std::min(image.height(), image.width());
  ImageRGB square = image.crop((image.height() - side) / 2, (image.width() - side) / 2, side, side);
  if (side == size) return square;
  return bicubic_resize(square, Ratio{size, side});
}

std::vector<ScoredImage> load_scored_source(const std::string& source, const ScoredSynthOptions& opts) {
  SyntheticSpec spec;
  if (parse_synthetic_source(source, spec)) return synth_scored_dataset(spec.seed, spec.count, opts);

  const fs::path manifest(source);
  std::ifstream in(manifest);
  if (!in) throw std::runtime_error("cannot open scored manifest '" + source + "'");
  std::vector<ScoredImage> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    auto where = [&] { return manifest.string() + ":" + std::to_string(lineno); };
    ScoredImage rec;
    rec.image = fit_square(load_image(manifest.parent_path() / fields[0]), opts.size);
    try {
      if (fields.size() == 3) {
        const double m = std::stod(fields[1]);
        rec.score_dist = losses::gaussian_to_bins(m, std::stod(fields[2]), losses::kTidRange);
        rec.label_mean = m + 1.0;
      } else if (fields.size() == 1 + kScoreBins) {
        std::array<double, kScoreBins> p{};
        double total = 0.0;
        for (int i = 0; i < kScoreBins; ++i) total += (p[static_cast<std::size_t>(i)] = std::stod(fields[static_cast<std::size_t>(i) + 1]));
        for (auto& v : p) v /= total;
        rec.score_dist = ScoreDistribution(p);
        rec.label_mean = rec.score_dist.mean();
      } else {
        throw std::invalid_argument("expected 3 or 11 fields");
      }
    } catch (const std::exception& e) {
      throw std::invalid_argument("bad scored manifest line " + where() + ": " + e.what());
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace fpsr
