#include "fpsr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "fpsr/dataset.hpp"

namespace fpsr::metrics {

namespace {

void require_same_dims(const ImageRGB& a, const ImageRGB& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw std::invalid_argument("image sizes differ: " + std::to_string(a.height()) + "x" +
                                std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                                std::to_string(b.width()));
  }
}

void require_same_dims(const Plane& a, const Plane& b) {
  if (a.height != b.height || a.width != b.width) throw std::invalid_argument("plane sizes differ");
}

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size));
  const double c = (size - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < size; ++i) total += (w[i] = std::exp(-0.5 * (i - c) * (i - c) / (sigma * sigma)));
  for (auto& v : w) v /= total;
  return w;
}

// Separable 'valid' correlation.
Plane filter_valid(const Plane& p, const std::vector<double>& w) {
  const int k = static_cast<int>(w.size());
  Plane tmp(p.height, p.width - k + 1);
  for (int y = 0; y < tmp.height; ++y)
    for (int x = 0; x < tmp.width; ++x) {
      double acc = 0.0;
      for (int i = 0; i < k; ++i) acc += w[i] * p.at(y, x + i);
      tmp.at(y, x) = acc;
    }
  Plane out(p.height - k + 1, tmp.width);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      double acc = 0.0;
      for (int i = 0; i < k; ++i) acc += w[i] * tmp.at(y + i, x);
      out.at(y, x) = acc;
    }
  return out;
}

// Mirror-pads so the plane is at least `min_size` in each direction.
Plane pad_to(const Plane& p, int min_size) {
  const int py = std::max(0, (min_size - p.height + 1) / 2);
  const int px = std::max(0, (min_size - p.width + 1) / 2);
  if (py == 0 && px == 0) return p;
  auto mirror = [](int i, int n) {
    while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
    return i;
  };
  Plane out(p.height + 2 * py, p.width + 2 * px);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) out.at(y, x) = p.at(mirror(y - py, p.height), mirror(x - px, p.width));
  return out;
}

}  // namespace

double psnr_plane(const Plane& a, const Plane& b, double peak) {
  require_same_dims(a, b);
  if (a.data.empty()) throw std::invalid_argument("psnr of empty planes");
  double se = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    se += d * d;
  }
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = se / static_cast<double>(a.data.size());
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim_plane(const Plane& a_in, const Plane& b_in, double dynamic_range) {
  require_same_dims(a_in, b_in);
  constexpr int kWindow = 11;
  const Plane a = pad_to(a_in, kWindow);
  const Plane b = pad_to(b_in, kWindow);
  const auto w = gaussian_window(kWindow, 1.5);
  const double c1 = (0.01 * dynamic_range) * (0.01 * dynamic_range);
  const double c2 = (0.03 * dynamic_range) * (0.03 * dynamic_range);

  Plane aa(a.height, a.width), bb(a.height, a.width), ab(a.height, a.width);
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    aa.data[i] = a.data[i] * a.data[i];
    bb.data[i] = b.data[i] * b.data[i];
    ab.data[i] = a.data[i] * b.data[i];
  }
  const Plane mu_a = filter_valid(a, w);
  const Plane mu_b = filter_valid(b, w);
  const Plane s_aa = filter_valid(aa, w);
  const Plane s_bb = filter_valid(bb, w);
  const Plane s_ab = filter_valid(ab, w);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.data.size(); ++i) {
    const double ma = mu_a.data[i], mb = mu_b.data[i];
    const double va = s_aa.data[i] - ma * ma;
    const double vb = s_bb.data[i] - mb * mb;
    const double cov = s_ab.data[i] - ma * mb;
    total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.data.size());
}

double psnr_y(const ImageRGB& gt, const ImageRGB& sr) {
  require_same_dims(gt, sr);
  return psnr_plane(crop_plane(rgb_to_y601(gt), kBorderCrop), crop_plane(rgb_to_y601(sr), kBorderCrop));
}

double ssim_y(const ImageRGB& gt, const ImageRGB& sr) {
  require_same_dims(gt, sr);
  return ssim_plane(crop_plane(rgb_to_y601(gt), kBorderCrop), crop_plane(rgb_to_y601(sr), kBorderCrop));
}

double perceptual_index(double niqe_value, double sr_score) { return 0.5 * ((10.0 - sr_score) + niqe_value); }

std::string format_metric(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

namespace {
std::string opt_field(const std::optional<double>& v) { return v ? format_metric(*v) : std::string(); }
}  // namespace

std::string QualityReport::to_csv() const {
  std::ostringstream os;
  os << "name,psnr_db,ssim,niqe,sr_score,pi\n";
  auto row = [&](const QualityRecord& r) {
    os << r.name << ',' << format_metric(r.psnr_db) << ',' << format_metric(r.ssim) << ','
       << opt_field(r.niqe) << ',' << opt_field(r.sr_score) << ',' << opt_field(r.pi) << '\n';
  };
  for (const auto& r : records) row(r);
  if (!records.empty()) row(mean);
  return os.str();
}

void QualityReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report '" + path.string() + "'");
  out << to_csv();
}

void finalize_report(QualityReport& report) {
  auto mean_of = [&](auto get) -> std::optional<double> {
    double total = 0.0;
    int n = 0;
    for (const auto& r : report.records) {
      const std::optional<double> v = get(r);
      if (v) {
        total += *v;
        ++n;
      }
    }
    if (n == 0) return std::nullopt;
    return total / n;
  };
  for (auto& r : report.records) {
    r.pi = (r.niqe && r.sr_score) ? std::optional<double>(perceptual_index(*r.niqe, *r.sr_score))
                                  : std::nullopt;
  }
  QualityRecord m;
  m.name = "__mean__";
  m.psnr_db = mean_of([](const QualityRecord& r) { return std::optional<double>(r.psnr_db); }).value_or(0.0);
  m.ssim = mean_of([](const QualityRecord& r) { return std::optional<double>(r.ssim); }).value_or(0.0);
  m.niqe = mean_of([](const QualityRecord& r) { return r.niqe; });
  m.sr_score = mean_of([](const QualityRecord& r) { return r.sr_score; });
  m.pi = mean_of([](const QualityRecord& r) { return r.pi; });
  report.mean = m;
}

QualityReport quality_report(const std::filesystem::path& gt_dir, const std::filesystem::path& sr_dir,
                             const PristineModel* pristine, const std::map<std::string, double>* sr_scores) {
  QualityReport report;
  std::map<std::string, std::filesystem::path> gt_files, sr_files;
  for (const auto& p : list_png_files(gt_dir)) gt_files[p.filename().string()] = p;
  for (const auto& p : list_png_files(sr_dir)) sr_files[p.filename().string()] = p;
  for (const auto& [name, _] : gt_files)
    if (!sr_files.count(name)) report.unmatched.push_back(name);
  for (const auto& [name, _] : sr_files)
    if (!gt_files.count(name)) report.unmatched.push_back(name);
  std::sort(report.unmatched.begin(), report.unmatched.end());

  for (const auto& [name, gt_path] : gt_files) {
    auto it = sr_files.find(name);
    if (it == sr_files.end()) continue;
    const auto gt = load_image(gt_path);
    const auto sr = load_image(it->second);
    QualityRecord r;
    r.name = name;
    try {
      r.psnr_db = psnr_y(gt, sr);
      r.ssim = ssim_y(gt, sr);
    } catch (const std::invalid_argument& e) {
      report.warnings.push_back(name + ": " + e.what());
      continue;
    }
    if (pristine) {
      try {
        r.niqe = niqe(sr, *pristine);
      } catch (const std::exception& e) {
        report.warnings.push_back(name + ": NIQE unavailable (" + e.what() + ")");
      }
    }
    if (sr_scores) {
      auto s = sr_scores->find(name);
      if (s == sr_scores->end()) s = sr_scores->find(std::filesystem::path(name).stem().string());
      if (s != sr_scores->end()) r.sr_score = s->second;
    }
    report.records.push_back(std::move(r));
  }
  if (report.records.empty()) report.warnings.push_back("no image name present in both directories");
  if (pristine && pristine->used_fallback) {
    report.warnings.push_back("pristine model was fit without sharpness selection (no patch passed)");
  }
  finalize_report(report);
  return report;
}

std::map<std::string, double> read_sr_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open SR score file '" + path.string() + "'");
  std::map<std::string, double> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": expected name,score");
    }
    const auto name = line.substr(0, comma);
    const auto value = line.substr(comma + 1);
    try {
      std::size_t used = 0;
      const double v = std::stod(value, &used);
      out[name] = v;
    } catch (const std::exception&) {
      if (lineno == 1) continue;
      throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": bad score '" + value + "'");
    }
  }
  return out;
}

}  // namespace fpsr::metrics
