#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

#include "fpsr/losses.hpp"
#include "fpsr/models.hpp"
#include "fpsr/ops.hpp"
#include "fpsr/resample.hpp"

namespace fpsr::testkit {

namespace {

using TD = Tensor<double>;

TD random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  TD t(std::move(shape));
  for (auto& v : t.mutable_data()) v = rng.uniform(lo, hi);
  t.set_requires_grad(true);
  return t;
}

// Magnitudes in [lo, hi] with random sign, keeping kinks at 0 out of reach.
TD away_from_zero(Shape shape, Rng& rng, double lo = 0.1, double hi = 1.0) {
  TD t(std::move(shape));
  for (auto& v : t.mutable_data()) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(lo, hi);
  t.set_requires_grad(true);
  return t;
}

double projected_value(const TD& out, const std::vector<double>& w) {
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) acc += out.data()[i] * w[i];
  return acc;
}

double evaluate(const GradInstance& inst, const std::vector<double>& w) {
  NoGradGuard guard;
  return projected_value(inst.forward(), w);
}

double rel_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

struct Sample {
  double value;
  /// The step actually taken, which can differ from the requested one by rounding.
  double step;
};

// Derivative at 0 from samples at 0, s1 and s2 (any distinct nonzero steps of one sign).
double one_sided(double f0, const Sample& a, const Sample& b) {
  const double s1 = a.step, s2 = b.step;
  return -(s1 + s2) / (s1 * s2) * f0 + s2 / (s1 * (s2 - s1)) * a.value - s1 / (s2 * (s2 - s1)) * b.value;
}

// Central difference at step h. A mismatch is re-examined with second-order
// one-sided differences at h and h / 10: near an isolated ReLU kink the side
// facing away from it is exact, while at a smooth point both sides agree with
// the central value, so a wrong analytic gradient still fails.
template <typename F>
double resolve_numeric(F&& sample, double h, double analytic, double floor, const GradCheckOptions& opts,
                       GradCheckResult& res) {
  const Sample up = sample(h), down = sample(-h);
  const double central = (up.value - down.value) / (up.step - down.step);
  if (rel_error(analytic, central, floor) < opts.tolerance) return central;
  const double f0 = sample(0.0).value;
  for (double step : {h, h / 10}) {
    for (double sign : {1.0, -1.0}) {
      const double est = one_sided(f0, sample(sign * step), sample(sign * 2 * step));
      if (rel_error(analytic, est, floor) < opts.tolerance) {
        ++res.kink_refinements;
        return est;
      }
    }
  }
  return central;
}

}  // namespace

GradCheckResult check_gradients(const GradCase& c, std::uint64_t seed, const GradCheckOptions& opts) {
  GradCheckResult res;
  res.name = c.name;
  Rng rng(seed);
  double worst = 0.0;
  auto note = [&](double err, const std::string& where) {
    if (err > worst || res.worst.empty()) {
      worst = std::max(worst, err);
      res.worst = where;
    }
  };
  for (int k = 0; k < opts.instances; ++k) {
    GradInstance inst = c.draw(rng);
    for (auto& t : inst.inputs) t.clear_grad();

    TD out = inst.forward();
    std::vector<double> w(static_cast<std::size_t>(out.numel()));
    for (auto& v : w) v = rng.uniform(-1.0, 1.0);
    TD weights(out.shape(), w);
    backward(ops::sum(ops::mul(out, weights)));

    std::vector<std::vector<double>> analytic;
    for (auto& t : inst.inputs) {
      if (t.has_grad())
        analytic.emplace_back(t.grad().begin(), t.grad().end());
      else
        analytic.emplace_back(static_cast<std::size_t>(t.numel()), 0.0);
    }

    for (std::size_t i = 0; i < inst.inputs.size(); ++i) {
      auto data = inst.inputs[i].mutable_data();
      const std::int64_t n = inst.inputs[i].numel();
      std::vector<std::int64_t> coords;
      if (n <= opts.max_coords) {
        for (std::int64_t j = 0; j < n; ++j) coords.push_back(j);
      } else {
        for (int j = 0; j < opts.max_coords; ++j) coords.push_back(rng.uniform_int(0, n - 1));
      }
      for (std::int64_t j : coords) {
        const double v = data[j];
        auto sample = [&](double step) {
          data[j] = v + step;
          const Sample out{evaluate(inst, w), data[j] - v};
          data[j] = v;
          return out;
        };
        const double a = analytic[i][static_cast<std::size_t>(j)];
        const double numeric =
            resolve_numeric(sample, 1e-5 * std::max(1.0, std::abs(v)), a, opts.scale_floor, opts, res);
        const double err = rel_error(a, numeric, opts.scale_floor);
        std::ostringstream where;
        where << "instance " << k << " input " << i << " coord " << j << " analytic " << a << " numeric "
              << numeric;
        note(err, where.str());
        ++res.coords;
      }
    }

    // Directional derivative over every coordinate at once.
    std::vector<std::vector<double>> dir;
    double predicted = 0.0;
    for (std::size_t i = 0; i < inst.inputs.size(); ++i) {
      std::vector<double> d(static_cast<std::size_t>(inst.inputs[i].numel()));
      for (std::size_t j = 0; j < d.size(); ++j) {
        d[j] = rng.uniform(-1.0, 1.0);
        predicted += d[j] * analytic[i][j];
      }
      dir.push_back(std::move(d));
    }
    std::vector<std::vector<double>> saved;
    for (auto& t : inst.inputs) saved.emplace_back(t.data().begin(), t.data().end());
    auto shift = [&](double s) {
      for (std::size_t i = 0; i < inst.inputs.size(); ++i) {
        auto data = inst.inputs[i].mutable_data();
        for (std::size_t j = 0; j < dir[i].size(); ++j) data[j] = saved[i][j] + s * dir[i][j];
      }
    };
    auto sample = [&](double step) {
      shift(step);
      const Sample out{evaluate(inst, w), step};
      shift(0.0);
      return out;
    };
    const double numeric = resolve_numeric(sample, 1e-6, predicted, 1.0, opts, res);
    const double err = rel_error(predicted, numeric, 1.0);
    std::ostringstream where;
    where << "instance " << k << " directional analytic " << predicted << " numeric " << numeric;
    note(err, where.str());
    ++res.instances;
  }
  res.max_rel_error = worst;
  res.passed = res.instances >= opts.instances && worst < opts.tolerance;
  return res;
}

std::vector<GradCase> op_grad_cases() {
  std::vector<GradCase> cases;
  auto unary = [&](std::string name, std::function<TD(const TD&)> f, std::function<TD(Rng&)> make) {
    cases.push_back({std::move(name), [f, make](Rng& rng) {
                       TD x = make(rng);
                       return GradInstance{{x}, [f, x] { return f(x); }};
                     }});
  };
  auto binary = [&](std::string name, std::function<TD(const TD&, const TD&)> f, Shape shape) {
    cases.push_back({std::move(name), [f, shape](Rng& rng) {
                       TD a = random_tensor(shape, rng);
                       TD b = random_tensor(shape, rng);
                       return GradInstance{{a, b}, [f, a, b] { return f(a, b); }};
                     }});
  };
  const Shape small{2, 3, 4};

  binary("add", [](const TD& a, const TD& b) { return ops::add(a, b); }, small);
  binary("sub", [](const TD& a, const TD& b) { return ops::sub(a, b); }, small);
  binary("mul", [](const TD& a, const TD& b) { return ops::mul(a, b); }, small);
  unary("scale", [](const TD& x) { return ops::scale(x, -1.7); }, [=](Rng& r) { return random_tensor(small, r); });
  unary("add_scalar", [](const TD& x) { return ops::add_scalar(x, 0.3); },
        [=](Rng& r) { return random_tensor(small, r); });
  unary("square", [](const TD& x) { return ops::square(x); }, [=](Rng& r) { return random_tensor(small, r); });
  unary("relu", [](const TD& x) { return ops::relu(x); }, [=](Rng& r) { return away_from_zero(small, r); });
  unary("leaky_relu", [](const TD& x) { return ops::leaky_relu(x, 0.2); },
        [=](Rng& r) { return away_from_zero(small, r); });
  unary("sigmoid", [](const TD& x) { return ops::sigmoid(x); },
        [=](Rng& r) { return random_tensor(small, r, -4, 4); });
  unary("softplus", [](const TD& x) { return ops::softplus(x); },
        [=](Rng& r) { return random_tensor(small, r, -4, 4); });
  unary("log_clamped", [](const TD& x) { return ops::log_clamped(x); },
        [=](Rng& r) { return random_tensor(small, r, 0.2, 2.0); });
  unary("sum", [](const TD& x) { return ops::sum(x); }, [=](Rng& r) { return random_tensor(small, r); });
  unary("mean", [](const TD& x) { return ops::mean(x); }, [=](Rng& r) { return random_tensor(small, r); });
  unary("mean_abs", [](const TD& x) { return ops::mean_abs(x); }, [=](Rng& r) { return away_from_zero(small, r); });
  unary("softmax", [](const TD& x) { return ops::softmax(x); },
        [=](Rng& r) { return random_tensor({3, 10}, r, -2, 2); });
  unary("cumsum", [](const TD& x) { return ops::cumsum(x); }, [=](Rng& r) { return random_tensor({3, 10}, r); });
  unary("global_avg_pool", [](const TD& x) { return ops::global_avg_pool(x); },
        [=](Rng& r) { return random_tensor({2, 3, 4, 5}, r); });
  unary("pixel_shuffle", [](const TD& x) { return ops::pixel_shuffle(x, 2); },
        [=](Rng& r) { return random_tensor({2, 8, 3, 3}, r); });
  unary("pixel_unshuffle", [](const TD& x) { return ops::pixel_unshuffle(x, 2); },
        [=](Rng& r) { return random_tensor({2, 2, 4, 6}, r); });
  unary("resize_bicubic_up", [](const TD& x) { return ops::resize_bicubic(x, Ratio{2, 1}); },
        [=](Rng& r) { return random_tensor({1, 2, 5, 4}, r); });
  unary("resize_bicubic_down", [](const TD& x) { return ops::resize_bicubic(x, Ratio{1, 2}); },
        [=](Rng& r) { return random_tensor({1, 2, 8, 6}, r); });
  unary("resample",
        [](const TD& x) {
          const auto rows = bicubic_axis_weights(5, 7, 7.0 / 5.0);
          const auto cols = bicubic_axis_weights(6, 3, 0.5);
          return ops::resample(x, rows, cols);
        },
        [=](Rng& r) { return random_tensor({2, 1, 5, 6}, r); });
  unary("reshape", [](const TD& x) { return x.reshape({4, 6}); }, [=](Rng& r) { return random_tensor(small, r); });
  unary("slice_batch", [](const TD& x) { return ops::slice_batch(x, 1, 2); },
        [=](Rng& r) { return random_tensor({4, 2, 3}, r); });
  binary("concat_batch", [](const TD& a, const TD& b) { return ops::concat_batch<double>({a, b, a}); }, small);

  cases.push_back({"dense", [](Rng& r) {
                     TD x = random_tensor({4, 10}, r), w = random_tensor({10, 3}, r), b = random_tensor({3}, r);
                     return GradInstance{{x, w, b}, [x, w, b] { return ops::dense(x, w, b); }};
                   }});
  struct ConvSpec {
    const char* name;
    Shape x, w;
    int stride, pad;
  };
  for (const ConvSpec& s : {ConvSpec{"conv2d_3x3_s1", {2, 3, 8, 8}, {4, 3, 3, 3}, 1, 1},
                            ConvSpec{"conv2d_3x3_s2", {2, 3, 7, 8}, {2, 3, 3, 3}, 2, 1},
                            ConvSpec{"conv2d_1x1_valid", {1, 4, 5, 5}, {3, 4, 1, 1}, 1, 0},
                            ConvSpec{"conv2d_3x3_valid", {1, 2, 6, 5}, {2, 2, 3, 3}, 1, 0}}) {
    cases.push_back({s.name, [s](Rng& r) {
                       TD x = random_tensor(s.x, r), w = random_tensor(s.w, r), b = random_tensor({s.w[0]}, r);
                       return GradInstance{{x, w, b}, [x, w, b, s] { return ops::conv2d(x, w, b, s.stride, s.pad); }};
                     }});
  }

  // Losses.
  cases.push_back({"recon_l1", [](Rng& r) {
                     TD gt = random_tensor({2, 3, 4, 4}, r, 0.0, 1.0);
                     TD sr = away_from_zero({2, 3, 4, 4}, r, 0.05, 0.5);
                     {
                       auto s = sr.mutable_data();
                       for (std::size_t i = 0; i < s.size(); ++i) s[i] += gt.data()[i];
                     }
                     return GradInstance{{gt, sr}, [gt, sr] { return losses::recon_l1(gt, sr); }};
                   }});
  unary("adversarial_gen", [](const TD& d) { return losses::adversarial_gen(d); },
        [=](Rng& r) { return random_tensor({6, 1}, r, 0.05, 0.95); });
  unary("adversarial_gen_logits", [](const TD& z) { return losses::adversarial_gen_logits(z); },
        [=](Rng& r) { return random_tensor({6, 1}, r, -4, 4); });
  cases.push_back({"disc_loss", [](Rng& r) {
                     TD real = random_tensor({2, 1}, r, 0.05, 0.95), fake = random_tensor({6, 1}, r, 0.05, 0.95);
                     return GradInstance{{real, fake}, [real, fake] { return losses::disc_loss(real, fake); }};
                   }});
  cases.push_back({"disc_loss_logits", [](Rng& r) {
                     TD real = random_tensor({2, 1}, r, -4, 4), fake = random_tensor({6, 1}, r, -4, 4);
                     return GradInstance{{real, fake}, [real, fake] { return losses::disc_loss_logits(real, fake); }};
                   }});
  cases.push_back({"score_loss", [](Rng& r) {
                     const losses::ScoreLossParams p{10.0, 0.8};
                     TD gt({4, 1}), sr({4, 1});
                     for (int i = 0; i < 4; ++i) {
                       double g = 0, s = 0;
                       do {
                         g = r.uniform(1, 10);
                         s = r.uniform(1, 10);
                       } while (std::abs((p.s_max - s) - p.alpha * (p.s_max - g)) < 0.1);
                       gt.mutable_data()[i] = g;
                       sr.mutable_data()[i] = s;
                     }
                     gt.set_requires_grad(true);
                     sr.set_requires_grad(true);
                     return GradInstance{{gt, sr}, [gt, sr, p] { return losses::score_loss(gt, sr, p); }};
                   }});
  binary("repr_loss", [](const TD& a, const TD& b) { return losses::repr_loss(a, b); }, Shape{3, 7});
  binary("emd_sq", [](const TD& a, const TD& b) { return losses::emd_sq(ops::softmax(a), ops::softmax(b)); },
         Shape{3, 10});
  cases.push_back({"total_gen_loss", [](Rng& r) {
                     std::vector<TD> parts;
                     for (int i = 0; i < 6; ++i) parts.push_back(random_tensor({}, r, 0, 2));
                     const auto w = losses::LossWeights::eq8();
                     return GradInstance{parts, [parts, w] {
                                           std::array<TD, 6> a;
                                           for (int i = 0; i < 6; ++i) a[i] = parts[i];
                                           return losses::total_gen_loss(a, w);
                                         }};
                   }});
  return cases;
}

namespace {

// Collects the parameters and moves the biases off their initial zeros, where
// a unit fed only by dead activations would sit exactly on a ReLU kink.
template <typename Model>
void mark_params(const Model& m, std::vector<TD>& out, Rng& r) {
  for (const auto& p : m.parameters()) {
    auto t = p.tensor;
    if (p.name.ends_with("bias")) {
      for (auto& v : t.mutable_data()) v += r.uniform(-0.2, 0.2);
    }
    out.push_back(t);
  }
}

}  // namespace

std::vector<GradCase> network_grad_cases() {
  std::vector<GradCase> cases;
  const models::EusrConfig tiny{4, 1, 1, 1.0};

  cases.push_back({"conv_leaky_dense_sigmoid", [](Rng& r) {
                     TD x = random_tensor({2, 2, 5, 5}, r);
                     TD w = random_tensor({3, 2, 3, 3}, r), b = random_tensor({3}, r);
                     TD dw = random_tensor({27, 2}, r, -0.3, 0.3), db = random_tensor({2}, r);
                     return GradInstance{{x, w, b, dw, db}, [x, w, b, dw, db] {
                                           TD h = ops::leaky_relu(ops::conv2d(x, w, b, 2, 1), 0.2);
                                           return ops::sigmoid(ops::dense(h.reshape({2, 27}), dw, db));
                                         }};
                   }});
  cases.push_back({"residual_block", [](Rng& r) {
                     auto block = std::make_shared<models::ResidualBlock<double>>(
                         models::ResidualBlock<double>::make(3, 0.5, r));
                     TD x = random_tensor({1, 3, 5, 5}, r);
                     std::vector<TD> in{x};
                     models::ParamList<double> ps;
                     block->collect("b", ps);
                     for (auto& p : ps) in.push_back(p.tensor);
                     return GradInstance{in, [block, x] { return (*block)(x); }};
                   }});
  for (int scale : models::kScales) {
    cases.push_back({"eusr_x" + std::to_string(scale), [tiny, scale](Rng& r) {
                       auto model = std::make_shared<models::Eusr<double>>(tiny, r.next_u64());
                       TD x = random_tensor({1, 3, 8, 8}, r, 0.0, 1.0);
                       std::vector<TD> in{x};
                       mark_params(*model, in, r);
                       return GradInstance{in, [model, x, scale] { return model->forward(x, scale); }};
                     }});
  }
  cases.push_back({"eusr_multipass", [tiny](Rng& r) {
                     auto model = std::make_shared<models::Eusr<double>>(tiny, r.next_u64());
                     TD x = random_tensor({1, 3, 8, 8}, r, 0.0, 1.0);
                     std::vector<TD> in{x};
                     mark_params(*model, in, r);
                     return GradInstance{in, [model, x] { return ops::concat_batch(models::multipass_x4(*model, x)); }};
                   }});
  cases.push_back({"discriminator", [](Rng& r) {
                     const models::DiscriminatorConfig cfg{2, 32, 4, 0.2};
                     auto model = std::make_shared<models::Discriminator<double>>(cfg, r.next_u64());
                     TD x = random_tensor({2, 3, 32, 32}, r, 0.0, 1.0);
                     std::vector<TD> in{x};
                     mark_params(*model, in, r);
                     return GradInstance{in, [model, x] { return model->forward(x); }};
                   }});
  auto predictor_case = [&](std::string name, int which) {
    cases.push_back({std::move(name), [which](Rng& r) {
                       const models::PredictorConfig cfg{2, 4, 16};
                       auto model = std::make_shared<models::ScorePredictor<double>>(cfg, r.next_u64());
                       TD x = random_tensor({2, 3, 16, 16}, r, 0.0, 1.0);
                       std::vector<TD> in{x};
                       mark_params(*model, in, r);
                       return GradInstance{in, [model, x, which] {
                                             auto out = model->forward(x);
                                             return which == 0 ? out.probs : which == 1 ? out.repr : out.mean_scores;
                                           }};
                     }});
  };
  predictor_case("predictor_probs", 0);
  predictor_case("predictor_repr", 1);
  predictor_case("predictor_mean", 2);
  return cases;
}

}  // namespace fpsr::testkit
