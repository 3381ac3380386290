#include "fpsr/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "fpsr/rng.hpp"

namespace fpsr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size() || !std::isfinite(out)) {
    throw ConfigError("'" + key + "' expects a real number, got '" + v + "'");
  }
  return out;
}

std::int64_t to_int(const std::string& key, const std::string& v) {
  std::int64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    // Accept integral reals such as 1e6.
    const double d = to_double(key, v);
    if (d != std::floor(d) || std::abs(d) > 9e15) throw ConfigError("'" + key + "' expects an integer, got '" + v + "'");
    return static_cast<std::int64_t>(d);
  }
  return out;
}

int to_int32(const std::string& key, const std::string& v) {
  const auto x = to_int(key, v);
  if (x < -2147483647 || x > 2147483647) throw ConfigError("'" + key + "' is out of range");
  return static_cast<int>(x);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("'" + key + "' expects an unsigned integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError("'" + key + "' expects true or false, got '" + v + "'");
}

std::string real_text(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Field {
  const char* key;
  bool digested;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define FPSR_REAL(KEY, MEMBER, DIGEST)                                                              \
  Field {                                                                                           \
    KEY, DIGEST, [](RunConfig& c, const std::string& v) { c.MEMBER = to_double(KEY, v); },          \
        [](const RunConfig& c) { return real_text(c.MEMBER); }                                     \
  }
#define FPSR_INT(KEY, MEMBER, DIGEST)                                                               \
  Field {                                                                                           \
    KEY, DIGEST, [](RunConfig& c, const std::string& v) { c.MEMBER = to_int32(KEY, v); },           \
        [](const RunConfig& c) { return std::to_string(c.MEMBER); }                                \
  }
#define FPSR_INT64(KEY, MEMBER, DIGEST)                                                             \
  Field {                                                                                           \
    KEY, DIGEST, [](RunConfig& c, const std::string& v) { c.MEMBER = to_int(KEY, v); },             \
        [](const RunConfig& c) { return std::to_string(c.MEMBER); }                                \
  }
#define FPSR_TEXT(KEY, MEMBER, DIGEST)                                                              \
  Field {                                                                                           \
    KEY, DIGEST, [](RunConfig& c, const std::string& v) { c.MEMBER = v; },                          \
        [](const RunConfig& c) { return c.MEMBER; }                                                \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      FPSR_TEXT("run.profile", profile, true),
      Field{"run.seed", true, [](RunConfig& c, const std::string& v) { c.seed = to_u64("run.seed", v); },
            [](const RunConfig& c) { return std::to_string(c.seed); }},
      FPSR_INT64("run.scale_factor", scale_factor, true),
      FPSR_TEXT("run.output_dir", output_dir, false),
      FPSR_INT64("run.checkpoint_every", checkpoint_every, false),

      FPSR_INT("model.channels", eusr.channels, true),
      FPSR_INT("model.shared_blocks", eusr.shared_blocks, true),
      FPSR_INT("model.upscale_blocks", eusr.upscale_blocks, true),
      FPSR_REAL("model.residual_scaling", eusr.residual_scaling, true),
      FPSR_INT("model.disc_width", disc.width, true),
      FPSR_INT("model.disc_input", disc.input_size, true),
      FPSR_INT("model.disc_hidden", disc.hidden, true),
      FPSR_REAL("model.disc_leaky", disc.leaky_alpha, true),
      FPSR_INT("model.pred_stem", predictor.stem, true),
      FPSR_INT("model.pred_repr", predictor.repr, true),
      FPSR_INT("model.pred_min_input", predictor.min_input, true),

      FPSR_TEXT("data.train_source", train_source, true),
      FPSR_INT("data.synth_size", synth_size, true),
      FPSR_TEXT("data.aesthetic_source", aesthetic_source, true),
      FPSR_TEXT("data.subjective_source", subjective_source, true),
      FPSR_INT("data.scored_size", scored_size, true),
      FPSR_TEXT("data.eval_source", eval_source, true),

      FPSR_INT64("pretrain.steps", pretrain.steps, true),
      FPSR_REAL("pretrain.lr", pretrain.lr, true),
      FPSR_INT64("pretrain.halving", pretrain.halving, true),
      FPSR_INT("pretrain.batch", pretrain.batch, true),
      FPSR_INT("pretrain.lr_patch", pretrain.lr_patch, true),

      FPSR_REAL("predictor.stage1_lr", predict.stage1_lr, true),
      FPSR_REAL("predictor.stage2_lr", predict.stage2_lr, true),
      FPSR_INT("predictor.stage1_batch", predict.stage1_batch, true),
      FPSR_INT("predictor.stage2_batch", predict.stage2_batch, true),
      FPSR_REAL("predictor.eps", predict.eps, true),
      FPSR_INT("predictor.stage1_epochs", predict.stage1_epochs, true),
      FPSR_INT("predictor.stage2_epochs", predict.stage2_epochs, true),
      FPSR_REAL("predictor.val_fraction", predict.val_fraction, true),

      FPSR_INT64("perceptual.steps", perceptual.steps, true),
      FPSR_REAL("perceptual.gen_lr", perceptual.gen_lr, true),
      FPSR_REAL("perceptual.disc_lr", perceptual.disc_lr, true),
      FPSR_REAL("perceptual.eps", perceptual.eps, true),
      FPSR_INT("perceptual.patches", perceptual.patches, true),
      Field{"perceptual.multipass", true,
            [](RunConfig& c, const std::string& v) { c.perceptual.multipass = to_bool("perceptual.multipass", v); },
            [](const RunConfig& c) { return std::string(c.perceptual.multipass ? "true" : "false"); }},
      FPSR_TEXT("perceptual.weights", perceptual.weights, true),
      FPSR_REAL("perceptual.alpha_as", perceptual.alpha_as, true),
      FPSR_REAL("perceptual.alpha_ss", perceptual.alpha_ss, true),
      FPSR_REAL("perceptual.s_max", perceptual.s_max, true),
      FPSR_TEXT("perceptual.pretrained", perceptual.pretrained, false),
      FPSR_TEXT("perceptual.aesthetic", perceptual.aesthetic, false),
      FPSR_TEXT("perceptual.subjective", perceptual.subjective, false),
  };
  return table;
}

#undef FPSR_REAL
#undef FPSR_INT
#undef FPSR_INT64
#undef FPSR_TEXT

const Field* find_field(const std::string& key) {
  for (const auto& f : fields())
    if (key == f.key) return &f;
  return nullptr;
}

}  // namespace

ConfigMap parse_config_text(const std::string& text, const std::string& origin) {
  ConfigMap out;
  std::istringstream in(text);
  std::string line, section = "run";
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line.erase(comment);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError(where + ": empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(where + ": empty key");
    out[key.find('.') == std::string::npos ? section + "." + key : key] = trim(line.substr(eq + 1));
  }
  return out;
}

ConfigMap read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path.string());
}

losses::LossWeights parse_weights(const std::string& spec) {
  if (spec == "eq8") return losses::LossWeights::eq8();
  if (spec.rfind("eq10", 0) == 0) {
    double ar = 0.05, ap = 1.0;
    std::stringstream ss(spec.substr(4));
    std::string part;
    while (std::getline(ss, part, ':')) {
      if (part.empty()) continue;
      const auto eq = part.find('=');
      if (eq == std::string::npos) throw ConfigError("bad weight preset '" + spec + "'");
      const auto k = part.substr(0, eq);
      const auto v = to_double("weights", part.substr(eq + 1));
      if (k == "ar") {
        ar = v;
      } else if (k == "ap") {
        ap = v;
      } else {
        throw ConfigError("unknown parameter '" + k + "' in weight preset '" + spec + "'");
      }
    }
    auto w = losses::LossWeights::eq10(ar, ap);
    try {
      w.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("weight preset '") + spec + "': " + e.what());
    }
    return w;
  }
  std::vector<double> vals;
  std::stringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ',')) vals.push_back(to_double("weights", trim(part)));
  if (vals.size() != 6) throw ConfigError("weights must be eq8, eq10:ar=..:ap=.. or six reals, got '" + spec + "'");
  losses::LossWeights w{vals[0], vals[1], vals[2], vals[3], vals[4], vals[5]};
  try {
    w.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return w;
}

RunConfig RunConfig::desk() {
  RunConfig c;
  c.profile = "desk";
  c.scale_factor = 500;
  c.eusr = models::EusrConfig::desk();
  c.disc = models::DiscriminatorConfig::desk();
  c.predictor = models::PredictorConfig::desk();
  c.pretrain.batch = 8;
  c.pretrain.lr_patch = 12;
  c.pretrain.lr = 1e-3;
  c.pretrain.halving = 500000;
  c.predict.stage1_lr = 1e-2;
  c.predict.stage2_lr = 1e-3;
  c.predict.stage1_batch = 16;
  c.predict.stage2_batch = 16;
  c.predict.stage1_epochs = 5;
  c.predict.stage2_epochs = 60;
  return c;
}

RunConfig RunConfig::paper() {
  RunConfig c;
  c.profile = "paper";
  c.scale_factor = 1;
  c.eusr = models::EusrConfig::paper();
  c.disc = models::DiscriminatorConfig::paper();
  c.predictor = models::PredictorConfig::paper();
  c.scored_size = 224;
  c.synth_size = 384;
  return c;
}

void RunConfig::apply(const std::string& key, const std::string& value) {
  const Field* f = find_field(key);
  if (!f) throw ConfigError("unknown setting '" + key + "'");
  if (key == "run.profile") {
    if (value != "desk" && value != "paper") throw ConfigError("profile must be desk or paper, got '" + value + "'");
  }
  f->set(*this, value);
}

RunConfig RunConfig::from_map(const ConfigMap& values) {
  RunConfig c = desk();
  if (auto it = values.find("run.profile"); it != values.end()) {
    if (it->second == "paper") {
      c = paper();
    } else if (it->second != "desk") {
      throw ConfigError("profile must be desk or paper, got '" + it->second + "'");
    }
  }
  for (const auto& [k, v] : values) {
    if (k == "run.profile") continue;
    c.apply(k, v);
  }
  c.validate();
  return c;
}

void RunConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  try {
    eusr.validate();
    disc.validate();
    predictor.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  check(scale_factor >= 1, "run.scale_factor must be >= 1");
  check(checkpoint_every >= 0, "run.checkpoint_every must be >= 0");
  check(synth_size >= 8, "data.synth_size must be >= 8");
  check(scored_size >= predictor.min_input, "data.scored_size is below the predictor's minimum input");
  check(pretrain.steps >= 1 && pretrain.halving >= 0, "pretrain step counts must be positive");
  check(pretrain.lr > 0, "pretrain.lr must be positive");
  check(pretrain.batch >= 1, "pretrain.batch must be >= 1");
  check(pretrain.lr_patch >= 8, "pretrain.lr_patch must be >= 8");
  check(predict.stage1_lr > 0 && predict.stage2_lr > 0 && predict.eps > 0, "predictor rates must be positive");
  check(predict.stage1_batch >= 1 && predict.stage2_batch >= 1, "predictor batches must be >= 1");
  check(predict.stage1_epochs >= 0 && predict.stage2_epochs >= 0, "predictor epochs must be >= 0");
  check(predict.val_fraction > 0 && predict.val_fraction < 1, "predictor.val_fraction must lie in (0,1)");
  check(perceptual.steps >= 1, "perceptual.steps must be >= 1");
  check(perceptual.gen_lr > 0 && perceptual.disc_lr > 0 && perceptual.eps > 0, "perceptual rates must be positive");
  check(perceptual.patches >= 1, "perceptual.patches must be >= 1");
  check(disc.input_size % 4 == 0, "model.disc_input must be a multiple of 4");
  check(disc.input_size / 4 >= 8, "model.disc_input must be at least 32");
  check(disc.input_size <= synth_size || train_source.rfind("synthetic:", 0) != 0,
        "model.disc_input exceeds data.synth_size");
  check(disc.input_size >= predictor.min_input, "model.disc_input is below the predictor's minimum input");
  try {
    weights();
    aesthetic_params().validate();
    subjective_params().validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::int64_t RunConfig::pretrain_steps() const { return std::max<std::int64_t>(1, pretrain.steps / scale_factor); }
std::int64_t RunConfig::pretrain_halving() const {
  return pretrain.halving == 0 ? 0 : std::max<std::int64_t>(1, pretrain.halving / scale_factor);
}
std::int64_t RunConfig::perceptual_steps() const {
  return std::max<std::int64_t>(1, perceptual.steps / scale_factor);
}

int RunConfig::predictor_epochs(const std::string& kind, int stage) const {
  int full_epochs = 0;
  if (kind == "aesthetic") {
    full_epochs = 5;
  } else if (kind == "subjective") {
    full_epochs = 100;
  } else {
    throw ConfigError("predictor kind must be aesthetic or subjective, got '" + kind + "'");
  }
  if (stage != 1 && stage != 2) throw ConfigError("predictor stage must be 1 or 2");
  const int explicit_epochs = stage == 1 ? predict.stage1_epochs : predict.stage2_epochs;
  if (explicit_epochs > 0) return explicit_epochs;
  return static_cast<int>(std::max<std::int64_t>(1, full_epochs / scale_factor));
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  std::string section;
  for (const auto& f : fields()) {
    const std::string key = f.key;
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      os << (section.empty() ? "" : "\n") << '[' << sec << "]\n";
      section = sec;
    }
    os << key.substr(dot + 1) << " = " << f.get(*this) << '\n';
  }
  return os.str();
}

std::string RunConfig::digest() const {
  std::string canon;
  for (const auto& f : fields()) {
    if (!f.digested) continue;
    canon += f.key;
    canon += '=';
    canon += f.get(*this);
    canon += '\n';
  }
  std::ostringstream os;
  os << std::hex << fnv1a64(canon);
  return os.str();
}

}  // namespace fpsr
