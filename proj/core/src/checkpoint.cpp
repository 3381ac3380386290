#include "fpsr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace fpsr {

namespace {

constexpr const char* kMagic = "FPSRCKPT";

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

bool valid_token(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (c == ' ' || c == '\n' || c == '\r' || c == '\t') return false;
  return true;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

const CheckpointTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

const CheckpointTensor& Checkpoint::at(const std::string& name) const {
  const auto* t = find(name);
  if (!t) throw CheckpointError("checkpoint has no tensor '" + name + "'");
  return *t;
}

void Checkpoint::put(std::string name, Shape shape, std::vector<float> values) {
  if (!valid_token(name)) throw CheckpointError("invalid tensor name '" + name + "'");
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
    throw CheckpointError("tensor '" + name + "' size does not match its shape");
  }
  for (auto& t : tensors) {
    if (t.name == name) {
      t.shape = std::move(shape);
      t.values = std::move(values);
      return;
    }
  }
  tensors.push_back({std::move(name), std::move(shape), std::move(values)});
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::string payload;
  std::ostringstream manifest;
  manifest << kMagic << ' ' << Checkpoint::kVersion << '\n';
  manifest << "config_digest " << (ckpt.config_digest.empty() ? "-" : ckpt.config_digest) << '\n';
  manifest << "step " << ckpt.step << '\n';
  for (const auto& [k, v] : ckpt.meta) {
    if (!valid_token(k) || v.find('\n') != std::string::npos) throw CheckpointError("invalid metadata '" + k + "'");
    manifest << "meta " << k << ' ' << v << '\n';
  }
  for (const auto& [k, v] : ckpt.rng) {
    if (!valid_token(k) || v.find('\n') != std::string::npos) throw CheckpointError("invalid rng stream '" + k + "'");
    manifest << "rng " << k << ' ' << v << '\n';
  }
  for (const auto& t : ckpt.tensors) {
    manifest << "tensor " << t.name << ' ' << t.shape.size();
    for (auto d : t.shape) manifest << ' ' << d;
    manifest << ' ' << payload.size() << ' ' << t.values.size() << '\n';
    for (float f : t.values) {
      const std::uint32_t bits = to_le(std::bit_cast<std::uint32_t>(f));
      char bytes[4];
      std::memcpy(bytes, &bits, 4);
      payload.append(bytes, 4);
    }
  }
  manifest << "payload " << payload.size() << ' ' << hex64(fnv1a64(payload)) << '\n';

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint '" + path.string() + "'");
    const std::string head = manifest.str();
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw CheckpointError("write failed for checkpoint '" + path.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_digest) {
  const std::string bytes = read_file(path);
  auto fail = [&](const std::string& why) { return CheckpointError("checkpoint '" + path.string() + "': " + why); };

  Checkpoint ckpt;
  std::size_t pos = 0;
  auto next_line = [&](std::string& line) {
    const auto nl = bytes.find('\n', pos);
    if (nl == std::string::npos) return false;
    line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return true;
  };

  std::string line;
  if (!next_line(line)) throw fail("empty or truncated file");
  {
    std::istringstream is(line);
    std::string magic;
    int version = 0;
    if (!(is >> magic >> version) || magic != kMagic) throw fail("not a checkpoint file");
    if (version != Checkpoint::kVersion) throw fail("unsupported version " + std::to_string(version));
  }
  struct Entry {
    std::string name;
    Shape shape;
    std::size_t offset;
    std::size_t count;
  };
  std::vector<Entry> entries;
  std::size_t payload_size = 0;
  std::string checksum;
  bool have_payload = false;
  while (!have_payload) {
    if (!next_line(line)) throw fail("manifest is truncated");
    std::istringstream is(line);
    std::string key;
    is >> key;
    if (key == "config_digest") {
      is >> ckpt.config_digest;
      if (ckpt.config_digest == "-") ckpt.config_digest.clear();
    } else if (key == "step") {
      if (!(is >> ckpt.step)) throw fail("bad step line");
    } else if (key == "meta" || key == "rng") {
      std::string name;
      if (!(is >> name)) throw fail("bad " + key + " line");
      std::string rest;
      std::getline(is, rest);
      if (!rest.empty() && rest.front() == ' ') rest.erase(0, 1);
      (key == "meta" ? ckpt.meta : ckpt.rng)[name] = rest;
    } else if (key == "tensor") {
      Entry e;
      std::size_t rank = 0;
      if (!(is >> e.name >> rank) || rank > 8) throw fail("bad tensor line");
      e.shape.resize(rank);
      for (auto& d : e.shape)
        if (!(is >> d) || d < 0) throw fail("bad tensor shape for '" + e.name + "'");
      if (!(is >> e.offset >> e.count)) throw fail("bad tensor extent for '" + e.name + "'");
      if (static_cast<std::int64_t>(e.count) != shape_numel(e.shape)) {
        throw fail("tensor '" + e.name + "' count does not match its shape");
      }
      entries.push_back(std::move(e));
    } else if (key == "payload") {
      if (!(is >> payload_size >> checksum)) throw fail("bad payload line");
      have_payload = true;
    } else {
      throw fail("unknown manifest entry '" + key + "'");
    }
  }
  if (bytes.size() - pos != payload_size) throw fail("payload is truncated or has trailing bytes");
  const std::string_view payload(bytes.data() + pos, payload_size);
  if (hex64(fnv1a64(payload)) != checksum) throw fail("payload checksum mismatch");

  for (const auto& e : entries) {
    if (e.offset + 4 * e.count > payload_size || e.offset % 4 != 0) throw fail("tensor '" + e.name + "' out of range");
    std::vector<float> values(e.count);
    for (std::size_t i = 0; i < e.count; ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, payload.data() + e.offset + 4 * i, 4);
      values[i] = std::bit_cast<float>(to_le(bits));
    }
    ckpt.tensors.push_back({e.name, e.shape, std::move(values)});
  }
  if (!expected_digest.empty() && ckpt.config_digest != expected_digest) {
    throw fail("configuration digest " + ckpt.config_digest + " does not match the current configuration " +
               expected_digest);
  }
  return ckpt;
}

void store_parameters(Checkpoint& ckpt, const std::string& prefix, const models::ParamList<float>& params) {
  for (const auto& p : params) {
    const auto d = p.tensor.data();
    ckpt.put(prefix + p.name, p.tensor.shape(), std::vector<float>(d.begin(), d.end()));
  }
}

void restore_parameters(const Checkpoint& ckpt, const std::string& prefix, const models::ParamList<float>& params) {
  for (const auto& p : params) {
    const auto& t = ckpt.at(prefix + p.name);
    if (t.shape != p.tensor.shape()) {
      throw CheckpointError("tensor '" + prefix + p.name + "' has shape " + shape_str(t.shape) + ", model expects " +
                            shape_str(p.tensor.shape()));
    }
    auto target = p.tensor;
    auto dst = target.mutable_data();
    std::copy(t.values.begin(), t.values.end(), dst.begin());
  }
}

void store_adam(Checkpoint& ckpt, const std::string& prefix, const Adam<float>& adam) {
  std::ostringstream counts;
  for (std::size_t i = 0; i < adam.size(); ++i) {
    const auto& p = adam.params()[i];
    ckpt.put(prefix + "m/" + p.name, p.tensor.shape(), adam.first_moment(i));
    ckpt.put(prefix + "v/" + p.name, p.tensor.shape(), adam.second_moment(i));
    counts << (i ? " " : "") << adam.updates(i);
  }
  ckpt.meta[prefix + "updates"] = counts.str();
}

void restore_adam(const Checkpoint& ckpt, const std::string& prefix, Adam<float>& adam) {
  auto it = ckpt.meta.find(prefix + "updates");
  if (it == ckpt.meta.end()) throw CheckpointError("checkpoint has no optimizer state '" + prefix + "'");
  std::istringstream counts(it->second);
  for (std::size_t i = 0; i < adam.size(); ++i) {
    const auto& p = adam.params()[i];
    std::int64_t n = 0;
    if (!(counts >> n)) throw CheckpointError("optimizer state '" + prefix + "' has too few counters");
    const auto& m = ckpt.at(prefix + "m/" + p.name);
    const auto& v = ckpt.at(prefix + "v/" + p.name);
    adam.set_state(i, m.values, v.values, n);
  }
}

bool same_file_bytes(const std::filesystem::path& a, const std::filesystem::path& b) {
  return read_file(a) == read_file(b);
}

}  // namespace fpsr
