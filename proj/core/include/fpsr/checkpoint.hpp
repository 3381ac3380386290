#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "fpsr/models.hpp"
#include "fpsr/optim.hpp"
#include "fpsr/rng.hpp"

namespace fpsr {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

/// Everything needed to resume a run: named float32 tensors, the schedule
/// position, every RNG stream, free-form metadata, and the digest of the
/// configuration that produced it.
struct Checkpoint {
  static constexpr int kVersion = 1;

  std::string config_digest;
  std::int64_t step = 0;
  std::map<std::string, std::string> meta;
  std::map<std::string, std::string> rng;
  std::vector<CheckpointTensor> tensors;

  const CheckpointTensor* find(const std::string& name) const;
  const CheckpointTensor& at(const std::string& name) const;
  void put(std::string name, Shape shape, std::vector<float> values);
};

/// Plain-text manifest followed by a little-endian float32 payload. The file
/// is written next to its destination and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Rejects unknown versions, truncated or corrupted payloads, and (when
/// `expected_digest` is non-empty) a configuration digest mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_digest = "");

void store_parameters(Checkpoint& ckpt, const std::string& prefix, const models::ParamList<float>& params);
/// Copies `prefix + name` tensors into `params`; every parameter must be present with its shape.
void restore_parameters(const Checkpoint& ckpt, const std::string& prefix, const models::ParamList<float>& params);

void store_adam(Checkpoint& ckpt, const std::string& prefix, const Adam<float>& adam);
void restore_adam(const Checkpoint& ckpt, const std::string& prefix, Adam<float>& adam);

/// Byte-for-byte equality of two checkpoint files' contents.
bool same_file_bytes(const std::filesystem::path& a, const std::filesystem::path& b);

}  // namespace fpsr
