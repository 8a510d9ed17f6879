#pragma once

#include <filesystem>
#include <stdexcept>

#include "oodp/model.hpp"

namespace oodp {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kCheckpointVersion = 1;

/// Little-endian binary archive: magic "OODPCKPT", u32 version, the model
/// config, then every parameter and buffer as (name, shape, f32 data).
void save_checkpoint(OodpModel<float>& model, const std::filesystem::path& path);

/// Builds a model from the stored config and restores all tensors by name.
OodpModel<float> load_checkpoint(const std::filesystem::path& path);

/// Copies tensors between two models of the same config.
void copy_state(OodpModel<float>& from, OodpModel<float>& to);

/// FNV-1a over all parameter and buffer bytes, in order.
std::uint64_t state_hash(OodpModel<float>& model);

}  // namespace oodp
