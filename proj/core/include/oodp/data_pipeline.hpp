#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "oodp/env_sim.hpp"
#include "oodp/tensor.hpp"

namespace oodp::data {

/// One (frame_t, action, frame_t+1) transition with privileged agent
/// positions (top-left pixel, row then column).
struct TransitionRecord {
  env::Image frame_t;
  env::Action action = env::Action::Noop;
  env::Image frame_t1;
  std::array<std::int16_t, 2> pos_t{};
  std::array<std::int16_t, 2> pos_t1{};
  std::int32_t env_id = 0;

  [[nodiscard]] bool changed() const { return pos_t != pos_t1; }
  [[nodiscard]] std::array<int, 2> motion() const {
    return {pos_t1[0] - pos_t[0], pos_t1[1] - pos_t[1]};
  }
  friend bool operator==(const TransitionRecord&, const TransitionRecord&) = default;
};

/// A single random-policy rollout of n_steps transitions from the layout's
/// spawn point. Actions are uniform over all five codes.
std::vector<TransitionRecord> collect(const env::EnvLayout& layout, int n_steps,
                                      std::uint64_t seed, std::int32_t env_id = 0,
                                      const env::Physics& physics = {});

class BalanceError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Downsamples the majority of changed/changeless records to the minority
/// count and shuffles the result with `seed`.
std::vector<TransitionRecord> balance(const std::vector<TransitionRecord>& records,
                                      std::uint64_t seed);

struct ProposalOptions {
  double tau = 0.1;  // in [-1, 1] pixel units
  int radius = 2;    // square dilation radius
};

/// Binary H×W mask from frame differencing followed by dilation.
struct ProposalMask {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> bits;
  [[nodiscard]] std::size_t count() const;
};

ProposalMask compute_proposal_mask(const env::Image& frame_t, const env::Image& frame_t1,
                                   const ProposalOptions& opts = {});

/// Converts bytes to the model's [-1, 1] frame convention, written into
/// sample n of `out` (shape [N, 3, H, W]).
template <typename T>
void image_to_frame(const env::Image& img, Tensor<T>& out, int n);
template <typename T>
Tensor<T> image_to_frame(const env::Image& img);
/// Inverse conversion with rounding and clamping.
template <typename T>
env::Image frame_to_image(const Tensor<T>& frame, int n = 0);

// ----------------------------------------------------------- dataset IO

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class DatasetVersionError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};
class DatasetTruncatedError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};
class DatasetChecksumError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};

struct DatasetInfo {
  int height = 0;
  int width = 0;
  int num_actions = env::kNumActions;
  std::size_t count = 0;
  std::vector<std::int32_t> env_ids;
  std::vector<std::uint64_t> seeds;
};

struct Dataset {
  DatasetInfo info;
  std::vector<TransitionRecord> records;
};

inline constexpr int kDatasetVersion = 1;

/// Writes `dir/manifest.txt` and `dir/records.bin`.
void write_dataset(const std::vector<TransitionRecord>& records, const std::filesystem::path& dir,
                   const std::vector<std::uint64_t>& seeds = {});
Dataset read_dataset(const std::filesystem::path& dir);

std::uint32_t crc32(const std::uint8_t* data, std::size_t size);

}  // namespace oodp::data
