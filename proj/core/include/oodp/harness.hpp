#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "oodp/data_pipeline.hpp"
#include "oodp/env_sim.hpp"
#include "oodp/model.hpp"
#include "oodp/objective.hpp"

namespace oodp::harness {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a training run needs. Loss weights default to the variant's
/// published values; a `lambda_*` key in the config file overrides one.
struct TrainConfig {
  int n_static = 3;
  int n_dynamic = 1;
  int n_actions = env::kNumActions;
  int window = 33;
  objective::Variant variant = objective::Variant::WithoutProposal;
  struct WeightOverrides {
    std::optional<double> prediction, entropy, reconstruction, consistency, background, proposal;
  } weight_overrides;
  double learning_rate = 1e-4;
  int batch_size = 16;
  std::int64_t max_steps = 50000;
  std::uint64_t seed = 1;
  std::int64_t checkpoint_every = 5000;
  /// Fraction of training records held out for best-by-validation selection.
  double val_fraction = 0.1;
  int eval_transitions = 2000;
  std::string train_data;
  std::string test_data;
  std::string out_dir;

  [[nodiscard]] objective::LossWeights weights() const;
  /// Throws ConfigError when an invariant is violated.
  void validate() const;
};

/// Flat `key = value` text, `#` comments. Unknown keys are errors.
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);
std::string to_text(const TrainConfig& cfg);

ModelConfig model_config(const TrainConfig& cfg, int height, int width);

/// Converts records[indices] into model tensors; proposals are filled only
/// when `with_proposals` is set.
TrainBatch<float> make_batch(std::span<const data::TransitionRecord> records, std::span<const std::size_t> indices,
                             bool with_proposals);

struct EvalMetrics {
  std::array<double, 3> accuracy{};  // n-error for n = 0, 1, 2
  double rmse = 0;
  std::array<double, 3> baseline_accuracy{};  // zero-motion predictor
  double baseline_rmse = 0;
  std::size_t count = 0;
  std::size_t degenerate = 0;
};

/// One evaluated transition: unrounded predicted agent motion and the
/// simulator's displacement.
struct MotionSample {
  double u = 0;
  double v = 0;
  std::array<int, 2> truth{};
  bool degenerate = false;
};

/// n-error hit iff max(|round(V) − Δ|) ≤ n; degenerate samples are misses.
/// RMSE = sqrt(mean ‖V − Δ‖²) with V = 0 for degenerate samples.
EvalMetrics score(std::span<const MotionSample> samples);

/// Predicted agent motion for each record. With several dynamic masks the
/// one holding the most mass inside the agent's sprite_px square is used.
std::vector<MotionSample> predict_agent_motions(OodpModel<float>& model,
                                                std::span<const data::TransitionRecord> records,
                                                int batch = 32, int sprite_px = 8);

EvalMetrics evaluate(OodpModel<float>& model, std::span<const data::TransitionRecord> records);

struct TrainHooks {
  std::function<void(std::int64_t step, const objective::LossBundle&)> on_step;
  std::function<void(std::int64_t step, const EvalMetrics&)> on_validation;
};

struct TrainResult {
  OodpModel<float> model;  // best-by-validation if a validation slice exists
  std::int64_t steps = 0;
  std::int64_t best_step = 0;
  double best_val_accuracy = -1;
  std::vector<double> total_loss;  // per step
};

/// Adam over shuffled minibatches. Writes `train_log.csv` and periodic
/// checkpoints when cfg.out_dir is set. Deterministic for a fixed seed.
TrainResult train(const TrainConfig& cfg, std::span<const data::TransitionRecord> records,
                  const TrainHooks& hooks = {});

/// Balanced transitions gathered from fresh random-policy episodes, the
/// same count from every layout. env_id is first_env_id + layout index.
std::vector<data::TransitionRecord> collect_balanced(std::span<const env::EnvLayout> layouts, int per_env,
                                                     std::uint64_t seed, int episode_len = 100,
                                                     int first_env_id = 0);

struct SuiteRow {
  int k = 0;
  int m = 0;
  objective::Variant variant = objective::Variant::WithoutProposal;
  EvalMetrics train;
  EvalMetrics unseen;
};

struct SuiteOptions {
  int train_per_env = 2000;
  int eval_per_env = 200;
  std::uint64_t suite_seed = 7;
  env::LayoutSpec layout_spec{};
  std::function<void(const std::string&)> progress;
};

/// One model per k, trained on the first k layouts of a shared suite and
/// evaluated on those layouts and on the same m unseen layouts.
std::vector<SuiteRow> run_generalization_suite(const TrainConfig& cfg, std::span<const int> k_list, int m,
                                               const SuiteOptions& opts = {});

/// Table-1 shape: n-error accuracy for training and unseen layouts.
void write_accuracy_table(std::ostream& out, std::span<const SuiteRow> rows);
/// Table-2 shape: motion RMSE for training and unseen layouts.
void write_rmse_table(std::ostream& out, std::span<const SuiteRow> rows);

struct ClassIoU {
  env::Cell cell = env::Cell::Free;
  int best_channel = -1;
  double iou = 0;
};

/// Best-matching static mask for every cell class present in the layouts.
/// Masks are binarized by per-pixel argmax; agent sprite pixels are ignored.
std::vector<ClassIoU> static_mask_iou(OodpModel<float>& model, std::span<const data::TransitionRecord> records,
                                      std::span<const env::EnvLayout> layouts_by_env_id);

struct RedundancyReport {
  int n_static_matched = 3;
  int n_static_oversized = 5;
  EvalMetrics matched;
  EvalMetrics oversized;
  std::vector<ClassIoU> coverage_matched;
  std::vector<ClassIoU> coverage_oversized;
};

RedundancyReport redundancy_study(const TrainConfig& cfg, std::span<const data::TransitionRecord> train_records,
                                  std::span<const data::TransitionRecord> test_records,
                                  std::span<const env::EnvLayout> layouts_by_env_id, int n_static_oversized = 5);

inline constexpr double kMaskThreshold = 0.5;

/// Writes, per record: the input frame, one masked image per object
/// (pixels whose mask exceeds 0.5), the background, the predicted next
/// frame and a proposal overlay, plus `metadata.txt`. Returns the files.
std::vector<std::filesystem::path> visualize(OodpModel<float>& model,
                                             std::span<const data::TransitionRecord> records,
                                             const std::filesystem::path& out_dir);

}  // namespace oodp::harness
