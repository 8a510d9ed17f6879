#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "oodp/composition.hpp"
#include "oodp/data_pipeline.hpp"
#include "oodp/dynamics.hpp"
#include "oodp/env_sim.hpp"
#include "oodp/objective.hpp"
#include "oodp/perception.hpp"

namespace oodp {

struct ModelConfig {
  int n_static = 3;
  int n_dynamic = 1;
  int height = 80;
  int width = 80;
  int window = 33;
  std::uint64_t seed = 1;

  [[nodiscard]] int n_objects() const { return n_static + n_dynamic; }
};

template <typename T>
struct TrainBatch {
  Tensor<T> frames_t;   // [N, 3, H, W]
  Tensor<T> frames_t1;  // [N, 3, H, W]
  std::vector<env::Action> actions;
  std::vector<data::ProposalMask> proposals;  // only read by OODP+p
};

/// Everything the model infers for a batch of current frames.
template <typename T>
struct Prediction {
  perception::MaskSet<T> masks;
  Tensor<T> background;
  std::vector<Vec2<T>> centers;  // n * n_D + j
  std::vector<Vec2<T>> motions;  // n * n_D + j, zero where degenerate
  std::vector<std::uint8_t> degenerate;
  Tensor<T> next_frame;
};

/// Object Detector, Background Extractor and Dynamics Net trained jointly.
template <typename T>
class OodpModel {
 public:
  explicit OodpModel(const ModelConfig& cfg);

  [[nodiscard]] const ModelConfig& config() const { return cfg_; }

  /// Zeroes all gradients, runs the training-mode forward pass on both
  /// frames of every record and accumulates d total / d parameters.
  ///
  /// Crop centres are constants of the graph. `centers`, when given,
  /// replaces the mask-derived values (n * n_D + j order).
  objective::LossBundle compute_gradients(const TrainBatch<T>& batch, objective::Variant variant,
                                          const objective::LossWeights& weights,
                                          const std::vector<Vec2<T>>* centers = nullptr);

  /// Evaluation-mode forward pass.
  Prediction<T> predict(const Tensor<T>& frames, std::span<const env::Action> actions);

  std::vector<nn::Parameter<T>*> parameters();
  std::vector<std::pair<std::string, Tensor<T>*>> buffers();

  perception::ObjectDetector<T>& detector() { return detector_; }
  perception::BackgroundExtractor<T>& extractor() { return extractor_; }
  dynamics::DynamicsNet<T>& dynamics() { return dynamics_; }

 private:
  struct MotionPass {
    std::vector<Vec2<T>> centers, motions;
  };
  MotionPass forward_motions(const Tensor<T>& probs, int count, std::span<const env::Action> actions,
                             std::span<const Vec2<T>> centers, bool training);
  void backward_motions(std::span<const Vec2<T>> centers, std::span<const env::Action> actions,
                        std::span<const Vec2<T>> d_motions, Tensor<T>& d_probs, int count);

  ModelConfig cfg_;
  std::mt19937_64 rng_;
  perception::ObjectDetector<T> detector_;
  perception::BackgroundExtractor<T> extractor_;
  dynamics::DynamicsNet<T> dynamics_;
};

/// Dynamic-object channels [first, first + count) of `probs`, as [count, n_D, H, W].
template <typename T>
Tensor<T> dynamic_masks(const perception::MaskSet<T>& masks, int first, int count);

}  // namespace oodp
