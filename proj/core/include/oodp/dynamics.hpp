#pragma once

#include <array>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "oodp/env_sim.hpp"
#include "oodp/nn.hpp"
#include "oodp/perception.hpp"
#include "oodp/sampling.hpp"
#include "oodp/tensor.hpp"

namespace oodp::dynamics {

template <typename T>
using ObjectPosition = Vec2<T>;
template <typename T>
using MotionVector = Vec2<T>;

class DegenerateMaskError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kMassEpsilon = 1e-6;

/// Mask-weighted mean pixel location (0-based row, column).
template <typename T>
ObjectPosition<T> object_position(std::span<const T> mask, int h, int w, T eps = T(kMassEpsilon));

/// Accumulates d loss / d mask given d loss / d position.
template <typename T>
void object_position_backward(std::span<const T> mask, int h, int w, const ObjectPosition<T>& pos,
                              const Vec2<T>& d_pos, std::span<T> d_mask);

/// The crop offset: window index i samples source coordinate
/// center + i - window_half(w).
constexpr int window_half(int window) { return (window - 1) / 2; }

/// Bilinear crop of a w×w window centred on `center`, zero padded.
template <typename T>
void crop_window(std::span<const T> mask, int h, int w, const ObjectPosition<T>& center, int window,
                 std::span<T> out);
template <typename T>
Tensor<T> crop_window(std::span<const T> mask, int h, int w, const ObjectPosition<T>& center, int window);

/// Adjoint of crop_window with respect to the mask only; the centre is a
/// constant of the graph.
template <typename T>
void crop_window_backward(std::span<const T> d_crop, int window, const ObjectPosition<T>& center,
                          std::span<T> d_mask, int h, int w);

/// Appends window-local row/column coordinate planes in [-1, 1] to a
/// [N, 1, w, w] batch of crops.
template <typename T>
Tensor<T> with_meshgrid(const Tensor<T>& crops);

/// E ∈ R^{2×n_a}: row 0 is the u (row) contribution, row 1 the v (column).
template <typename T>
struct EffectTensor {
  std::array<std::array<T, env::kNumActions>, 2> e{};

  EffectTensor& operator+=(const EffectTensor& o) {
    for (int r = 0; r < 2; ++r)
      for (int a = 0; a < env::kNumActions; ++a) e[r][a] += o.e[r][a];
    return *this;
  }
  /// E · a for a one-hot action.
  [[nodiscard]] MotionVector<T> select(env::Action a) const {
    const int k = static_cast<int>(a);
    return {e[0][k], e[1][k]};
  }
};

/// Relation CNN for one (object, dynamic object) pair:
/// R(BN(Conv(16,3,2))) R(BN(Conv(32,3,2))) R(BN(Conv(64,3,2))) R(BN(Conv(128,3,2)))
/// then FC 128 (ReLU) and a linear head of 2·n_a outputs.
template <typename T>
class RelationCnn {
 public:
  RelationCnn(const std::string& name, int window, std::mt19937_64& rng);

  /// [N, 3, w, w] -> [N, 2·n_a, 1, 1]
  Tensor<T> forward(const Tensor<T>& input, bool training) { return net_.forward(input, training); }
  Tensor<T> backward(const Tensor<T>& d_out) { return net_.backward(d_out); }
  std::vector<nn::Parameter<T>*> parameters() { return net_.parameters(); }
  std::vector<std::pair<std::string, Tensor<T>*>> buffers() { return net_.buffers(); }
  nn::Sequential<T>& net() { return net_; }
  /// The linear output layer.
  nn::Linear<T>& head() { return static_cast<nn::Linear<T>&>(net_.layer(net_.size() - 1)); }

 private:
  nn::Sequential<T> net_;
};

template <typename T>
EffectTensor<T> effect_from_row(std::span<const T> head_row);

/// Effect of one cropped mask ([1, 1, w, w]) on a dynamic object.
template <typename T>
EffectTensor<T> pair_effect(const Tensor<T>& cropped, RelationCnn<T>& cnn, bool training = false);

/// V = (Σ_i E(O_i, D_j) + E_self(D_j)) · a
template <typename T>
MotionVector<T> predict_motion(std::span<const EffectTensor<T>> pair_effects,
                               const EffectTensor<T>& self_effect, env::Action action);

struct DynamicsConfig {
  int n_objects = 4;
  int n_dynamic = 1;
  int window = 33;
};

/// The (n_O − 1) × n_D relation CNNs plus the per-dynamic-object
/// self-effect tables.
template <typename T>
class DynamicsNet {
 public:
  DynamicsNet(const DynamicsConfig& cfg, std::mt19937_64& rng);

  [[nodiscard]] const DynamicsConfig& config() const { return cfg_; }
  /// Index into the relation CNN list for dynamic object j and the k-th
  /// other object (k < n_O − 1).
  RelationCnn<T>& pair(int j, int k) { return pairs_[static_cast<std::size_t>(j * (cfg_.n_objects - 1) + k)]; }
  /// The object channels other than dynamic channel `self`, in order.
  [[nodiscard]] std::vector<int> others(int self_channel) const;
  EffectTensor<T> self_effect(int j) const;
  nn::Parameter<T>& self_param() { return self_; }

  std::vector<nn::Parameter<T>*> parameters();
  std::vector<std::pair<std::string, Tensor<T>*>> buffers();

 private:
  DynamicsConfig cfg_;
  std::vector<RelationCnn<T>> pairs_;
  nn::Parameter<T> self_;  // [n_D, 2 * n_a]
};

/// Inference-mode motion of dynamic object j for sample 0 of `masks`.
/// Throws DegenerateMaskError when the dynamic mask has no mass.
template <typename T>
MotionVector<T> predict_motion(const perception::MaskSet<T>& masks, env::Action action,
                               DynamicsNet<T>& net, int j);

/// Σ_j ‖p_t + V − p_t1‖² with gradients for every argument.
template <typename T>
struct HighwayLoss {
  T value{};
  std::vector<Vec2<T>> d_pos_t, d_motion, d_pos_t1;
};

template <typename T>
HighwayLoss<T> highway_loss(std::span<const ObjectPosition<T>> pos_t, std::span<const MotionVector<T>> motions,
                            std::span<const ObjectPosition<T>> pos_t1);

}  // namespace oodp::dynamics
