#pragma once

#include <span>
#include <vector>

#include "oodp/sampling.hpp"
#include "oodp/tensor.hpp"

namespace oodp::composition {

/// Translates every channel of sample n by motion[n]: output(u, v) reads
/// the input at (u − V_u, v − V_v) with bilinear interpolation and zero
/// padding. `motions` has one entry per sample.
template <typename T>
Tensor<T> spatial_transform(const Tensor<T>& image, std::span<const Vec2<T>> motions);

template <typename T>
struct SpatialTransformGrad {
  Tensor<T> d_image;
  std::vector<Vec2<T>> d_motion;
};

template <typename T>
SpatialTransformGrad<T> spatial_transform_backward(const Tensor<T>& image, std::span<const Vec2<T>> motions,
                                                   const Tensor<T>& d_out);

/// Î = Σ_j STN(M_Dj · I, V_j) + (1 − Σ_j STN(M_Dj, V_j)) · I_bg
///
/// `dyn_masks` is [N, n_D, H, W]; `motions` holds n_D entries per sample,
/// indexed n * n_D + j.
template <typename T>
Tensor<T> compose_prediction(const Tensor<T>& frame, const Tensor<T>& dyn_masks,
                             std::span<const Vec2<T>> motions, const Tensor<T>& bg);

template <typename T>
struct ComposeGrad {
  Tensor<T> d_frame;
  Tensor<T> d_masks;
  std::vector<Vec2<T>> d_motions;
  Tensor<T> d_bg;
};

template <typename T>
ComposeGrad<T> compose_prediction_backward(const Tensor<T>& frame, const Tensor<T>& dyn_masks,
                                           std::span<const Vec2<T>> motions, const Tensor<T>& bg,
                                           const Tensor<T>& d_pred);

/// ‖Î − I‖² / (H·W), batch mean. grad is d/dÎ.
template <typename T>
struct PredictionLoss {
  T value{};
  Tensor<T> d_pred;
};
template <typename T>
PredictionLoss<T> prediction_loss(const Tensor<T>& pred, const Tensor<T>& target);

/// ‖Σ_j M_Dj · I + (1 − Σ_j M_Dj) · I_bg − I‖² / (H·W), batch mean.
template <typename T>
struct ReconstructionLoss {
  T value{};
  Tensor<T> d_masks;
  Tensor<T> d_bg;
};
template <typename T>
ReconstructionLoss<T> reconstruction_loss(const Tensor<T>& frame, const Tensor<T>& dyn_masks,
                                          const Tensor<T>& bg);

/// Σ_j ‖M_Dj(t+1) − STN(M_Dj(t), V_j)‖² / (H·W), batch mean.
template <typename T>
struct ConsistencyLoss {
  T value{};
  Tensor<T> d_masks_t;
  Tensor<T> d_masks_t1;
  std::vector<Vec2<T>> d_motions;
};
template <typename T>
ConsistencyLoss<T> consistency_loss(const Tensor<T>& masks_t, const Tensor<T>& masks_t1,
                                    std::span<const Vec2<T>> motions);

}  // namespace oodp::composition
