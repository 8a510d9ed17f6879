#include "oodp/composition.hpp"

#include <stdexcept>

namespace oodp::composition {
namespace {

template <typename T>
void translate_plane(std::span<const T> src, int h, int w, const Vec2<T>& m, std::span<T> dst) {
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      dst[static_cast<std::size_t>(y * w + x)] =
          bilinear_sample(src, h, w, static_cast<T>(y) - m.u, static_cast<T>(x) - m.v);
}

// Accumulates the adjoint into d_src and returns d loss / d motion.
template <typename T>
Vec2<T> translate_plane_backward(std::span<const T> src, int h, int w, const Vec2<T>& m,
                                 std::span<const T> d_out, std::span<T> d_src) {
  Vec2<T> dm{};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const T g = d_out[static_cast<std::size_t>(y * w + x)];
      if (g == T(0)) continue;
      const T sy = static_cast<T>(y) - m.u, sx = static_cast<T>(x) - m.v;
      bilinear_scatter(d_src, h, w, sy, sx, g);
      const Vec2<T> ds = bilinear_sample_grad(src, h, w, sy, sx);
      dm.u -= g * ds.u;
      dm.v -= g * ds.v;
    }
  }
  return dm;
}

void require_motions(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(want) + " motion vectors, got " +
                                std::to_string(got));
  }
}

}  // namespace

template <typename T>
Tensor<T> spatial_transform(const Tensor<T>& image, std::span<const Vec2<T>> motions) {
  require_motions(motions.size(), static_cast<std::size_t>(image.n()), "spatial_transform");
  Tensor<T> out(image.shape());
  for (int n = 0; n < image.n(); ++n)
    for (int c = 0; c < image.c(); ++c)
      translate_plane(image.plane(n, c), image.h(), image.w(), motions[static_cast<std::size_t>(n)], out.plane(n, c));
  return out;
}

template <typename T>
SpatialTransformGrad<T> spatial_transform_backward(const Tensor<T>& image, std::span<const Vec2<T>> motions,
                                                   const Tensor<T>& d_out) {
  require_shape(d_out.shape(), image.shape(), "spatial_transform_backward");
  SpatialTransformGrad<T> g{Tensor<T>(image.shape()), std::vector<Vec2<T>>(static_cast<std::size_t>(image.n()))};
  for (int n = 0; n < image.n(); ++n)
    for (int c = 0; c < image.c(); ++c)
      g.d_motion[static_cast<std::size_t>(n)] += translate_plane_backward(
          image.plane(n, c), image.h(), image.w(), motions[static_cast<std::size_t>(n)], d_out.plane(n, c),
          g.d_image.plane(n, c));
  return g;
}

template <typename T>
Tensor<T> compose_prediction(const Tensor<T>& frame, const Tensor<T>& dyn_masks, std::span<const Vec2<T>> motions,
                             const Tensor<T>& bg) {
  require_shape(bg.shape(), frame.shape(), "compose_prediction background");
  if (dyn_masks.n() != frame.n() || dyn_masks.h() != frame.h() || dyn_masks.w() != frame.w()) {
    throw ShapeError("compose_prediction: masks " + to_string(dyn_masks.shape()) + " vs frame " +
                     to_string(frame.shape()));
  }
  const int nd = dyn_masks.c(), h = frame.h(), w = frame.w();
  const std::size_t plane = frame.shape().plane();
  require_motions(motions.size(), static_cast<std::size_t>(frame.n() * nd), "compose_prediction");
  // Evaluated as bg + Σ_j (STN(M_j·I) − STN(M_j)·bg), which is algebraically
  // the same and reproduces I exactly when V = 0 and bg = I.
  Tensor<T> out = bg;
  std::vector<T> moved_mask(plane), masked(plane), moved(plane);
  for (int n = 0; n < frame.n(); ++n) {
    for (int j = 0; j < nd; ++j) {
      const Vec2<T>& m = motions[static_cast<std::size_t>(n * nd + j)];
      auto mask = dyn_masks.plane(n, j);
      translate_plane<T>(mask, h, w, m, moved_mask);
      for (int c = 0; c < frame.c(); ++c) {
        auto img = frame.plane(n, c);
        auto b = bg.plane(n, c);
        for (std::size_t p = 0; p < plane; ++p) masked[p] = mask[p] * img[p];
        translate_plane<T>(masked, h, w, m, moved);
        auto dst = out.plane(n, c);
        for (std::size_t p = 0; p < plane; ++p) dst[p] += moved[p] - moved_mask[p] * b[p];
      }
    }
  }
  return out;
}

template <typename T>
ComposeGrad<T> compose_prediction_backward(const Tensor<T>& frame, const Tensor<T>& dyn_masks,
                                           std::span<const Vec2<T>> motions, const Tensor<T>& bg,
                                           const Tensor<T>& d_pred) {
  require_shape(d_pred.shape(), frame.shape(), "compose_prediction_backward");
  const int nd = dyn_masks.c(), h = frame.h(), w = frame.w();
  const std::size_t plane = frame.shape().plane();
  require_motions(motions.size(), static_cast<std::size_t>(frame.n() * nd), "compose_prediction_backward");
  ComposeGrad<T> g{Tensor<T>(frame.shape()), Tensor<T>(dyn_masks.shape()),
                   std::vector<Vec2<T>>(motions.size()), Tensor<T>(bg.shape())};
  std::vector<T> moved_mask(plane), mask_sum(plane), d_mask_sum(plane), masked(plane), d_masked(plane);
  for (int n = 0; n < frame.n(); ++n) {
    std::fill(mask_sum.begin(), mask_sum.end(), T(0));
    for (int j = 0; j < nd; ++j) {
      translate_plane<T>(dyn_masks.plane(n, j), h, w, motions[static_cast<std::size_t>(n * nd + j)], moved_mask);
      for (std::size_t p = 0; p < plane; ++p) mask_sum[p] += moved_mask[p];
    }
    std::fill(d_mask_sum.begin(), d_mask_sum.end(), T(0));
    for (int c = 0; c < frame.c(); ++c) {
      auto dp = d_pred.plane(n, c);
      auto b = bg.plane(n, c);
      auto db = g.d_bg.plane(n, c);
      for (std::size_t p = 0; p < plane; ++p) {
        db[p] = dp[p] * (T(1) - mask_sum[p]);
        d_mask_sum[p] -= dp[p] * b[p];
      }
    }
    for (int j = 0; j < nd; ++j) {
      const Vec2<T>& m = motions[static_cast<std::size_t>(n * nd + j)];
      auto mask = dyn_masks.plane(n, j);
      auto dmask = g.d_masks.plane(n, j);
      Vec2<T>& dm = g.d_motions[static_cast<std::size_t>(n * nd + j)];
      dm += translate_plane_backward<T>(mask, h, w, m, d_mask_sum, dmask);
      for (int c = 0; c < frame.c(); ++c) {
        auto img = frame.plane(n, c);
        for (std::size_t p = 0; p < plane; ++p) masked[p] = mask[p] * img[p];
        std::fill(d_masked.begin(), d_masked.end(), T(0));
        dm += translate_plane_backward<T>(masked, h, w, m, d_pred.plane(n, c), d_masked);
        auto dimg = g.d_frame.plane(n, c);
        for (std::size_t p = 0; p < plane; ++p) {
          dmask[p] += d_masked[p] * img[p];
          dimg[p] += d_masked[p] * mask[p];
        }
      }
    }
  }
  return g;
}

template <typename T>
PredictionLoss<T> prediction_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  require_shape(target.shape(), pred.shape(), "prediction_loss");
  const T norm = static_cast<T>(pred.shape().plane()) * static_cast<T>(pred.n());
  PredictionLoss<T> out{T(0), Tensor<T>(pred.shape())};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const T d = pred[i] - target[i];
    out.value += d * d;
    out.d_pred[i] = T(2) * d / norm;
  }
  out.value /= norm;
  return out;
}

template <typename T>
ReconstructionLoss<T> reconstruction_loss(const Tensor<T>& frame, const Tensor<T>& dyn_masks, const Tensor<T>& bg) {
  require_shape(bg.shape(), frame.shape(), "reconstruction_loss background");
  const std::size_t plane = frame.shape().plane();
  const T norm = static_cast<T>(plane) * static_cast<T>(frame.n());
  ReconstructionLoss<T> out{T(0), Tensor<T>(dyn_masks.shape()), Tensor<T>(bg.shape())};
  std::vector<T> mask_sum(plane), d_sum(plane);
  for (int n = 0; n < frame.n(); ++n) {
    std::fill(mask_sum.begin(), mask_sum.end(), T(0));
    for (int j = 0; j < dyn_masks.c(); ++j) {
      auto m = dyn_masks.plane(n, j);
      for (std::size_t p = 0; p < plane; ++p) mask_sum[p] += m[p];
    }
    std::fill(d_sum.begin(), d_sum.end(), T(0));
    for (int c = 0; c < frame.c(); ++c) {
      auto img = frame.plane(n, c);
      auto b = bg.plane(n, c);
      auto db = out.d_bg.plane(n, c);
      for (std::size_t p = 0; p < plane; ++p) {
        const T r = mask_sum[p] * img[p] + (T(1) - mask_sum[p]) * b[p] - img[p];
        out.value += r * r;
        const T g = T(2) * r / norm;
        db[p] = g * (T(1) - mask_sum[p]);
        d_sum[p] += g * (img[p] - b[p]);
      }
    }
    for (int j = 0; j < dyn_masks.c(); ++j) std::ranges::copy(d_sum, out.d_masks.plane(n, j).begin());
  }
  out.value /= norm;
  return out;
}

template <typename T>
ConsistencyLoss<T> consistency_loss(const Tensor<T>& masks_t, const Tensor<T>& masks_t1,
                                    std::span<const Vec2<T>> motions) {
  require_shape(masks_t1.shape(), masks_t.shape(), "consistency_loss");
  const int nd = masks_t.c(), h = masks_t.h(), w = masks_t.w();
  const std::size_t plane = masks_t.shape().plane();
  require_motions(motions.size(), static_cast<std::size_t>(masks_t.n() * nd), "consistency_loss");
  const T norm = static_cast<T>(plane) * static_cast<T>(masks_t.n());
  ConsistencyLoss<T> out{T(0), Tensor<T>(masks_t.shape()), Tensor<T>(masks_t.shape()),
                         std::vector<Vec2<T>>(motions.size())};
  std::vector<T> moved(plane), d_moved(plane);
  for (int n = 0; n < masks_t.n(); ++n) {
    for (int j = 0; j < nd; ++j) {
      const auto k = static_cast<std::size_t>(n * nd + j);
      translate_plane<T>(masks_t.plane(n, j), h, w, motions[k], moved);
      auto next = masks_t1.plane(n, j);
      auto d_next = out.d_masks_t1.plane(n, j);
      for (std::size_t p = 0; p < plane; ++p) {
        const T r = next[p] - moved[p];
        out.value += r * r;
        d_next[p] = T(2) * r / norm;
        d_moved[p] = -d_next[p];
      }
      out.d_motions[k] += translate_plane_backward<T>(masks_t.plane(n, j), h, w, motions[k], d_moved,
                                                      out.d_masks_t.plane(n, j));
    }
  }
  out.value /= norm;
  return out;
}

#define OODP_INSTANTIATE_COMPOSITION(T)                                                                          \
  template Tensor<T> spatial_transform<T>(const Tensor<T>&, std::span<const Vec2<T>>);                         \
  template SpatialTransformGrad<T> spatial_transform_backward<T>(const Tensor<T>&, std::span<const Vec2<T>>,   \
                                                                 const Tensor<T>&);                            \
  template Tensor<T> compose_prediction<T>(const Tensor<T>&, const Tensor<T>&, std::span<const Vec2<T>>,       \
                                           const Tensor<T>&);                                                  \
  template ComposeGrad<T> compose_prediction_backward<T>(const Tensor<T>&, const Tensor<T>&,                   \
                                                         std::span<const Vec2<T>>, const Tensor<T>&,           \
                                                         const Tensor<T>&);                                    \
  template PredictionLoss<T> prediction_loss<T>(const Tensor<T>&, const Tensor<T>&);                           \
  template ReconstructionLoss<T> reconstruction_loss<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
  template ConsistencyLoss<T> consistency_loss<T>(const Tensor<T>&, const Tensor<T>&, std::span<const Vec2<T>>);

OODP_INSTANTIATE_COMPOSITION(float)
OODP_INSTANTIATE_COMPOSITION(double)

}  // namespace oodp::composition
