#include "oodp/model.hpp"

namespace oodp {

using objective::Variant;

template <typename T>
Tensor<T> dynamic_masks(const perception::MaskSet<T>& masks, int first, int count) {
  const auto& p = masks.probs;
  Tensor<T> out(count, masks.n_dynamic, p.h(), p.w());
  for (int n = 0; n < count; ++n)
    for (int j = 0; j < masks.n_dynamic; ++j)
      std::ranges::copy(p.plane(first + n, masks.dynamic_channel(j)), out.plane(n, j).begin());
  return out;
}

namespace {

template <typename T>
void add_dynamic_grad(Tensor<T>& d_probs, const Tensor<T>& d_dyn, int first, int n_static, T scale) {
  for (int n = 0; n < d_dyn.n(); ++n) {
    for (int j = 0; j < d_dyn.c(); ++j) {
      auto src = d_dyn.plane(n, j);
      auto dst = d_probs.plane(first + n, n_static + j);
      for (std::size_t p = 0; p < src.size(); ++p) dst[p] += scale * src[p];
    }
  }
}

template <typename T>
void add_scaled(Tensor<T>& dst, const Tensor<T>& src, int first, T scale) {
  const std::size_t stride = dst.sample(0).size();
  T* d = dst.data() + static_cast<std::size_t>(first) * stride;
  for (std::size_t i = 0; i < src.size(); ++i) d[i] += scale * src[i];
}

}  // namespace

template <typename T>
OodpModel<T>::OodpModel(const ModelConfig& cfg)
    : cfg_(cfg),
      rng_(cfg.seed),
      detector_({cfg.n_static, cfg.n_dynamic, cfg.height, cfg.width}, rng_),
      extractor_(cfg.height, cfg.width, rng_),
      dynamics_({cfg.n_objects(), cfg.n_dynamic, cfg.window}, rng_) {}

template <typename T>
typename OodpModel<T>::MotionPass OodpModel<T>::forward_motions(const Tensor<T>& probs, int count,
                                                                std::span<const env::Action> actions,
                                                                std::span<const Vec2<T>> centers, bool training) {
  const int nd = cfg_.n_dynamic, h = probs.h(), w = probs.w(), win = cfg_.window;
  MotionPass out;
  out.centers.assign(centers.begin(), centers.end());
  out.motions.assign(static_cast<std::size_t>(count * nd), Vec2<T>{});
  Tensor<T> crops(count, 1, win, win);
  for (int j = 0; j < nd; ++j) {
    const auto others = dynamics_.others(cfg_.n_static + j);
    const dynamics::EffectTensor<T> self = dynamics_.self_effect(j);
    for (int n = 0; n < count; ++n) {
      const auto a = static_cast<std::size_t>(actions[static_cast<std::size_t>(n)]);
      auto& m = out.motions[static_cast<std::size_t>(n * nd + j)];
      m.u += self.e[0][a];
      m.v += self.e[1][a];
    }
    for (std::size_t k = 0; k < others.size(); ++k) {
      for (int n = 0; n < count; ++n)
        dynamics::crop_window<T>(probs.plane(n, others[k]), h, w, centers[static_cast<std::size_t>(n * nd + j)], win,
                                 crops.plane(n, 0));
      const Tensor<T> eff = dynamics_.pair(j, static_cast<int>(k)).forward(dynamics::with_meshgrid(crops), training);
      for (int n = 0; n < count; ++n) {
        const auto a = static_cast<int>(actions[static_cast<std::size_t>(n)]);
        auto& m = out.motions[static_cast<std::size_t>(n * nd + j)];
        m.u += eff(n, a, 0, 0);
        m.v += eff(n, env::kNumActions + a, 0, 0);
      }
    }
  }
  return out;
}

template <typename T>
void OodpModel<T>::backward_motions(std::span<const Vec2<T>> centers, std::span<const env::Action> actions,
                                    std::span<const Vec2<T>> d_motions, Tensor<T>& d_probs, int count) {
  const int nd = cfg_.n_dynamic, h = d_probs.h(), w = d_probs.w(), win = cfg_.window;
  auto& self = dynamics_.self_param();
  for (int j = 0; j < nd; ++j) {
    Tensor<T> d_eff(count, 2 * env::kNumActions, 1, 1);
    for (int n = 0; n < count; ++n) {
      const auto a = static_cast<int>(actions[static_cast<std::size_t>(n)]);
      const auto& dm = d_motions[static_cast<std::size_t>(n * nd + j)];
      d_eff(n, a, 0, 0) = dm.u;
      d_eff(n, env::kNumActions + a, 0, 0) = dm.v;
      self.grad(j, a, 0, 0) += dm.u;
      self.grad(j, env::kNumActions + a, 0, 0) += dm.v;
    }
    const auto others = dynamics_.others(cfg_.n_static + j);
    for (std::size_t k = 0; k < others.size(); ++k) {
      const Tensor<T> d_in = dynamics_.pair(j, static_cast<int>(k)).backward(d_eff);
      for (int n = 0; n < count; ++n)
        dynamics::crop_window_backward<T>(d_in.plane(n, 0), win, centers[static_cast<std::size_t>(n * nd + j)],
                                          d_probs.plane(n, others[k]), h, w);
    }
  }
}

template <typename T>
objective::LossBundle OodpModel<T>::compute_gradients(const TrainBatch<T>& batch, Variant variant,
                                                      const objective::LossWeights& weights,
                                                      const std::vector<Vec2<T>>* centers) {
  const int n = batch.frames_t.n(), nd = cfg_.n_dynamic, ns = cfg_.n_static;
  require_shape(batch.frames_t1.shape(), batch.frames_t.shape(), "compute_gradients frames_t1");
  if (batch.actions.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("compute_gradients: one action per record required");
  }
  if (centers && centers->size() != static_cast<std::size_t>(n * nd)) {
    throw std::invalid_argument("compute_gradients: centre override has the wrong length");
  }
  for (auto* p : parameters()) p->grad.zero();

  const Tensor<T> frames = concat_batch(batch.frames_t, batch.frames_t1);
  const perception::MaskSet<T> masks = detector_.forward(frames, true);
  const Tensor<T> bg = extractor_.forward(frames, true);
  const Tensor<T>& probs = masks.probs;
  const int h = probs.h(), w = probs.w();

  // Mask-derived positions at t and t + 1.
  std::vector<Vec2<T>> pos_t(static_cast<std::size_t>(n * nd)), pos_t1(pos_t.size()), crop_centers(pos_t.size());
  std::vector<std::uint8_t> degenerate(pos_t.size(), 0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < nd; ++j) {
      const auto idx = static_cast<std::size_t>(i * nd + j);
      try {
        pos_t[idx] = dynamics::object_position<T>(probs.plane(i, ns + j), h, w);
        pos_t1[idx] = dynamics::object_position<T>(probs.plane(n + i, ns + j), h, w);
      } catch (const dynamics::DegenerateMaskError&) {
        degenerate[idx] = 1;
        pos_t[idx] = {static_cast<T>(h - 1) / 2, static_cast<T>(w - 1) / 2};
      }
      crop_centers[idx] = centers ? (*centers)[idx] : pos_t[idx];
    }
  }

  const MotionPass mp = forward_motions(probs, n, batch.actions, crop_centers, true);
  const auto& motions = mp.motions;

  Tensor<T> d_probs(probs.shape());
  Tensor<T> d_bg(bg.shape());
  std::vector<Vec2<T>> d_motions(motions.size());

  objective::LossBundle out = objective::LossBundle::make(variant);
  out.weights = weights;

  // Highway: coordinate space, summed over dynamic objects, mean over records.
  {
    double total = 0;
    const T inv_n = T(1) / static_cast<T>(n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < nd; ++j) {
        const auto idx = static_cast<std::size_t>(i * nd + j);
        if (degenerate[idx]) continue;
        const T eu = pos_t[idx].u + motions[idx].u - pos_t1[idx].u;
        const T ev = pos_t[idx].v + motions[idx].v - pos_t1[idx].v;
        total += static_cast<double>(eu * eu + ev * ev);
        const Vec2<T> g{T(2) * eu * inv_n, T(2) * ev * inv_n};
        d_motions[idx] += g;
        dynamics::object_position_backward<T>(probs.plane(i, ns + j), h, w, pos_t[idx], g,
                                              d_probs.plane(i, ns + j));
        dynamics::object_position_backward<T>(probs.plane(n + i, ns + j), h, w, pos_t1[idx], {-g.u, -g.v},
                                              d_probs.plane(n + i, ns + j));
      }
    }
    out.highway = total / n;
  }

  const Tensor<T> dyn_t = dynamic_masks(masks, 0, n);
  const Tensor<T> bg_t = slice_batch(bg, 0, n);

  {
    const Tensor<T> pred = composition::compose_prediction<T>(batch.frames_t, dyn_t, motions, bg_t);
    auto pl = composition::prediction_loss(pred, batch.frames_t1);
    out.prediction = static_cast<double>(pl.value);
    const auto lp = static_cast<T>(weights.prediction);
    for (std::size_t i = 0; i < pl.d_pred.size(); ++i) pl.d_pred[i] *= lp;
    const auto g = composition::compose_prediction_backward<T>(batch.frames_t, dyn_t, motions, bg_t, pl.d_pred);
    add_dynamic_grad(d_probs, g.d_masks, 0, ns, T(1));
    for (std::size_t i = 0; i < d_motions.size(); ++i) d_motions[i] += g.d_motions[i];
    add_scaled(d_bg, g.d_bg, 0, T(1));
  }

  {
    const auto el = perception::entropy_loss(probs);
    out.entropy = static_cast<double>(el.value);
    add_scaled(d_probs, el.grad, 0, static_cast<T>(weights.entropy));
  }

  if (variant == Variant::WithoutProposal) {
    const auto rl = composition::reconstruction_loss(batch.frames_t, dyn_t, bg_t);
    out.reconstruction = static_cast<double>(rl.value);
    add_dynamic_grad(d_probs, rl.d_masks, 0, ns, static_cast<T>(weights.reconstruction));
    add_scaled(d_bg, rl.d_bg, 0, static_cast<T>(weights.reconstruction));

    const Tensor<T> dyn_t1 = dynamic_masks(masks, n, n);
    const auto cl = composition::consistency_loss<T>(dyn_t, dyn_t1, motions);
    out.consistency = static_cast<double>(cl.value);
    const auto lc = static_cast<T>(weights.consistency);
    add_dynamic_grad(d_probs, cl.d_masks_t, 0, ns, lc);
    add_dynamic_grad(d_probs, cl.d_masks_t1, n, ns, lc);
    for (std::size_t i = 0; i < d_motions.size(); ++i) {
      d_motions[i].u += lc * cl.d_motions[i].u;
      d_motions[i].v += lc * cl.d_motions[i].v;
    }

    const Tensor<T> bg_t1 = slice_batch(bg, n, n);
    const auto bl = perception::background_loss(bg_t, bg_t1);
    out.background = static_cast<double>(bl.value);
    const auto lb = static_cast<T>(weights.background);
    add_scaled(d_bg, bl.grad, 0, lb);
    add_scaled(d_bg, bl.grad, n, -lb);
  } else {
    const auto pr = objective::proposal_loss<T>(dyn_t, batch.proposals);
    out.proposal = static_cast<double>(pr.value);
    add_dynamic_grad(d_probs, pr.grad, 0, ns, static_cast<T>(weights.proposal));
  }

  backward_motions(crop_centers, batch.actions, d_motions, d_probs, n);
  detector_.backward(d_probs);
  extractor_.backward(d_bg);
  return out;
}

template <typename T>
Prediction<T> OodpModel<T>::predict(const Tensor<T>& frames, std::span<const env::Action> actions) {
  const int n = frames.n(), nd = cfg_.n_dynamic, ns = cfg_.n_static;
  if (actions.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("predict: one action per frame required");
  }
  Prediction<T> out;
  out.masks = detector_.forward(frames, false);
  out.background = extractor_.forward(frames, false);
  const auto& probs = out.masks.probs;
  const int h = probs.h(), w = probs.w();
  std::vector<Vec2<T>> centers(static_cast<std::size_t>(n * nd));
  out.degenerate.assign(centers.size(), 0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < nd; ++j) {
      const auto idx = static_cast<std::size_t>(i * nd + j);
      try {
        centers[idx] = dynamics::object_position<T>(probs.plane(i, ns + j), h, w);
      } catch (const dynamics::DegenerateMaskError&) {
        out.degenerate[idx] = 1;
        centers[idx] = {static_cast<T>(h - 1) / 2, static_cast<T>(w - 1) / 2};
      }
    }
  }
  MotionPass mp = forward_motions(probs, n, actions, centers, false);
  for (std::size_t i = 0; i < mp.motions.size(); ++i)
    if (out.degenerate[i]) mp.motions[i] = {};
  out.centers = std::move(mp.centers);
  out.motions = std::move(mp.motions);
  out.next_frame =
      composition::compose_prediction<T>(frames, dynamic_masks(out.masks, 0, n), out.motions, out.background);
  return out;
}

template <typename T>
std::vector<nn::Parameter<T>*> OodpModel<T>::parameters() {
  std::vector<nn::Parameter<T>*> out = detector_.parameters();
  for (auto* p : extractor_.parameters()) out.push_back(p);
  for (auto* p : dynamics_.parameters()) out.push_back(p);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> OodpModel<T>::buffers() {
  auto out = detector_.buffers();
  for (auto& b : extractor_.net().buffers()) out.push_back(b);
  for (auto& b : dynamics_.buffers()) out.push_back(b);
  return out;
}

template class OodpModel<float>;
template class OodpModel<double>;
template Tensor<float> dynamic_masks<float>(const perception::MaskSet<float>&, int, int);
template Tensor<double> dynamic_masks<double>(const perception::MaskSet<double>&, int, int);

}  // namespace oodp
