#include "oodp/dynamics.hpp"

#include <algorithm>

namespace oodp::dynamics {

template <typename T>
ObjectPosition<T> object_position(std::span<const T> mask, int h, int w, T eps) {
  T mass = 0, su = 0, sv = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const T m = mask[static_cast<std::size_t>(y * w + x)];
      mass += m;
      su += static_cast<T>(y) * m;
      sv += static_cast<T>(x) * m;
    }
  }
  if (!(mass > eps)) throw DegenerateMaskError("object mask has total mass <= epsilon");
  return {su / mass, sv / mass};
}

template <typename T>
void object_position_backward(std::span<const T> mask, int h, int w, const ObjectPosition<T>& pos,
                              const Vec2<T>& d_pos, std::span<T> d_mask) {
  T mass = 0;
  for (std::size_t i = 0; i < static_cast<std::size_t>(h * w); ++i) mass += mask[i];
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      d_mask[static_cast<std::size_t>(y * w + x)] +=
          (d_pos.u * (static_cast<T>(y) - pos.u) + d_pos.v * (static_cast<T>(x) - pos.v)) / mass;
}

template <typename T>
void crop_window(std::span<const T> mask, int h, int w, const ObjectPosition<T>& center, int window,
                 std::span<T> out) {
  if (window < 1 || window % 2 == 0 || window > std::min(h, w)) {
    throw std::invalid_argument("crop_window: window must be odd and within 1..min(H, W), got " +
                                std::to_string(window));
  }
  const T off_u = center.u - static_cast<T>(window_half(window));
  const T off_v = center.v - static_cast<T>(window_half(window));
  for (int i = 0; i < window; ++i)
    for (int j = 0; j < window; ++j)
      out[static_cast<std::size_t>(i * window + j)] =
          bilinear_sample(mask, h, w, static_cast<T>(i) + off_u, static_cast<T>(j) + off_v);
}

template <typename T>
Tensor<T> crop_window(std::span<const T> mask, int h, int w, const ObjectPosition<T>& center, int window) {
  Tensor<T> out(1, 1, std::max(window, 0), std::max(window, 0));
  crop_window(mask, h, w, center, window, out.span());
  return out;
}

template <typename T>
void crop_window_backward(std::span<const T> d_crop, int window, const ObjectPosition<T>& center,
                          std::span<T> d_mask, int h, int w) {
  const T off_u = center.u - static_cast<T>(window_half(window));
  const T off_v = center.v - static_cast<T>(window_half(window));
  for (int i = 0; i < window; ++i)
    for (int j = 0; j < window; ++j)
      bilinear_scatter(d_mask, h, w, static_cast<T>(i) + off_u, static_cast<T>(j) + off_v,
                       d_crop[static_cast<std::size_t>(i * window + j)]);
}

template <typename T>
Tensor<T> with_meshgrid(const Tensor<T>& crops) {
  if (crops.c() != 1) throw ShapeError("with_meshgrid: expected one channel, got " + to_string(crops.shape()));
  const int h = crops.h(), w = crops.w();
  Tensor<T> out(crops.n(), 3, h, w);
  auto coord = [](int i, int size) {
    return size > 1 ? T(-1) + T(2) * static_cast<T>(i) / static_cast<T>(size - 1) : T(0);
  };
  for (int n = 0; n < crops.n(); ++n) {
    std::ranges::copy(crops.plane(n, 0), out.plane(n, 0).begin());
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        out(n, 1, y, x) = coord(x, w);
        out(n, 2, y, x) = coord(y, h);
      }
    }
  }
  return out;
}

template <typename T>
RelationCnn<T>::RelationCnn(const std::string& name, int window, std::mt19937_64& rng) {
  const std::array<int, 4> channels{16, 32, 64, 128};
  int in_c = 3, size = window;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    nn::add_conv_bn_relu(net_, name + ".l" + std::to_string(i), in_c, channels[i], 3, 2, rng);
    in_c = channels[i];
    size = (size + 2 - 3) / 2 + 1;
  }
  net_.template add<nn::Linear<T>>(name + ".fc", in_c * size * size, 128, rng);
  net_.template add<nn::Relu<T>>();
  net_.template add<nn::Linear<T>>(name + ".head", 128, 2 * env::kNumActions, rng);
}

template <typename T>
EffectTensor<T> effect_from_row(std::span<const T> head_row) {
  EffectTensor<T> e;
  for (int r = 0; r < 2; ++r)
    for (int a = 0; a < env::kNumActions; ++a) e.e[r][a] = head_row[static_cast<std::size_t>(r * env::kNumActions + a)];
  return e;
}

template <typename T>
EffectTensor<T> pair_effect(const Tensor<T>& cropped, RelationCnn<T>& cnn, bool training) {
  if (cropped.c() != 1 || cropped.h() != cropped.w()) {
    throw ShapeError("pair_effect: cropped mask must be [N, 1, w, w], got " + to_string(cropped.shape()));
  }
  const Tensor<T> out = cnn.forward(with_meshgrid(cropped), training);
  return effect_from_row<T>(out.sample(0));
}

template <typename T>
MotionVector<T> predict_motion(std::span<const EffectTensor<T>> pair_effects, const EffectTensor<T>& self_effect,
                               env::Action action) {
  EffectTensor<T> total = self_effect;
  for (const auto& e : pair_effects) total += e;
  return total.select(action);
}

template <typename T>
DynamicsNet<T>::DynamicsNet(const DynamicsConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
  if (cfg.n_dynamic < 1 || cfg.n_objects <= cfg.n_dynamic) {
    throw std::invalid_argument("dynamics net needs n_D >= 1 and at least one other object");
  }
  for (int j = 0; j < cfg.n_dynamic; ++j)
    for (int k = 0; k < cfg.n_objects - 1; ++k)
      pairs_.emplace_back("dynamics.pair" + std::to_string(j) + "_" + std::to_string(k), cfg.window, rng);
  self_ = {"dynamics.self_effect", Tensor<T>(Shape{cfg.n_dynamic, 2 * env::kNumActions, 1, 1}),
           Tensor<T>(Shape{cfg.n_dynamic, 2 * env::kNumActions, 1, 1})};
}

template <typename T>
std::vector<int> DynamicsNet<T>::others(int self_channel) const {
  std::vector<int> out;
  for (int c = 0; c < cfg_.n_objects; ++c)
    if (c != self_channel) out.push_back(c);
  return out;
}

template <typename T>
EffectTensor<T> DynamicsNet<T>::self_effect(int j) const {
  return effect_from_row<T>(self_.value.sample(j));
}

template <typename T>
std::vector<nn::Parameter<T>*> DynamicsNet<T>::parameters() {
  std::vector<nn::Parameter<T>*> out;
  for (auto& p : pairs_)
    for (auto* q : p.parameters()) out.push_back(q);
  out.push_back(&self_);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> DynamicsNet<T>::buffers() {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  for (auto& p : pairs_)
    for (auto& b : p.buffers()) out.push_back(b);
  return out;
}

template <typename T>
MotionVector<T> predict_motion(const perception::MaskSet<T>& masks, env::Action action, DynamicsNet<T>& net,
                               int j) {
  const auto& probs = masks.probs;
  if (probs.c() != net.config().n_objects) {
    throw ShapeError("predict_motion: mask count " + std::to_string(probs.c()) + " does not match dynamics net");
  }
  const int h = probs.h(), w = probs.w(), window = net.config().window;
  const int self_channel = masks.dynamic_channel(j);
  const auto center = object_position<T>(probs.plane(0, self_channel), h, w);
  std::vector<EffectTensor<T>> effects;
  const auto others = net.others(self_channel);
  for (std::size_t k = 0; k < others.size(); ++k) {
    const Tensor<T> crop = crop_window<T>(probs.plane(0, others[k]), h, w, center, window);
    effects.push_back(pair_effect(crop, net.pair(j, static_cast<int>(k))));
  }
  return predict_motion<T>(effects, net.self_effect(j), action);
}

template <typename T>
HighwayLoss<T> highway_loss(std::span<const ObjectPosition<T>> pos_t, std::span<const MotionVector<T>> motions,
                            std::span<const ObjectPosition<T>> pos_t1) {
  if (pos_t.size() != motions.size() || pos_t1.size() != motions.size()) {
    throw std::invalid_argument("highway_loss: argument lengths differ");
  }
  HighwayLoss<T> out;
  for (std::size_t j = 0; j < motions.size(); ++j) {
    const T eu = pos_t[j].u + motions[j].u - pos_t1[j].u;
    const T ev = pos_t[j].v + motions[j].v - pos_t1[j].v;
    out.value += eu * eu + ev * ev;
    const Vec2<T> g{T(2) * eu, T(2) * ev};
    out.d_pos_t.push_back(g);
    out.d_motion.push_back(g);
    out.d_pos_t1.push_back({-g.u, -g.v});
  }
  return out;
}

#define OODP_INSTANTIATE_DYNAMICS(T)                                                                      \
  template ObjectPosition<T> object_position<T>(std::span<const T>, int, int, T);                         \
  template void object_position_backward<T>(std::span<const T>, int, int, const ObjectPosition<T>&,       \
                                            const Vec2<T>&, std::span<T>);                                \
  template void crop_window<T>(std::span<const T>, int, int, const ObjectPosition<T>&, int, std::span<T>); \
  template Tensor<T> crop_window<T>(std::span<const T>, int, int, const ObjectPosition<T>&, int);          \
  template void crop_window_backward<T>(std::span<const T>, int, const ObjectPosition<T>&, std::span<T>,  \
                                        int, int);                                                        \
  template Tensor<T> with_meshgrid<T>(const Tensor<T>&);                                                  \
  template class RelationCnn<T>;                                                                          \
  template EffectTensor<T> effect_from_row<T>(std::span<const T>);                                        \
  template EffectTensor<T> pair_effect<T>(const Tensor<T>&, RelationCnn<T>&, bool);                       \
  template MotionVector<T> predict_motion<T>(std::span<const EffectTensor<T>>, const EffectTensor<T>&,    \
                                             env::Action);                                                \
  template class DynamicsNet<T>;                                                                          \
  template MotionVector<T> predict_motion<T>(const perception::MaskSet<T>&, env::Action, DynamicsNet<T>&, \
                                             int);                                                        \
  template HighwayLoss<T> highway_loss<T>(std::span<const ObjectPosition<T>>,                             \
                                          std::span<const MotionVector<T>>,                               \
                                          std::span<const ObjectPosition<T>>);

OODP_INSTANTIATE_DYNAMICS(float)
OODP_INSTANTIATE_DYNAMICS(double)

}  // namespace oodp::dynamics
