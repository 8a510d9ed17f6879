#include "oodp/perception.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace oodp::perception {

template <typename T>
Tensor<T> pixel_softmax(const Tensor<T>& logits) {
  Tensor<T> out(logits.shape());
  const int C = logits.c();
  const std::size_t plane = logits.shape().plane();
  for (int n = 0; n < logits.n(); ++n) {
    const T* in = logits.sample(n).data();
    T* o = out.sample(n).data();
    for (std::size_t p = 0; p < plane; ++p) {
      T mx = -std::numeric_limits<T>::infinity();
      for (int c = 0; c < C; ++c) mx = std::max(mx, in[c * plane + p]);
      T sum = 0;
      for (int c = 0; c < C; ++c) {
        const T e = std::exp(in[c * plane + p] - mx);
        o[c * plane + p] = e;
        sum += e;
      }
      for (int c = 0; c < C; ++c) o[c * plane + p] /= sum;
    }
  }
  return out;
}

template <typename T>
Tensor<T> pixel_softmax_backward(const Tensor<T>& probs, const Tensor<T>& d_probs) {
  require_shape(d_probs.shape(), probs.shape(), "pixel_softmax_backward");
  Tensor<T> dx(probs.shape());
  const int C = probs.c();
  const std::size_t plane = probs.shape().plane();
  for (int n = 0; n < probs.n(); ++n) {
    const T* p = probs.sample(n).data();
    const T* g = d_probs.sample(n).data();
    T* d = dx.sample(n).data();
    for (std::size_t i = 0; i < plane; ++i) {
      T dot = 0;
      for (int c = 0; c < C; ++c) dot += p[c * plane + i] * g[c * plane + i];
      for (int c = 0; c < C; ++c) d[c * plane + i] = p[c * plane + i] * (g[c * plane + i] - dot);
    }
  }
  return dx;
}

template <typename T>
LossGrad<T> entropy_loss(const Tensor<T>& masks) {
  const T norm = static_cast<T>(masks.shape().plane()) * static_cast<T>(masks.n());
  const T tiny = std::numeric_limits<T>::min();
  LossGrad<T> out{T(0), Tensor<T>(masks.shape())};
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const T p = masks[i];
    if (p > T(0)) out.value -= p * std::log(p);
    out.grad[i] = -(std::log(std::max(p, tiny)) + T(1)) / norm;
  }
  out.value /= norm;
  return out;
}

template <typename T>
LossGrad<T> background_loss(const Tensor<T>& bg_t, const Tensor<T>& bg_t1) {
  require_shape(bg_t1.shape(), bg_t.shape(), "background_loss");
  const T norm = static_cast<T>(bg_t.shape().plane()) * static_cast<T>(bg_t.n());
  LossGrad<T> out{T(0), Tensor<T>(bg_t.shape())};
  for (std::size_t i = 0; i < bg_t.size(); ++i) {
    const T d = bg_t[i] - bg_t1[i];
    out.value += d * d;
    out.grad[i] = T(2) * d / norm;
  }
  out.value /= norm;
  return out;
}

namespace {

struct Tap {
  int i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

std::vector<Tap> resize_taps(int in, int out) {
  std::vector<Tap> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const int i0 = static_cast<int>(std::floor(src));
    const int i1 = std::min(i0 + 1, in - 1);
    taps[static_cast<std::size_t>(o)] = {i0, i1, src - i0};
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& x, int out_h, int out_w) {
  const auto ty = resize_taps(x.h(), out_h);
  const auto tx = resize_taps(x.w(), out_w);
  Tensor<T> out(x.n(), x.c(), out_h, out_w);
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      auto src = x.plane(n, c);
      auto dst = out.plane(n, c);
      for (int y = 0; y < out_h; ++y) {
        const auto& a = ty[static_cast<std::size_t>(y)];
        const T wy1 = static_cast<T>(a.w1), wy0 = T(1) - wy1;
        for (int xx = 0; xx < out_w; ++xx) {
          const auto& b = tx[static_cast<std::size_t>(xx)];
          const T wx1 = static_cast<T>(b.w1), wx0 = T(1) - wx1;
          auto at = [&](int r, int col) { return src[static_cast<std::size_t>(r * x.w() + col)]; };
          dst[static_cast<std::size_t>(y * out_w + xx)] =
              wy0 * (wx0 * at(a.i0, b.i0) + wx1 * at(a.i0, b.i1)) + wy1 * (wx0 * at(a.i1, b.i0) + wx1 * at(a.i1, b.i1));
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> upsample_bilinear_backward(const Tensor<T>& d_out, int in_h, int in_w) {
  const auto ty = resize_taps(in_h, d_out.h());
  const auto tx = resize_taps(in_w, d_out.w());
  Tensor<T> dx(d_out.n(), d_out.c(), in_h, in_w);
  for (int n = 0; n < d_out.n(); ++n) {
    for (int c = 0; c < d_out.c(); ++c) {
      auto g = d_out.plane(n, c);
      auto dst = dx.plane(n, c);
      for (int y = 0; y < d_out.h(); ++y) {
        const auto& a = ty[static_cast<std::size_t>(y)];
        const T wy1 = static_cast<T>(a.w1), wy0 = T(1) - wy1;
        for (int xx = 0; xx < d_out.w(); ++xx) {
          const auto& b = tx[static_cast<std::size_t>(xx)];
          const T wx1 = static_cast<T>(b.w1), wx0 = T(1) - wx1;
          const T v = g[static_cast<std::size_t>(y * d_out.w() + xx)];
          dst[static_cast<std::size_t>(a.i0 * in_w + b.i0)] += wy0 * wx0 * v;
          dst[static_cast<std::size_t>(a.i0 * in_w + b.i1)] += wy0 * wx1 * v;
          dst[static_cast<std::size_t>(a.i1 * in_w + b.i0)] += wy1 * wx0 * v;
          dst[static_cast<std::size_t>(a.i1 * in_w + b.i1)] += wy1 * wx1 * v;
        }
      }
    }
  }
  return dx;
}

// --------------------------------------------------------- ObjectDetector

template <typename T>
ObjectDetector<T>::ObjectDetector(const DetectorConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
  if (cfg.n_static < 0 || cfg.n_dynamic < 1) throw std::invalid_argument("detector needs n_D >= 1");
  const int n_objects = cfg.n_static + cfg.n_dynamic;
  for (int c = 0; c < n_objects; ++c) {
    nn::Sequential<T> net;
    const std::string base = "detector.cnn" + std::to_string(c);
    nn::add_conv_bn_relu(net, base + ".l0", 3, 64, 5, 2, rng);
    nn::add_conv_bn_relu(net, base + ".l1", 64, 64, 3, 2, rng);
    nn::add_conv_bn_relu(net, base + ".l2", 64, 64, 3, 1, rng);
    nn::add_conv_bn_relu(net, base + ".l3", 64, 32, 1, 1, rng);
    nn::add_conv_bn_relu(net, base + ".l4", 32, 1, 3, 1, rng);
    cnns_.push_back(std::move(net));
  }
}

template <typename T>
MaskSet<T> ObjectDetector<T>::forward(const Tensor<T>& frames, bool training) {
  if (frames.c() != 3 || frames.h() != cfg_.height || frames.w() != cfg_.width) {
    throw ShapeError("detect_objects: frames " + to_string(frames.shape()) + " do not match detector input " +
                     std::to_string(cfg_.height) + "x" + std::to_string(cfg_.width));
  }
  const int n_objects = cfg_.n_static + cfg_.n_dynamic;
  Tensor<T> logits(frames.n(), n_objects, cfg_.height, cfg_.width);
  for (int c = 0; c < n_objects; ++c) {
    Tensor<T> low = cnns_[static_cast<std::size_t>(c)].forward(frames, training);
    low_h_ = low.h();
    low_w_ = low.w();
    Tensor<T> up = upsample_bilinear(low, cfg_.height, cfg_.width);
    for (int n = 0; n < frames.n(); ++n) std::ranges::copy(up.plane(n, 0), logits.plane(n, c).begin());
  }
  probs_ = pixel_softmax(logits);
  return {probs_, cfg_.n_static, cfg_.n_dynamic};
}

template <typename T>
void ObjectDetector<T>::backward(const Tensor<T>& d_probs) {
  const Tensor<T> d_logits = pixel_softmax_backward(probs_, d_probs);
  const int n_objects = cfg_.n_static + cfg_.n_dynamic;
  for (int c = 0; c < n_objects; ++c) {
    Tensor<T> d_up(d_logits.n(), 1, cfg_.height, cfg_.width);
    for (int n = 0; n < d_logits.n(); ++n) std::ranges::copy(d_logits.plane(n, c), d_up.plane(n, 0).begin());
    cnns_[static_cast<std::size_t>(c)].backward(upsample_bilinear_backward(d_up, low_h_, low_w_));
  }
}

template <typename T>
std::vector<nn::Parameter<T>*> ObjectDetector<T>::parameters() {
  std::vector<nn::Parameter<T>*> out;
  for (auto& net : cnns_)
    for (auto* p : net.parameters()) out.push_back(p);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> ObjectDetector<T>::buffers() {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  for (auto& net : cnns_)
    for (auto& b : net.buffers()) out.push_back(b);
  return out;
}

// ---------------------------------------------------- BackgroundExtractor

template <typename T>
BackgroundExtractor<T>::BackgroundExtractor(int height, int width, std::mt19937_64& rng, int channels,
                                            int code) {
  if (height % 16 != 0 || width % 16 != 0) {
    throw std::invalid_argument("background extractor needs H and W divisible by 16");
  }
  const int bh = height / 16, bw = width / 16;
  const int flat = channels * bh * bw;
  int in_c = 3;
  for (int i = 0; i < 4; ++i) {
    net_.template add<nn::Conv2d<T>>("extractor.enc" + std::to_string(i), in_c, channels, 3, 2, 1, rng);
    net_.template add<nn::Relu<T>>();
    in_c = channels;
  }
  net_.template add<nn::Linear<T>>("extractor.fc0", flat, code, rng);
  net_.template add<nn::Relu<T>>();
  net_.template add<nn::Linear<T>>("extractor.fc1", code, flat, rng);
  net_.template add<nn::Relu<T>>();
  net_.template add<nn::Reshape<T>>(channels, bh, bw);
  for (int i = 0; i < 3; ++i) {
    net_.template add<nn::ConvTranspose2d<T>>("extractor.dec" + std::to_string(i), channels, channels, 3, 2, 1, 1, rng);
    net_.template add<nn::Relu<T>>();
  }
  net_.template add<nn::ConvTranspose2d<T>>("extractor.dec3", channels, 3, 3, 2, 1, 1, rng);
  net_.template add<nn::Tanh<T>>();
}

template <typename T>
MaskSet<T> detect_objects(const Tensor<T>& frame, ObjectDetector<T>& detector) {
  return detector.forward(frame, /*training=*/false);
}

template <typename T>
Tensor<T> extract_background(const Tensor<T>& frame, BackgroundExtractor<T>& extractor) {
  return extractor.forward(frame, /*training=*/false);
}

#define OODP_INSTANTIATE_PERCEPTION(T)                                               \
  template Tensor<T> pixel_softmax<T>(const Tensor<T>&);                             \
  template Tensor<T> pixel_softmax_backward<T>(const Tensor<T>&, const Tensor<T>&);  \
  template LossGrad<T> entropy_loss<T>(const Tensor<T>&);                            \
  template LossGrad<T> background_loss<T>(const Tensor<T>&, const Tensor<T>&);       \
  template Tensor<T> upsample_bilinear<T>(const Tensor<T>&, int, int);               \
  template Tensor<T> upsample_bilinear_backward<T>(const Tensor<T>&, int, int);      \
  template class ObjectDetector<T>;                                                  \
  template class BackgroundExtractor<T>;                                             \
  template MaskSet<T> detect_objects<T>(const Tensor<T>&, ObjectDetector<T>&);       \
  template Tensor<T> extract_background<T>(const Tensor<T>&, BackgroundExtractor<T>&);

OODP_INSTANTIATE_PERCEPTION(float)
OODP_INSTANTIATE_PERCEPTION(double)

}  // namespace oodp::perception
