#include "oodp/nn.hpp"

#include <Eigen/Core>
#include <array>
#include <cmath>

namespace oodp::nn {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// Sum of term(i) over [0, size) in an order fixed by the size alone. Eigen's
// linear reductions start at the first aligned address, so their float result
// would depend on where the buffer was allocated.
template <typename T, typename F>
double fixed_sum(std::size_t size, F&& term) {
  constexpr std::size_t kLanes = 8;
  std::array<T, kLanes> acc{};
  std::size_t i = 0;
  for (; i + kLanes <= size; i += kLanes)
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] += term(i + l);
  double total = 0;
  for (T a : acc) total += static_cast<double>(a);
  for (; i < size; ++i) total += static_cast<double>(term(i));
  return total;
}

template <typename T>
Tensor<T> uniform_tensor(Shape s, T bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-static_cast<double>(bound),
                                              static_cast<double>(bound));
  Tensor<T> t(s);
  for (auto& v : t.span()) v = static_cast<T>(dist(rng));
  return t;
}

// Unfolds one C×H×W sample into a (C*k*k) × (Ho*Wo) column matrix.
template <typename T>
void im2col(const T* src, int c, int h, int w, int k, int stride, int pad, int ho, int wo,
            T* col) {
  for (int ch = 0; ch < c; ++ch) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = col + ((static_cast<std::size_t>(ch) * k + ky) * k + kx) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          T* dst = row + oy * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, T(0));
            continue;
          }
          const T* line = src + (static_cast<std::size_t>(ch) * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < w) ? line[ix] : T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates columns back into a C×H×W buffer.
template <typename T>
void col2im(const T* col, int c, int h, int w, int k, int stride, int pad, int ho, int wo,
            T* dst) {
  for (int ch = 0; ch < c; ++ch) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col + ((static_cast<std::size_t>(ch) * k + ky) * k + kx) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          T* line = dst + (static_cast<std::size_t>(ch) * h + iy) * w;
          const T* src = row + oy * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) line[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride,
                  int padding, std::mt19937_64& rng)
    : in_c_(in_channels), out_c_(out_channels), k_(kernel), stride_(stride), pad_(padding) {
  const int fan_in = in_c_ * k_ * k_;
  const T bound = T(1) / std::sqrt(static_cast<T>(fan_in));
  weight_ = {name + ".weight", uniform_tensor<T>({out_c_, fan_in, 1, 1}, bound, rng),
             Tensor<T>(Shape{out_c_, fan_in, 1, 1})};
  bias_ = {name + ".bias", uniform_tensor<T>({out_c_, 1, 1, 1}, bound, rng),
           Tensor<T>(Shape{out_c_, 1, 1, 1})};
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x, bool /*training*/) {
  if (x.c() != in_c_) {
    throw ShapeError("Conv2d " + weight_.name + ": input " + to_string(x.shape()));
  }
  input_ = x;
  const int ho = out_size(x.h()), wo = out_size(x.w());
  const int kk = in_c_ * k_ * k_;
  Tensor<T> out(x.n(), out_c_, ho, wo);
  std::vector<T> col(static_cast<std::size_t>(kk) * ho * wo);
  ConstMatMap<T> wmat(weight_.value.data(), out_c_, kk);
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(bias_.value.data(), out_c_);
  for (int n = 0; n < x.n(); ++n) {
    im2col(x.sample(n).data(), in_c_, x.h(), x.w(), k_, stride_, pad_, ho, wo, col.data());
    MatMap<T> y(out.sample(n).data(), out_c_, ho * wo);
    y.noalias() = wmat * ConstMatMap<T>(col.data(), kk, ho * wo);
    y.colwise() += b;
  }
  return out;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& grad_out) {
  const Tensor<T>& x = input_;
  const int ho = grad_out.h(), wo = grad_out.w();
  const int kk = in_c_ * k_ * k_;
  Tensor<T> dx(x.shape());
  std::vector<T> col(static_cast<std::size_t>(kk) * ho * wo);
  std::vector<T> dcol(col.size());
  ConstMatMap<T> wmat(weight_.value.data(), out_c_, kk);
  MatMap<T> dw(weight_.grad.data(), out_c_, kk);
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(bias_.grad.data(), out_c_);
  for (int n = 0; n < x.n(); ++n) {
    im2col(x.sample(n).data(), in_c_, x.h(), x.w(), k_, stride_, pad_, ho, wo, col.data());
    ConstMatMap<T> dy(grad_out.sample(n).data(), out_c_, ho * wo);
    dw.noalias() += dy * ConstMatMap<T>(col.data(), kk, ho * wo).transpose();
    for (int o = 0; o < out_c_; ++o) {
      const T* row = dy.data() + static_cast<std::size_t>(o) * ho * wo;
      db[o] += static_cast<T>(fixed_sum<T>(static_cast<std::size_t>(ho) * wo, [&](std::size_t i) { return row[i]; }));
    }
    MatMap<T>(dcol.data(), kk, ho * wo).noalias() = wmat.transpose() * dy;
    col2im(dcol.data(), in_c_, x.h(), x.w(), k_, stride_, pad_, ho, wo, dx.sample(n).data());
  }
  return dx;
}

// ------------------------------------------------------- ConvTranspose2d

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(std::string name, int in_channels, int out_channels,
                                    int kernel, int stride, int padding, int output_padding,
                                    std::mt19937_64& rng)
    : in_c_(in_channels),
      out_c_(out_channels),
      k_(kernel),
      stride_(stride),
      pad_(padding),
      out_pad_(output_padding) {
  const int fan_in = in_c_ * k_ * k_;
  const T bound = T(1) / std::sqrt(static_cast<T>(fan_in));
  weight_ = {name + ".weight", uniform_tensor<T>({in_c_, out_c_ * k_ * k_, 1, 1}, bound, rng),
             Tensor<T>(Shape{in_c_, out_c_ * k_ * k_, 1, 1})};
  bias_ = {name + ".bias", uniform_tensor<T>({out_c_, 1, 1, 1}, bound, rng),
           Tensor<T>(Shape{out_c_, 1, 1, 1})};
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::forward(const Tensor<T>& x, bool /*training*/) {
  if (x.c() != in_c_) {
    throw ShapeError("ConvTranspose2d " + weight_.name + ": input " + to_string(x.shape()));
  }
  input_ = x;
  const int hi = x.h(), wi = x.w();
  const int ho = out_size(hi), wo = out_size(wi);
  const int kk = out_c_ * k_ * k_;
  Tensor<T> out(x.n(), out_c_, ho, wo);
  std::vector<T> col(static_cast<std::size_t>(kk) * hi * wi);
  ConstMatMap<T> wmat(weight_.value.data(), in_c_, kk);
  for (int n = 0; n < x.n(); ++n) {
    MatMap<T>(col.data(), kk, hi * wi).noalias() =
        wmat.transpose() * ConstMatMap<T>(x.sample(n).data(), in_c_, hi * wi);
    T* y = out.sample(n).data();
    col2im(col.data(), out_c_, ho, wo, k_, stride_, pad_, hi, wi, y);
    for (int c = 0; c < out_c_; ++c) {
      const T b = bias_.value[c];
      for (std::size_t p = 0; p < out.shape().plane(); ++p) y[c * out.shape().plane() + p] += b;
    }
  }
  return out;
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::backward(const Tensor<T>& grad_out) {
  const Tensor<T>& x = input_;
  const int hi = x.h(), wi = x.w();
  const int ho = grad_out.h(), wo = grad_out.w();
  const int kk = out_c_ * k_ * k_;
  Tensor<T> dx(x.shape());
  std::vector<T> dcol(static_cast<std::size_t>(kk) * hi * wi);
  ConstMatMap<T> wmat(weight_.value.data(), in_c_, kk);
  MatMap<T> dw(weight_.grad.data(), in_c_, kk);
  for (int n = 0; n < x.n(); ++n) {
    const T* dy = grad_out.sample(n).data();
    im2col(dy, out_c_, ho, wo, k_, stride_, pad_, hi, wi, dcol.data());
    ConstMatMap<T> dcm(dcol.data(), kk, hi * wi);
    ConstMatMap<T> xs(x.sample(n).data(), in_c_, hi * wi);
    MatMap<T>(dx.sample(n).data(), in_c_, hi * wi).noalias() = wmat * dcm;
    dw.noalias() += xs * dcm.transpose();
    for (int c = 0; c < out_c_; ++c) {
      T s = 0;
      for (std::size_t p = 0; p < grad_out.shape().plane(); ++p) s += dy[c * grad_out.shape().plane() + p];
      bias_.grad[c] += s;
    }
  }
  return dx;
}

// ----------------------------------------------------------- BatchNorm2d

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::string name, int channels, T momentum, T eps)
    : name_(std::move(name)), channels_(channels), momentum_(momentum), eps_(eps) {
  gamma_ = {name_ + ".gamma", Tensor<T>(Shape{channels, 1, 1, 1}, T(1)), Tensor<T>(Shape{channels, 1, 1, 1})};
  beta_ = {name_ + ".beta", Tensor<T>(Shape{channels, 1, 1, 1}), Tensor<T>(Shape{channels, 1, 1, 1})};
  running_mean_ = Tensor<T>(Shape{channels, 1, 1, 1});
  running_var_ = Tensor<T>(Shape{channels, 1, 1, 1}, T(1));
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> BatchNorm2d<T>::buffers() {
  return {{name_ + ".running_mean", &running_mean_}, {name_ + ".running_var", &running_var_}};
}

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x, bool training) {
  if (x.c() != channels_) throw ShapeError("BatchNorm2d " + name_ + ": input " + to_string(x.shape()));
  const int n = x.n();
  const std::size_t plane = x.shape().plane();
  const double count = static_cast<double>(n) * plane;
  Tensor<T> out(x.shape());
  x_hat_ = Tensor<T>(x.shape());
  inv_std_.assign(channels_, T(0));
  cached_training_ = training;
  for (int c = 0; c < channels_; ++c) {
    T mean, var;
    if (training) {
      // Per-plane partial sums vectorize; the cross-plane total is double.
      double s = 0;
      for (int i = 0; i < n; ++i) {
        const T* p = x.plane(i, c).data();
        s += fixed_sum<T>(plane, [p](std::size_t k) { return p[k]; });
      }
      const double m = s / count;
      const auto mt = static_cast<T>(m);
      double ss = 0;
      for (int i = 0; i < n; ++i) {
        const T* p = x.plane(i, c).data();
        ss += fixed_sum<T>(plane, [p, mt](std::size_t k) { return (p[k] - mt) * (p[k] - mt); });
      }
      mean = static_cast<T>(m);
      var = static_cast<T>(ss / count);
      const T unbiased = count > 1 ? static_cast<T>(ss / (count - 1)) : var;
      running_mean_[c] = momentum_ * running_mean_[c] + (T(1) - momentum_) * mean;
      running_var_[c] = momentum_ * running_var_[c] + (T(1) - momentum_) * unbiased;
    } else {
      mean = running_mean_[c];
      var = running_var_[c];
    }
    const T inv = T(1) / std::sqrt(var + eps_);
    inv_std_[c] = inv;
    const T g = gamma_.value[c], b = beta_.value[c];
    for (int i = 0; i < n; ++i) {
      auto src = x.plane(i, c);
      auto xh = x_hat_.plane(i, c);
      auto dst = out.plane(i, c);
      for (std::size_t p = 0; p < plane; ++p) {
        xh[p] = (src[p] - mean) * inv;
        dst[p] = g * xh[p] + b;
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::backward(const Tensor<T>& grad_out) {
  const int n = grad_out.n();
  const std::size_t plane = grad_out.shape().plane();
  const T count = static_cast<T>(n * plane);
  Tensor<T> dx(grad_out.shape());
  for (int c = 0; c < channels_; ++c) {
    T sum_dy = 0, sum_dy_xh = 0;
    for (int i = 0; i < n; ++i) {
      auto dy = grad_out.plane(i, c);
      auto xh = x_hat_.plane(i, c);
      const T* a = dy.data();
      const T* b = xh.data();
      sum_dy += static_cast<T>(fixed_sum<T>(plane, [a](std::size_t k) { return a[k]; }));
      sum_dy_xh += static_cast<T>(fixed_sum<T>(plane, [a, b](std::size_t k) { return a[k] * b[k]; }));
    }
    gamma_.grad[c] += sum_dy_xh;
    beta_.grad[c] += sum_dy;
    const T g = gamma_.value[c], inv = inv_std_[c];
    for (int i = 0; i < n; ++i) {
      auto dy = grad_out.plane(i, c);
      auto xh = x_hat_.plane(i, c);
      auto d = dx.plane(i, c);
      if (cached_training_) {
        const T k = g * inv / count;
        for (std::size_t p = 0; p < plane; ++p)
          d[p] = k * (count * dy[p] - sum_dy - xh[p] * sum_dy_xh);
      } else {
        for (std::size_t p = 0; p < plane; ++p) d[p] = g * inv * dy[p];
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------- Linear

template <typename T>
Linear<T>::Linear(std::string name, int in_features, int out_features, std::mt19937_64& rng)
    : in_f_(in_features), out_f_(out_features) {
  const T bound = T(1) / std::sqrt(static_cast<T>(in_f_));
  weight_ = {name + ".weight", uniform_tensor<T>({out_f_, in_f_, 1, 1}, bound, rng),
             Tensor<T>(Shape{out_f_, in_f_, 1, 1})};
  bias_ = {name + ".bias", uniform_tensor<T>({out_f_, 1, 1, 1}, bound, rng),
           Tensor<T>(Shape{out_f_, 1, 1, 1})};
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x, bool /*training*/) {
  const int features = x.c() * x.h() * x.w();
  if (features != in_f_) throw ShapeError("Linear " + weight_.name + ": input " + to_string(x.shape()));
  input_ = x;
  Tensor<T> out(x.n(), out_f_, 1, 1);
  MatMap<T> y(out.data(), x.n(), out_f_);
  y.noalias() = ConstMatMap<T>(x.data(), x.n(), in_f_) *
                ConstMatMap<T>(weight_.value.data(), out_f_, in_f_).transpose();
  y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias_.value.data(), out_f_);
  return out;
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& grad_out) {
  const int n = grad_out.n();
  ConstMatMap<T> dy(grad_out.data(), n, out_f_);
  ConstMatMap<T> x(input_.data(), n, in_f_);
  MatMap<T>(weight_.grad.data(), out_f_, in_f_).noalias() += dy.transpose() * x;
  for (int i = 0; i < n; ++i)
    for (int o = 0; o < out_f_; ++o) bias_.grad[static_cast<std::size_t>(o)] += dy(i, o);
  Tensor<T> dx(input_.shape());
  MatMap<T>(dx.data(), n, in_f_).noalias() =
      dy * ConstMatMap<T>(weight_.value.data(), out_f_, in_f_);
  return dx;
}

// ------------------------------------------------------------ activations

template <typename T>
Tensor<T> Relu<T>::forward(const Tensor<T>& x, bool /*training*/) {
  output_ = x;
  for (auto& v : output_.span()) v = v > T(0) ? v : T(0);
  return output_;
}

template <typename T>
Tensor<T> Relu<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> dx = grad_out;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (!(output_[i] > T(0))) dx[i] = T(0);
  return dx;
}

template <typename T>
Tensor<T> Tanh<T>::forward(const Tensor<T>& x, bool /*training*/) {
  output_ = x;
  for (auto& v : output_.span()) v = std::tanh(v);
  return output_;
}

template <typename T>
Tensor<T> Tanh<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> dx = grad_out;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= T(1) - output_[i] * output_[i];
  return dx;
}

template <typename T>
Tensor<T> Reshape<T>::forward(const Tensor<T>& x, bool /*training*/) {
  in_shape_ = x.shape();
  return x.reshaped({x.n(), c_, h_, w_});
}

template <typename T>
Tensor<T> Reshape<T>::backward(const Tensor<T>& grad_out) {
  return grad_out.reshaped(in_shape_);
}

// ------------------------------------------------------------ Sequential

template <typename T>
Sequential<T>::Sequential(const Sequential& other) {
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

template <typename T>
Sequential<T>& Sequential<T>::operator=(const Sequential& other) {
  if (this != &other) {
    layers_.clear();
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
  }
  return *this;
}

template <typename T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& x, bool training) {
  Tensor<T> h = x;
  for (auto& l : layers_) h = l->forward(h, training);
  return h;
}

template <typename T>
Tensor<T> Sequential<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

template <typename T>
std::vector<Parameter<T>*> Sequential<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& l : layers_)
    for (auto* p : l->parameters()) out.push_back(p);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> Sequential<T>::buffers() {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  for (auto& l : layers_)
    for (auto& b : l->buffers()) out.push_back(b);
  return out;
}

template <typename T>
void add_conv_bn_relu(Sequential<T>& seq, const std::string& name, int in_c, int out_c,
                      int kernel, int stride, std::mt19937_64& rng) {
  seq.template add<Conv2d<T>>(name + ".conv", in_c, out_c, kernel, stride, kernel / 2, rng);
  seq.template add<BatchNorm2d<T>>(name + ".bn", out_c);
  seq.template add<Relu<T>>();
}

template <typename T>
void zero_grad(const std::vector<Parameter<T>*>& params) {
  for (auto* p : params) p->grad.zero();
}

// ------------------------------------------------------------------ Adam

template <typename T>
Adam<T>::Adam(std::vector<Parameter<T>*> params, Options opts)
    : params_(std::move(params)), opts_(opts) {
  for (auto* p : params_) {
    m_.emplace_back(p->value.size(), T(0));
    v_.emplace_back(p->value.size(), T(0));
  }
}

template <typename T>
void Adam<T>::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  const T b1 = static_cast<T>(opts_.beta1), b2 = static_cast<T>(opts_.beta2);
  const T step_size = static_cast<T>(opts_.lr * std::sqrt(bc2) / bc1);
  const T eps = static_cast<T>(opts_.eps * std::sqrt(bc2));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = *params_[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const T g = p.grad[i];
      m[i] = b1 * m[i] + (T(1) - b1) * g;
      v[i] = b2 * v[i] + (T(1) - b2) * g * g;
      p.value[i] -= step_size * m[i] / (std::sqrt(v[i]) + eps);
    }
  }
}

#define OODP_INSTANTIATE_NN(T)                                                              \
  template class Conv2d<T>;                                                                 \
  template class ConvTranspose2d<T>;                                                        \
  template class BatchNorm2d<T>;                                                            \
  template class Linear<T>;                                                                 \
  template class Relu<T>;                                                                   \
  template class Tanh<T>;                                                                   \
  template class Reshape<T>;                                                                \
  template class Sequential<T>;                                                             \
  template class Adam<T>;                                                                   \
  template void add_conv_bn_relu<T>(Sequential<T>&, const std::string&, int, int, int, int, \
                                    std::mt19937_64&);                                      \
  template void zero_grad<T>(const std::vector<Parameter<T>*>&);

OODP_INSTANTIATE_NN(float)
OODP_INSTANTIATE_NN(double)

}  // namespace oodp::nn
