#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "oodp/tensor.hpp"

namespace oodp::nn {

/// A trainable tensor and its accumulated gradient.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

/// Layers cache what they need from the last forward call; backward must
/// follow the matching forward. Parameter gradients accumulate until
/// zero_grad().
template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const Tensor<T>& x, bool training) = 0;
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
  virtual std::vector<Parameter<T>*> parameters() { return {}; }
  /// Non-trainable state that belongs in a checkpoint (running statistics).
  virtual std::vector<std::pair<std::string, Tensor<T>*>> buffers() { return {}; }
  virtual std::unique_ptr<Layer> clone() const = 0;
};

template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride,
         int padding, std::mt19937_64& rng);

  Tensor<T> forward(const Tensor<T>& x, bool training) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Conv2d>(*this); }

  [[nodiscard]] int out_size(int in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }
  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  int in_c_, out_c_, k_, stride_, pad_;
  Parameter<T> weight_;  // [out_c, in_c * k * k]
  Parameter<T> bias_;    // [out_c]
  Tensor<T> input_;
};

/// Transposed convolution; output size is stride * in when
/// kernel - 2 * padding + output_padding == stride.
template <typename T>
class ConvTranspose2d final : public Layer<T> {
 public:
  ConvTranspose2d(std::string name, int in_channels, int out_channels, int kernel, int stride,
                  int padding, int output_padding, std::mt19937_64& rng);

  Tensor<T> forward(const Tensor<T>& x, bool training) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<ConvTranspose2d>(*this);
  }

  [[nodiscard]] int out_size(int in) const { return (in - 1) * stride_ - 2 * pad_ + k_ + out_pad_; }
  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  int in_c_, out_c_, k_, stride_, pad_, out_pad_;
  Parameter<T> weight_;  // [in_c, out_c * k * k]
  Parameter<T> bias_;    // [out_c]
  Tensor<T> input_;
};

/// Per-channel batch normalization. Training uses batch statistics and
/// updates running averages as running = momentum * running + (1 - momentum) * batch.
template <typename T>
class BatchNorm2d final : public Layer<T> {
 public:
  BatchNorm2d(std::string name, int channels, T momentum = T(0.9), T eps = T(1e-5));

  Tensor<T> forward(const Tensor<T>& x, bool training) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::vector<Parameter<T>*> parameters() override { return {&gamma_, &beta_}; }
  std::vector<std::pair<std::string, Tensor<T>*>> buffers() override;
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<BatchNorm2d>(*this); }

  Parameter<T>& gamma() { return gamma_; }
  Parameter<T>& beta() { return beta_; }

 private:
  std::string name_;
  int channels_;
  T momentum_, eps_;
  Parameter<T> gamma_, beta_;
  Tensor<T> running_mean_, running_var_;
  // cache
  bool cached_training_ = false;
  Tensor<T> x_hat_;
  std::vector<T> inv_std_;
};

/// Fully connected layer over the flattened C*H*W features of each sample.
template <typename T>
class Linear final : public Layer<T> {
 public:
  Linear(std::string name, int in_features, int out_features, std::mt19937_64& rng);

  Tensor<T> forward(const Tensor<T>& x, bool training) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Linear>(*this); }

  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  int in_f_, out_f_;
  Parameter<T> weight_;  // [out, in]
  Parameter<T> bias_;
  Tensor<T> input_;
};

template <typename T>
class Relu final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, bool training) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Relu>(*this); }

 private:
  Tensor<T> output_;
};

template <typename T>
class Tanh final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, bool training) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Tanh>(*this); }

 private:
  Tensor<T> output_;
};

/// Reinterprets [N, C*H*W, 1, 1] features as [N, C, H, W].
template <typename T>
class Reshape final : public Layer<T> {
 public:
  Reshape(int c, int h, int w) : c_(c), h_(h), w_(w) {}
  Tensor<T> forward(const Tensor<T>& x, bool training) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Reshape>(*this); }

 private:
  int c_, h_, w_;
  Shape in_shape_{};
};

template <typename T>
class Sequential {
 public:
  Sequential() = default;
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential& other);
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Tensor<T> forward(const Tensor<T>& x, bool training);
  Tensor<T> backward(const Tensor<T>& grad_out);
  std::vector<Parameter<T>*> parameters();
  std::vector<std::pair<std::string, Tensor<T>*>> buffers();
  [[nodiscard]] std::size_t size() const { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_[i]; }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

/// Conv -> BatchNorm -> ReLU, the building block of the detector and
/// relation CNNs.
template <typename T>
void add_conv_bn_relu(Sequential<T>& seq, const std::string& name, int in_c, int out_c,
                      int kernel, int stride, std::mt19937_64& rng);

template <typename T>
void zero_grad(const std::vector<Parameter<T>*>& params);

/// Adam with bias correction.
template <typename T>
class Adam {
 public:
  struct Options {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam(std::vector<Parameter<T>*> params, Options opts);
  void step();
  [[nodiscard]] std::int64_t steps_taken() const { return t_; }
  [[nodiscard]] const Options& options() const { return opts_; }

 private:
  std::vector<Parameter<T>*> params_;
  Options opts_;
  std::int64_t t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

}  // namespace oodp::nn
