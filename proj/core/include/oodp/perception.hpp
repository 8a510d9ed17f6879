#pragma once

#include <random>
#include <string>
#include <vector>

#include "oodp/nn.hpp"
#include "oodp/tensor.hpp"

namespace oodp::perception {

/// Per-pixel object membership probabilities, [N, n_O, H, W]. Channels
/// [0, n_static) are static classes, the remaining n_dynamic are dynamic
/// objects.
template <typename T>
struct MaskSet {
  Tensor<T> probs;
  int n_static = 0;
  int n_dynamic = 0;

  [[nodiscard]] int n_objects() const { return n_static + n_dynamic; }
  [[nodiscard]] int dynamic_channel(int j) const { return n_static + j; }
};

/// Channel-wise softmax at every pixel.
template <typename T>
Tensor<T> pixel_softmax(const Tensor<T>& logits);
template <typename T>
Tensor<T> pixel_softmax_backward(const Tensor<T>& probs, const Tensor<T>& d_probs);

/// A scalar loss averaged over the batch and its gradient with respect to
/// the first argument.
template <typename T>
struct LossGrad {
  T value{};
  Tensor<T> grad;
};

/// Σ -p log p over pixels and channels, divided by H·W, mean over samples.
template <typename T>
LossGrad<T> entropy_loss(const Tensor<T>& masks);

/// ‖bg_t1 − bg_t‖² / (H·W), mean over samples. `grad` is d/d bg_t; the
/// gradient for bg_t1 is its negation.
template <typename T>
LossGrad<T> background_loss(const Tensor<T>& bg_t, const Tensor<T>& bg_t1);

/// Bilinear resize with half-pixel centers and edge clamping.
template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& x, int out_h, int out_w);
template <typename T>
Tensor<T> upsample_bilinear_backward(const Tensor<T>& d_out, int in_h, int in_w);

struct DetectorConfig {
  int n_static = 3;
  int n_dynamic = 1;
  int height = 80;
  int width = 80;
};

/// n_O independent CNNs, each
///   R(BN(Conv(64,5,2))) R(BN(Conv(64,3,2))) R(BN(Conv(64,3,1)))
///   R(BN(Conv(32,1,1))) R(BN(Conv(1,3,1)))
/// whose H/4×W/4 outputs are upsampled to H×W, stacked and softmaxed.
template <typename T>
class ObjectDetector {
 public:
  ObjectDetector(const DetectorConfig& cfg, std::mt19937_64& rng);

  MaskSet<T> forward(const Tensor<T>& frames, bool training);
  /// Backpropagates d loss / d probs of the last forward call.
  void backward(const Tensor<T>& d_probs);

  std::vector<nn::Parameter<T>*> parameters();
  std::vector<std::pair<std::string, Tensor<T>*>> buffers();
  [[nodiscard]] const DetectorConfig& config() const { return cfg_; }
  /// Final convolution of object CNN c (tests zero it to force flat logits).
  nn::Sequential<T>& cnn(int c) { return cnns_[static_cast<std::size_t>(c)]; }

 private:
  DetectorConfig cfg_;
  std::vector<nn::Sequential<T>> cnns_;
  Tensor<T> probs_;
  int low_h_ = 0, low_w_ = 0;
};

/// Encoder: four Conv(64,3,2)+ReLU, FC to a 128-d code (ReLU), FC back to
/// the encoder volume (ReLU). Decoder: three Deconv(64,3,2)+ReLU and a
/// final Deconv(3,3,2) with tanh.
template <typename T>
class BackgroundExtractor {
 public:
  BackgroundExtractor(int height, int width, std::mt19937_64& rng, int channels = 64, int code = 128);

  Tensor<T> forward(const Tensor<T>& frames, bool training) { return net_.forward(frames, training); }
  void backward(const Tensor<T>& d_bg) { net_.backward(d_bg); }
  std::vector<nn::Parameter<T>*> parameters() { return net_.parameters(); }
  nn::Sequential<T>& net() { return net_; }

 private:
  nn::Sequential<T> net_;
};

/// Inference-mode conveniences for a single frame [1, 3, H, W].
template <typename T>
MaskSet<T> detect_objects(const Tensor<T>& frame, ObjectDetector<T>& detector);
template <typename T>
Tensor<T> extract_background(const Tensor<T>& frame, BackgroundExtractor<T>& extractor);

}  // namespace oodp::perception
