#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lesionforge/image.hpp"
#include "lesionforge/manifest.hpp"
#include "lesionforge/nn.hpp"

namespace lesionforge {

struct ClassifierArch {
  int input_height = 256;
  int input_width = 128;
  int base_channels = 8;
  std::string pooling = "avg";      // avg | max | lse
  std::string resize_policy = "pad";  // pad (aspect-preserving letterbox) | stretch
  // Optional fixed stem: "highpass" feeds the network the local-contrast
  // residual (input minus a box-blurred copy, recentered at 0.5) instead of
  // raw intensities. Suppresses global anatomy cues in favor of local
  // structure.
  std::string input_filter = "none";  // none | highpass

  void validate() const;
};

struct ClassifierTrainConfig {
  double lr = 0.0001;           // adaptive-moment optimizer, initial rate
  double plateau_decay = 0.9;   // lr multiplier when val AUC plateaus
  int plateau_patience = 3;     // epochs without val improvement before decay
  double min_delta = 1e-4;
  double weight_decay = 1e-4;
  int batch = 16;
  int max_epochs = 30;
  int early_stop_patience = 12;
  int freeze_prefix_blocks = 0;  // exclude the first k conv blocks from updates
  bool aug_flip = true;
  bool aug_rotate = true;
  bool aug_translate = true;
  double aug_rotate_max_deg = 7.0;
  double aug_translate_max_frac = 0.05;
  // Balanced half-positive/half-negative batches (positives recycled with
  // replacement). Same expected gradient as inverse-frequency loss weights
  // over uniform batches, with far lower variance on heavily imbalanced sets;
  // the loss weights are dropped when this is on.
  bool balanced_batches = false;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  double train_loss = 0.0;
  double val_auc = 0.0;
  double lr = 0.0;
};

// Small convolutional lesion/non-lesion scorer: three stride-2 blocks, two
// dilated blocks widening the receptive field, global pooling, linear head.
template <typename S>
class SmallConvNet {
 public:
  SmallConvNet(const ClassifierArch& arch, std::uint64_t init_seed) : arch_(arch), seed_(init_seed) {
    arch.validate();
    Rng rng(init_seed);
    nn::Shape shape{1, arch.input_height, arch.input_width};
    const int c = arch.base_channels;
    shape = add_block(shape, c, 2, 1, rng);       // blocks 1-3: stride-2 downsampling
    shape = add_block(shape, 2 * c, 2, 1, rng);
    shape = add_block(shape, 4 * c, 2, 1, rng);
    shape = add_block(shape, 4 * c, 1, 2, rng);   // blocks 4-5: dilated, stride 1
    shape = add_block(shape, 4 * c, 1, 4, rng);
    if (arch.pooling == "max") {
      net_.template add<nn::GlobalMaxPool<S>>(shape);
    } else if (arch.pooling == "lse") {
      net_.template add<nn::GlobalLsePool<S>>(shape, 0.5);
    } else {
      net_.template add<nn::GlobalAvgPool<S>>(shape);
    }
    auto* head = net_.template add<nn::Linear<S>>(nn::Shape{shape.c, 1, 1}, 1, "head");
    head->init_he(rng);
    n_blocks_ = 5;
  }

  const ClassifierArch& arch() const { return arch_; }
  std::uint64_t init_seed() const { return seed_; }

  // Raw logit; the score is sigmoid(logit).
  S logit(const nn::Mat<S>& x, bool cache) { return net_.forward(x, cache)(0, 0); }

  void backward_logit(S dlogit) {
    nn::Mat<S> seed(1, 1);
    seed(0, 0) = dlogit;
    net_.backward(seed);
  }

  std::vector<nn::Param<S>*> params() { return net_.params(); }

  // Parameters of conv blocks k.. plus the head; supports freeze-prefix
  // fine-tuning.
  std::vector<nn::Param<S>*> trainable_params(int freeze_prefix_blocks) {
    auto all = net_.params();
    if (freeze_prefix_blocks <= 0) return all;
    // Each conv block contributes one weight + one bias, in order.
    const std::size_t skip = static_cast<std::size_t>(std::min(freeze_prefix_blocks, n_blocks_)) * 2;
    return {all.begin() + static_cast<std::ptrdiff_t>(std::min(skip, all.size())), all.end()};
  }

 private:
  nn::Shape add_block(nn::Shape in, int out_c, int stride, int dilation, Rng& rng) {
    const int pad = dilation;  // 3x3 kernels: pad == dilation preserves size at stride 1
    auto* conv = net_.template add<nn::Conv2d<S>>(in, out_c, 3, stride, pad, dilation,
                                                  "b" + std::to_string(next_block_++));
    conv->init_he(rng);
    const nn::Shape out = conv->out_shape();
    net_.template add<nn::LeakyReLU<S>>(out, 0.1);
    return out;
  }

  ClassifierArch arch_;
  std::uint64_t seed_;
  nn::Sequential<S> net_;
  int next_block_ = 0;
  int n_blocks_ = 0;
};

// Weights + metadata; the deployable artifact.
class Classifier {
 public:
  Classifier(const ClassifierArch& arch, std::uint64_t init_seed)
      : net_(arch, init_seed), id_("classifier") {}

  // Deterministic score in [0,1]; the input image is resampled to the model
  // resolution according to the arch's resize policy.
  double score(const ImageF& image) const;

  // Scores in manifest order.
  std::vector<double> score_batch(const std::vector<ImageF>& images) const;

  const ClassifierArch& arch() const { return net_.arch(); }
  SmallConvNet<float>& net() { return net_; }
  const SmallConvNet<float>& net() const { return net_; }

  const std::string& id() const { return id_; }
  void set_id(std::string id) { id_ = std::move(id); }

  std::vector<EpochRecord> history;

  void save(const std::filesystem::path& path) const;
  static Classifier load(const std::filesystem::path& path);

  // Model-resolution view of an arbitrary image.
  ImageF prepare(const ImageF& image) const;

 private:
  mutable SmallConvNet<float> net_;  // forward with cache=false is logically const
  std::string id_;
};

// Preloaded training example.
struct LabeledImage {
  ImageF pixels;  // already at model resolution
  int label = 0;
};

// Class-weighted binary cross-entropy training with train-time linear
// augmentation (flip / small rotation / small translation), plateau-triggered
// learning-rate decay on validation AUC, and best-val-AUC checkpointing.
// Throws DataError when the training set is single-class.
Classifier train_classifier(const std::vector<LabeledImage>& train,
                            const std::vector<LabeledImage>& val, const ClassifierArch& arch,
                            const ClassifierTrainConfig& cfg);

// Manifest convenience wrapper: loads images from disk at model resolution.
std::vector<LabeledImage> load_labeled_images(const DatasetManifest& manifest,
                                              const std::filesystem::path& manifest_path,
                                              const ClassifierArch& arch, Split split);

}  // namespace lesionforge
