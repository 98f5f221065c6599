#ifndef SGAP_UTILITY_HARNESS_HPP
#define SGAP_UTILITY_HARNESS_HPP

#include <array>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "sgap/data_pipeline.hpp"
#include "sgap/generator.hpp"
#include "sgap/layers.hpp"

namespace sgap {

// ============================================================================
// Measures how much of a dataset's downstream usefulness survives
// privatization. An independent attribute classifier is trained from scratch
// on privatized images under k-fold cross validation; its held-out accuracy,
// compared against the same classifier trained on untouched images, is the
// utility number reported per lambda.
// ============================================================================

enum class ProxyClassifier { kSmallCnn, kPretrainedFinetune };

const char* proxy_classifier_name(ProxyClassifier c);
ProxyClassifier proxy_classifier_from_name(const std::string& name);

struct UtilityConfig {
  int folds = 4;
  ProxyClassifier classifier = ProxyClassifier::kSmallCnn;
  int epochs = 20;
  int batch_size = 32;
  double lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  uint64_t seed = 1;
  // Parameter archive that seeds the classifier weights in finetune mode.
  std::string pretrained_path;

  std::vector<std::string> validate() const {
    std::vector<std::string> v;
    if (folds < 2) v.push_back("utility.folds: must be >= 2");
    if (epochs < 1) v.push_back("utility.epochs: must be >= 1");
    if (batch_size < 1) v.push_back("utility.batch_size: must be >= 1");
    if (lr <= 0.0) v.push_back("utility.lr: must be > 0");
    if (adam_beta1 < 0.0 || adam_beta1 >= 1.0)
      v.push_back("utility.adam_beta1: must be in [0,1)");
    if (adam_beta2 < 0.0 || adam_beta2 >= 1.0)
      v.push_back("utility.adam_beta2: must be in [0,1)");
    if (adam_eps <= 0.0) v.push_back("utility.adam_eps: must be > 0");
    if (classifier == ProxyClassifier::kPretrainedFinetune &&
        pretrained_path.empty())
      v.push_back("utility.pretrained_path: required for pretrained_finetune");
    return v;
  }
};

struct UtilityReport {
  double lambda = 0.0;
  double accuracy_mean = 0.0;
  double accuracy_std = 0.0;
  std::vector<double> per_fold;
  double baseline_accuracy_mean = 0.0;
};

// ----------------------------------------------------------------------------
// The classifier itself
// ----------------------------------------------------------------------------

struct SmallCnnConfig {
  int input_size = 64;
  int input_channels = 1;
  int classes = 4;
  std::array<int, 3> conv_channels = {8, 16, 32};

  std::vector<std::string> validate() const {
    std::vector<std::string> v;
    if (input_size < 8) v.push_back("small_cnn.input_size: must be >= 8");
    if (input_channels < 1) v.push_back("small_cnn.input_channels: must be >= 1");
    if (classes < 2) v.push_back("small_cnn.classes: must be >= 2");
    for (int c : conv_channels)
      if (c < 1) v.push_back("small_cnn.conv_channels: entries must be >= 1");
    return v;
  }
};

// Spatial size after the three valid-conv + pool stages.
inline int small_cnn_flatten_dim(const SmallCnnConfig& cfg) {
  auto violations = cfg.validate();
  if (!violations.empty()) throw ConfigError(violations);
  int hw = cfg.input_size;
  for (int i = 0; i < 3; ++i) {
    hw = (hw - 2) / 2;
    if (hw < 1)
      throw ConfigError("small_cnn.input_size: too small for three conv blocks");
  }
  return cfg.conv_channels[2] * hw * hw;
}

// Three blocks of 3x3 valid convolution, rectifier and 2x2 maxpool, then a
// single dense layer producing class logits. No normalization or dropout, so
// train and eval behave identically.
template <typename S>
class SmallCnn {
 public:
  explicit SmallCnn(const SmallCnnConfig& cfg)
      : cfg_(cfg), flatten_(small_cnn_flatten_dim(cfg)) {
    int in_ch = cfg.input_channels;
    for (int i = 0; i < 3; ++i) {
      const int out_ch = cfg.conv_channels[static_cast<size_t>(i)];
      convs_.push_back(Conv2d<S>(in_ch, out_ch, 3, 1, 0));
      in_ch = out_ch;
    }
    dense_ = std::make_unique<Dense<S>>(flatten_, cfg.classes);
  }

  const SmallCnnConfig& config() const { return cfg_; }

  void init_params(uint64_t seed) {
    Rng root(seed);
    for (size_t i = 0; i < convs_.size(); ++i)
      convs_[i].init(root.derive("init", static_cast<uint64_t>(i)));
    dense_->init(root.derive("init", 3));
  }

  // images {N, C, H, W} -> logits {N, classes}
  Tensor<S> forward(const Tensor<S>& images, Mode mode) {
    if (images.rank() != 4 || images.dim(1) != cfg_.input_channels ||
        images.dim(2) != cfg_.input_size || images.dim(3) != cfg_.input_size)
      throw ShapeError("classifier input mismatch: got " + images.shape_str());
    Tensor<S> h = images;
    for (size_t i = 0; i < convs_.size(); ++i) {
      h = convs_[i].forward(h, mode);
      h = acts_[i].forward(h, mode);
      h = pools_[i].forward(h, mode);
    }
    const int n = h.dim(0);
    h.shape = {n, flatten_};
    return dense_->forward(h, mode);
  }

  void backward(const Tensor<S>& glogits) {
    Tensor<S> g = dense_->backward(glogits);
    const int n = g.dim(0);
    int hw = cfg_.input_size;
    for (int i = 0; i < 3; ++i) hw = (hw - 2) / 2;
    g.shape = {n, cfg_.conv_channels[2], hw, hw};
    for (int i = 2; i >= 0; --i) {
      g = pools_[static_cast<size_t>(i)].backward(g);
      g = acts_[static_cast<size_t>(i)].backward(g);
      g = convs_[static_cast<size_t>(i)].backward(g);
    }
  }

  void zero_grads() {
    visit_params([](const std::string&, Tensor<S>&, Tensor<S>& grad) {
      grad.zero();
    });
  }

  template <typename V>
  void visit_params(V&& v) {
    for (size_t i = 0; i < convs_.size(); ++i)
      convs_[i].visit_params("conv" + std::to_string(i + 1), v);
    dense_->visit_params("dense", v);
  }
  template <typename V>
  void visit_buffers(V&&) {}

 private:
  SmallCnnConfig cfg_;
  int flatten_;
  std::vector<Conv2d<S>> convs_;
  std::array<ReLU<S>, 3> acts_;
  std::array<MaxPool2<S>, 3> pools_;
  std::unique_ptr<Dense<S>> dense_;
};

// Mean of -log softmax(logits)[label] over the batch. When dlogits is given
// it receives (softmax - onehot) / N, the gradient of that mean.
template <typename S>
double softmax_cross_entropy(const Tensor<S>& logits,
                             const std::vector<int>& labels,
                             Tensor<S>* dlogits = nullptr) {
  if (logits.rank() != 2) throw ShapeError("logits must be {N, classes}");
  const int n = logits.dim(0), c = logits.dim(1);
  if (static_cast<size_t>(n) != labels.size())
    throw ShapeError("label count does not match batch size");
  if (dlogits) *dlogits = Tensor<S>({n, c});
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const int label = labels[static_cast<size_t>(i)];
    if (label < 0 || label >= c) throw ShapeError("label out of class range");
    const S* row = logits.ptr() + static_cast<int64_t>(i) * c;
    double mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double denom = 0.0;
    for (int j = 0; j < c; ++j) denom += std::exp(static_cast<double>(row[j]) - mx);
    loss += std::log(denom) - (static_cast<double>(row[label]) - mx);
    if (dlogits) {
      S* grow = dlogits->ptr() + static_cast<int64_t>(i) * c;
      for (int j = 0; j < c; ++j) {
        const double p = std::exp(static_cast<double>(row[j]) - mx) / denom;
        grow[j] = static_cast<S>((p - (j == label ? 1.0 : 0.0)) / n);
      }
    }
  }
  return loss / n;
}

template <typename S>
std::vector<int> argmax_rows(const Tensor<S>& logits) {
  if (logits.rank() != 2) throw ShapeError("logits must be {N, classes}");
  const int n = logits.dim(0), c = logits.dim(1);
  std::vector<int> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const S* row = logits.ptr() + static_cast<int64_t>(i) * c;
    int best = 0;
    for (int j = 1; j < c; ++j)
      if (row[j] > row[best]) best = j;
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

// ----------------------------------------------------------------------------
// Operations
// ----------------------------------------------------------------------------

// Runs every corpus image through the generator in eval mode with freshly
// sampled bottleneck noise; identity and attribute labels are carried through
// untouched. A null generator selects the passthrough baseline, which applies
// only the tanh range squash every generated image receives, so baseline and
// privatized corpora are directly comparable.
std::vector<ImageRecord> privatize_corpus(Generator<float>* gen,
                                          const std::vector<ImageRecord>& corpus,
                                          uint64_t seed);

// Deterministic stratified split: per attribute class, a seeded shuffle
// followed by round-robin assignment, so fold sizes per class differ by at
// most one. Throws if any fold would miss a class entirely.
std::vector<std::vector<int>> stratified_folds(
    const std::vector<ImageRecord>& corpus, int folds, uint64_t seed);

// Trains the configured classifier from scratch on each train split and
// evaluates attribute accuracy on the held-out fold. lambda and
// baseline_accuracy_mean in the result are left for the caller to fill.
UtilityReport proxy_accuracy(const std::vector<ImageRecord>& corpus,
                             const UtilityConfig& cfg);

}  // namespace sgap

#endif  // SGAP_UTILITY_HARNESS_HPP
