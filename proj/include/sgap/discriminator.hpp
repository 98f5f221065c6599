#ifndef SGAP_DISCRIMINATOR_HPP
#define SGAP_DISCRIMINATOR_HPP

#include <array>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "sgap/layers.hpp"

namespace sgap {

// ============================================================================
// Siamese identity verifier. Two images run through one shared branch network
// that maps each to a low-dimensional embedding; the pair's similarity is a
// sigmoid-shaped function of the squared embedding distance. Training and
// evaluation both work on the embeddings, so the branch is the whole model.
// ============================================================================

struct DiscriminatorConfig {
  int input_size = 64;                       // square inputs only
  int input_channels = 1;
  std::array<int, 3> conv_channels = {16, 32, 64};
  int embedding_dim = 15;
  int dense_width = 500;
  double leaky_slope = 0.1;
  double dropout_p = 0.2;
  double margin = 2.0;                       // m in the similarity head
  bool pool_after_block = true;              // 2x2 maxpool closing each block

  std::vector<std::string> validate() const {
    std::vector<std::string> v;
    if (input_size < 8) v.push_back("discriminator.input_size: must be >= 8");
    if (input_channels < 1) v.push_back("discriminator.input_channels: must be >= 1");
    for (int c : conv_channels)
      if (c < 1) v.push_back("discriminator.conv_channels: entries must be >= 1");
    if (embedding_dim < 1) v.push_back("discriminator.embedding_dim: must be >= 1");
    if (dense_width < 1) v.push_back("discriminator.dense_width: must be >= 1");
    if (leaky_slope <= 0.0 || leaky_slope >= 1.0)
      v.push_back("discriminator.leaky_slope: must be in (0,1)");
    if (dropout_p < 0.0 || dropout_p >= 1.0)
      v.push_back("discriminator.dropout_p: must be in [0,1)");
    if (margin <= 0.0) v.push_back("discriminator.margin: must be > 0");
    return v;
  }
};

struct DiscriminatorShapes {
  std::array<int, 3> block_hw;  // spatial size after each block
  int flatten = 0;
};

// Spatial bookkeeping without building the network: each block is a 3x3
// valid conv, optionally followed by a 2x2 floor-mode maxpool.
inline DiscriminatorShapes discriminator_shapes(const DiscriminatorConfig& cfg) {
  auto violations = cfg.validate();
  if (!violations.empty()) throw ConfigError(violations);
  DiscriminatorShapes s;
  int hw = cfg.input_size;
  for (int i = 0; i < 3; ++i) {
    hw -= 2;
    if (cfg.pool_after_block) hw /= 2;
    if (hw < 1)
      throw ConfigError("discriminator.input_size: too small for three conv blocks");
    s.block_hw[static_cast<size_t>(i)] = hw;
  }
  s.flatten = cfg.conv_channels[2] * hw * hw;
  return s;
}

template <typename S>
class Discriminator {
 public:
  explicit Discriminator(const DiscriminatorConfig& cfg)
      : cfg_(cfg), shapes_(discriminator_shapes(cfg)),
        act1_(cfg.leaky_slope), act2_(cfg.leaky_slope) {
    int in_ch = cfg.input_channels;
    for (int i = 0; i < 3; ++i) {
      const int out_ch = cfg.conv_channels[static_cast<size_t>(i)];
      blocks_.push_back(Block{
          Conv2d<S>(in_ch, out_ch, 3, 1, 0),
          LeakyReLU<S>(cfg.leaky_slope),
          BatchNorm2d<S>(out_ch),
          Dropout<S>(cfg.dropout_p),
          MaxPool2<S>()});
      in_ch = out_ch;
    }
    dense1_ = std::make_unique<Dense<S>>(shapes_.flatten, cfg.dense_width);
    dense2_ = std::make_unique<Dense<S>>(cfg.dense_width, cfg.dense_width);
    head_ = std::make_unique<Dense<S>>(cfg.dense_width, cfg.embedding_dim);
  }

  void init_params(uint64_t seed) {
    Rng root(seed);
    int layer = 0;
    for (auto& b : blocks_) {
      b.conv.init(root.derive("init", static_cast<uint64_t>(layer++)));
      b.bn.init(root.derive("init", static_cast<uint64_t>(layer++)));
    }
    dense1_->init(root.derive("init", static_cast<uint64_t>(layer++)));
    dense2_->init(root.derive("init", static_cast<uint64_t>(layer++)));
    head_->init(root.derive("init", static_cast<uint64_t>(layer++)));
  }

  // images {N, C, H, W} -> embeddings {N, embedding_dim}. The rng drives
  // dropout masks and may be null in eval mode.
  Tensor<S> embed(const Tensor<S>& images, Mode mode, Rng* rng = nullptr) {
    if (images.rank() != 4 || images.dim(1) != cfg_.input_channels ||
        images.dim(2) != cfg_.input_size || images.dim(3) != cfg_.input_size)
      throw ShapeError("discriminator input mismatch: got " + images.shape_str());
    Tensor<S> h = images;
    for (auto& b : blocks_) {
      h = b.conv.forward(h, mode);
      h = b.lrelu.forward(h, mode);
      h = b.bn.forward(h, mode);
      h = b.drop.forward(h, mode, rng);
      if (cfg_.pool_after_block) h = b.pool.forward(h, mode);
    }
    const int n = h.dim(0);
    h.shape = {n, shapes_.flatten};
    h = dense1_->forward(h, mode);
    h = act1_.forward(h, mode);
    h = dense2_->forward(h, mode);
    h = act2_.forward(h, mode);
    return head_->forward(h, mode);
  }

  // gemb {N, embedding_dim} -> gradient w.r.t. the input images. Parameter
  // gradients accumulate into the layers.
  Tensor<S> backward(const Tensor<S>& gemb) {
    Tensor<S> g = head_->backward(gemb);
    g = act2_.backward(g);
    g = dense2_->backward(g);
    g = act1_.backward(g);
    g = dense1_->backward(g);
    const int n = g.dim(0);
    const int hw = shapes_.block_hw[2];
    g.shape = {n, cfg_.conv_channels[2], hw, hw};
    for (int i = 2; i >= 0; --i) {
      auto& b = blocks_[static_cast<size_t>(i)];
      if (cfg_.pool_after_block) g = b.pool.backward(g);
      g = b.drop.backward(g);
      g = b.bn.backward(g);
      g = b.lrelu.backward(g);
      g = b.conv.backward(g);
    }
    return g;
  }

  template <typename V>
  void visit_params(V&& v) {
    int i = 1;
    for (auto& b : blocks_) {
      const std::string p = "block" + std::to_string(i++);
      b.conv.visit_params(p + ".conv", v);
      b.bn.visit_params(p + ".bn", v);
    }
    dense1_->visit_params("dense1", v);
    dense2_->visit_params("dense2", v);
    head_->visit_params("head", v);
  }

  template <typename V>
  void visit_buffers(V&& v) {
    int i = 1;
    for (auto& b : blocks_) {
      const std::string p = "block" + std::to_string(i++);
      b.bn.visit_buffers(p + ".bn", v);
    }
  }

  void zero_grads() {
    visit_params([](const std::string&, Tensor<S>&, Tensor<S>& g) { g.zero(); });
  }

  const DiscriminatorConfig& config() const { return cfg_; }
  const DiscriminatorShapes& shapes() const { return shapes_; }

 private:
  struct Block {
    Conv2d<S> conv;
    LeakyReLU<S> lrelu;
    BatchNorm2d<S> bn;
    Dropout<S> drop;
    MaxPool2<S> pool;
  };

  DiscriminatorConfig cfg_;
  DiscriminatorShapes shapes_;
  LeakyReLU<S> act1_, act2_;
  std::vector<Block> blocks_;
  std::unique_ptr<Dense<S>> dense1_, dense2_, head_;
};

// ----------------------------------------------------------------------------
// Similarity head: P(same | a, b) = (1 + e^-m) / (1 + e^(d^2 - m)) with d the
// Euclidean embedding distance. P is 1 at d = 0 and crosses 1/2 near d^2 = m.
// ----------------------------------------------------------------------------

inline double similarity_probability_from_d2(double d2, double margin) {
  const double t = d2 - margin;
  // (1 + e^-m) * sigmoid(-t), computed on the stable side of the exp.
  const double a = 1.0 + std::exp(-margin);
  if (t >= 0.0) {
    const double e = std::exp(-t);
    return a * e / (1.0 + e);
  }
  return a / (1.0 + std::exp(t));
}

template <typename S>
double similarity_probability(const Tensor<S>& a, const Tensor<S>& b,
                              double margin) {
  if (!a.same_shape(b) || a.rank() != 1)
    throw ShapeError("similarity_probability expects two equal-length vectors");
  double d2 = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    d2 += diff * diff;
  }
  return similarity_probability_from_d2(d2, margin);
}

// Batch form over embeddings {N, E} x {N, E} -> N probabilities.
template <typename S>
std::vector<double> similarity_probabilities(const Tensor<S>& ea,
                                             const Tensor<S>& eb,
                                             double margin) {
  if (!ea.same_shape(eb) || ea.rank() != 2)
    throw ShapeError("similarity_probabilities expects matching {N,E} tensors");
  const int n = ea.dim(0), e = ea.dim(1);
  std::vector<double> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    double d2 = 0.0;
    for (int j = 0; j < e; ++j) {
      const double diff = static_cast<double>(ea.data[static_cast<size_t>(i) * e + j]) -
                          static_cast<double>(eb.data[static_cast<size_t>(i) * e + j]);
      d2 += diff * diff;
    }
    out[static_cast<size_t>(i)] = similarity_probability_from_d2(d2, margin);
  }
  return out;
}

// Accumulates dL/d(ea), dL/d(eb) given dL/dp for each pair.
// dp/d(d^2) = -p * sigmoid(d^2 - m), d(d^2)/d(ea) = 2 (ea - eb).
template <typename S>
void similarity_backward(const Tensor<S>& ea, const Tensor<S>& eb, double margin,
                         const std::vector<double>& dldp, Tensor<S>& gea,
                         Tensor<S>& geb) {
  const int n = ea.dim(0), e = ea.dim(1);
  for (int i = 0; i < n; ++i) {
    double d2 = 0.0;
    for (int j = 0; j < e; ++j) {
      const double diff = static_cast<double>(ea.data[static_cast<size_t>(i) * e + j]) -
                          static_cast<double>(eb.data[static_cast<size_t>(i) * e + j]);
      d2 += diff * diff;
    }
    const double p = similarity_probability_from_d2(d2, margin);
    const double t = d2 - margin;
    const double sig_t = t >= 0.0 ? 1.0 / (1.0 + std::exp(-t))
                                  : std::exp(t) / (1.0 + std::exp(t));
    const double dp_dd2 = -p * sig_t;
    const double scale = dldp[static_cast<size_t>(i)] * dp_dd2 * 2.0;
    for (int j = 0; j < e; ++j) {
      const size_t idx = static_cast<size_t>(i) * e + j;
      const double diff =
          static_cast<double>(ea.data[idx]) - static_cast<double>(eb.data[idx]);
      gea.data[idx] += static_cast<S>(scale * diff);
      geb.data[idx] -= static_cast<S>(scale * diff);
    }
  }
}

// Concatenates two {N,...} batches along the batch axis.
template <typename S>
Tensor<S> concat_batches(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != b.rank())
    throw ShapeError("concat_batches rank mismatch");
  for (int i = 1; i < a.rank(); ++i)
    if (a.dim(i) != b.dim(i)) throw ShapeError("concat_batches shape mismatch");
  std::vector<int> shp = a.shape;
  shp[0] += b.dim(0);
  Tensor<S> out(shp);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.numel());
  return out;
}

template <typename S>
std::pair<Tensor<S>, Tensor<S>> split_batches(const Tensor<S>& x, int n_first) {
  std::vector<int> sa = x.shape, sb = x.shape;
  sa[0] = n_first;
  sb[0] = x.dim(0) - n_first;
  Tensor<S> a(sa), b(sb);
  std::copy(x.data.begin(), x.data.begin() + a.numel(), a.data.begin());
  std::copy(x.data.begin() + a.numel(), x.data.end(), b.data.begin());
  return {std::move(a), std::move(b)};
}

}  // namespace sgap

#endif  // SGAP_DISCRIMINATOR_HPP
