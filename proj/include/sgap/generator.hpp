#ifndef SGAP_GENERATOR_HPP
#define SGAP_GENERATOR_HPP

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "sgap/layers.hpp"

namespace sgap {

// ============================================================================
// U-Net image-to-image generator. Five stride-2 encoder blocks halve the
// resolution down to a bottleneck where a noise map is added elementwise;
// five stride-2 transposed-conv decoder blocks climb back up, each fed the
// matching encoder map through a channel concatenation. The last block is a
// bare transposed conv into tanh so outputs live in [-1, 1].
// ============================================================================

struct GeneratorConfig {
  int input_size = 64;       // must be divisible by 32
  int input_channels = 1;
  int base_channels = 16;    // encoder widths are base * {1,2,4,8,16}
  double leaky_slope = 0.1;
  double dropout_p = 0.5;
  double noise_std = 1.0;    // stddev of the bottleneck noise map

  std::vector<std::string> validate() const {
    std::vector<std::string> v;
    if (input_size < 32 || input_size % 32 != 0)
      v.push_back("generator.input_size: must be a positive multiple of 32");
    if (input_channels < 1) v.push_back("generator.input_channels: must be >= 1");
    if (base_channels < 1) v.push_back("generator.base_channels: must be >= 1");
    if (leaky_slope <= 0.0 || leaky_slope >= 1.0)
      v.push_back("generator.leaky_slope: must be in (0,1)");
    if (dropout_p < 0.0 || dropout_p >= 1.0)
      v.push_back("generator.dropout_p: must be in [0,1)");
    if (noise_std <= 0.0) v.push_back("generator.noise_std: must be > 0");
    return v;
  }
};

// Shape of the bottleneck feature map (and therefore of the noise tensor)
// for a single image: {channels, size, size}.
inline std::vector<int> generator_bottleneck_shape(const GeneratorConfig& cfg) {
  auto violations = cfg.validate();
  if (!violations.empty()) throw ConfigError(violations);
  return {cfg.base_channels * 16, cfg.input_size / 32, cfg.input_size / 32};
}

// Gaussian noise tensor with the given shape and stddev, fully determined
// by the seed.
template <typename S>
Tensor<S> sample_noise(const std::vector<int>& shape, double stddev,
                       uint64_t seed) {
  if (stddev <= 0.0)
    throw ConfigError("sample_noise: stddev must be > 0");
  Tensor<S> z(shape);
  Rng rng(seed);
  for (auto& v : z.data) v = static_cast<S>(rng.gaussian() * stddev);
  return z;
}

template <typename S>
class Generator {
 public:
  explicit Generator(const GeneratorConfig& cfg) : cfg_(cfg) {
    auto violations = cfg.validate();
    if (!violations.empty()) throw ConfigError(violations);
    const int b = cfg.base_channels;
    const int enc_out[5] = {b, 2 * b, 4 * b, 8 * b, 16 * b};
    int in_ch = cfg.input_channels;
    for (int i = 0; i < 5; ++i) {
      enc_.push_back(EncBlock{Conv2d<S>(in_ch, enc_out[i], 4, 2, 1),
                              LeakyReLU<S>(cfg.leaky_slope),
                              BatchNorm2d<S>(enc_out[i])});
      in_ch = enc_out[i];
    }
    // Decoder inputs: bottleneck, then tconv output concatenated with the
    // mirrored encoder map.
    const int dec_in[5] = {16 * b, 16 * b, 8 * b, 4 * b, 2 * b};
    const int dec_out[4] = {8 * b, 4 * b, 2 * b, b};
    for (int i = 0; i < 4; ++i) {
      dec_.push_back(DecBlock{ConvTranspose2d<S>(dec_in[i], dec_out[i], 4, 2, 1),
                              LeakyReLU<S>(cfg.leaky_slope),
                              BatchNorm2d<S>(dec_out[i]),
                              Dropout<S>(cfg.dropout_p)});
    }
    final_tconv_ =
        std::make_unique<ConvTranspose2d<S>>(dec_in[4], cfg.input_channels, 4, 2, 1);
  }

  void init_params(uint64_t seed) {
    Rng root(seed);
    int layer = 0;
    for (auto& e : enc_) {
      e.conv.init(root.derive("init", static_cast<uint64_t>(layer++)));
      e.bn.init(root.derive("init", static_cast<uint64_t>(layer++)));
    }
    for (auto& d : dec_) {
      d.tconv.init(root.derive("init", static_cast<uint64_t>(layer++)));
      d.bn.init(root.derive("init", static_cast<uint64_t>(layer++)));
    }
    final_tconv_->init(root.derive("init", static_cast<uint64_t>(layer++)));
  }

  // images {N, C, S, S}, z {N, 16*base, S/32, S/32} -> privatized {N, C, S, S}.
  Tensor<S> forward(const Tensor<S>& images, const Tensor<S>& z, Mode mode,
                    Rng* rng = nullptr) {
    if (images.rank() != 4 || images.dim(1) != cfg_.input_channels ||
        images.dim(2) != cfg_.input_size || images.dim(3) != cfg_.input_size)
      throw ShapeError("generator input mismatch: got " + images.shape_str());
    const auto bshape = generator_bottleneck_shape(cfg_);
    check_shape(z, {images.dim(0), bshape[0], bshape[1], bshape[2]},
                "generator noise");

    Tensor<S> h = images;
    std::array<Tensor<S>, 5> e;
    for (int i = 0; i < 5; ++i) {
      auto& blk = enc_[static_cast<size_t>(i)];
      h = blk.conv.forward(h, mode);
      h = blk.lrelu.forward(h, mode);
      h = blk.bn.forward(h, mode);
      e[static_cast<size_t>(i)] = h;
    }
    for (int64_t i = 0; i < h.numel(); ++i) h[i] += z[i];

    for (int i = 0; i < 4; ++i) {
      auto& blk = dec_[static_cast<size_t>(i)];
      h = blk.tconv.forward(h, mode);
      h = blk.lrelu.forward(h, mode);
      h = blk.bn.forward(h, mode);
      h = blk.drop.forward(h, mode, rng);
      dec_out_ch_[static_cast<size_t>(i)] = h.dim(1);
      h = concat_channels(h, e[static_cast<size_t>(3 - i)]);
    }
    h = final_tconv_->forward(h, mode);
    return tanh_.forward(h, mode);
  }

  // gout {N, C, S, S} -> gradient w.r.t. the input images. The noise input
  // is not a trained quantity, so its gradient is discarded.
  Tensor<S> backward(const Tensor<S>& gout) {
    Tensor<S> g = tanh_.backward(gout);
    g = final_tconv_->backward(g);

    // Skip gradients land on encoder outputs e[0..3]; dec block i consumed
    // e[3-i], so its split-off half belongs at index 3-i.
    std::array<Tensor<S>, 4> ge;
    for (int i = 3; i >= 0; --i) {
      auto [gd, gskip] = split_channels(g, dec_out_ch_[static_cast<size_t>(i)]);
      ge[static_cast<size_t>(3 - i)] = std::move(gskip);
      auto& blk = dec_[static_cast<size_t>(i)];
      Tensor<S> gb = blk.drop.backward(gd);
      gb = blk.bn.backward(gb);
      gb = blk.lrelu.backward(gb);
      g = blk.tconv.backward(gb);
    }
    // g is now the gradient at the bottleneck (z addition is identity).
    for (int i = 4; i >= 0; --i) {
      auto& blk = enc_[static_cast<size_t>(i)];
      if (i < 4) {
        Tensor<S>& skip = ge[static_cast<size_t>(i)];
        for (int64_t j = 0; j < g.numel(); ++j) g[j] += skip[j];
      }
      Tensor<S> gb = blk.bn.backward(g);
      gb = blk.lrelu.backward(gb);
      g = blk.conv.backward(gb);
    }
    return g;
  }

  template <typename V>
  void visit_params(V&& v) {
    int i = 1;
    for (auto& e : enc_) {
      const std::string p = "enc" + std::to_string(i++);
      e.conv.visit_params(p + ".conv", v);
      e.bn.visit_params(p + ".bn", v);
    }
    i = 1;
    for (auto& d : dec_) {
      const std::string p = "dec" + std::to_string(i++);
      d.tconv.visit_params(p + ".tconv", v);
      d.bn.visit_params(p + ".bn", v);
    }
    final_tconv_->visit_params("dec5.tconv", v);
  }

  template <typename V>
  void visit_buffers(V&& v) {
    int i = 1;
    for (auto& e : enc_) e.bn.visit_buffers("enc" + std::to_string(i++) + ".bn", v);
    i = 1;
    for (auto& d : dec_) d.bn.visit_buffers("dec" + std::to_string(i++) + ".bn", v);
  }

  void zero_grads() {
    visit_params([](const std::string&, Tensor<S>&, Tensor<S>& g) { g.zero(); });
  }

  const GeneratorConfig& config() const { return cfg_; }

 private:
  struct EncBlock {
    Conv2d<S> conv;
    LeakyReLU<S> lrelu;
    BatchNorm2d<S> bn;
  };
  struct DecBlock {
    ConvTranspose2d<S> tconv;
    LeakyReLU<S> lrelu;
    BatchNorm2d<S> bn;
    Dropout<S> drop;
  };

  static Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
    const int n = a.dim(0), h = a.dim(2), w = a.dim(3);
    if (b.dim(0) != n || b.dim(2) != h || b.dim(3) != w)
      throw ShapeError("concat_channels: mismatched maps " + a.shape_str() +
                       " vs " + b.shape_str());
    Tensor<S> out({n, a.dim(1) + b.dim(1), h, w});
    const int64_t hw = static_cast<int64_t>(h) * w;
    for (int img = 0; img < n; ++img) {
      std::copy(&a.at4(img, 0, 0, 0), &a.at4(img, 0, 0, 0) + a.dim(1) * hw,
                &out.at4(img, 0, 0, 0));
      std::copy(&b.at4(img, 0, 0, 0), &b.at4(img, 0, 0, 0) + b.dim(1) * hw,
                &out.at4(img, a.dim(1), 0, 0));
    }
    return out;
  }

  static std::pair<Tensor<S>, Tensor<S>> split_channels(const Tensor<S>& x,
                                                        int c_first) {
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    Tensor<S> a({n, c_first, h, w}), b({n, x.dim(1) - c_first, h, w});
    const int64_t hw = static_cast<int64_t>(h) * w;
    for (int img = 0; img < n; ++img) {
      std::copy(&x.at4(img, 0, 0, 0), &x.at4(img, 0, 0, 0) + c_first * hw,
                &a.at4(img, 0, 0, 0));
      std::copy(&x.at4(img, c_first, 0, 0),
                &x.at4(img, c_first, 0, 0) + (x.dim(1) - c_first) * hw,
                &b.at4(img, 0, 0, 0));
    }
    return {std::move(a), std::move(b)};
  }

  GeneratorConfig cfg_;
  std::vector<EncBlock> enc_;
  std::vector<DecBlock> dec_;
  std::unique_ptr<ConvTranspose2d<S>> final_tconv_;
  Tanh<S> tanh_;
  std::array<int, 4> dec_out_ch_{};
};

}  // namespace sgap

#endif  // SGAP_GENERATOR_HPP
