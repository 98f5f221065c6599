#ifndef SGAP_LAYERS_HPP
#define SGAP_LAYERS_HPP

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "sgap/common.hpp"
#include "sgap/rng.hpp"
#include "sgap/tensor.hpp"

namespace sgap {

// ============================================================================
// Building blocks shared by the generator, the discriminator and the proxy
// classifier. Every layer owns its parameters and gradients, caches what the
// backward pass needs during forward, and is written against plain row-major
// buffers with Eigen doing the heavy matrix products.
//
// Convolutions run as im2col + GEMM over the whole batch at once; transposed
// convolutions are the exact adjoint (GEMM + col2im). Single threaded on
// purpose: results must be bit-reproducible run to run.
// ============================================================================

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatMap = Eigen::Map<RowMat<S>>;
template <typename S>
using ConstMatMap = Eigen::Map<const RowMat<S>>;

inline int conv_out_dim(int in, int k, int stride, int pad) {
  const int num = in + 2 * pad - k;
  if (num < 0 || num % stride != 0)
    throw ShapeError("conv geometry does not tile: in=" + std::to_string(in) +
                     " k=" + std::to_string(k) + " stride=" + std::to_string(stride) +
                     " pad=" + std::to_string(pad));
  return num / stride + 1;
}

// Fills cols[(C*K*K) x (N*Ho*Wo)] from x{N,C,H,W}. Column index is
// n*Ho*Wo + oy*Wo + ox so each sample occupies a contiguous column block.
template <typename S>
void im2col(const Tensor<S>& x, int k, int stride, int pad, int ho, int wo,
            S* cols) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t l = static_cast<int64_t>(n) * ho * wo;
  for (int ch = 0; ch < c; ++ch) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        S* row = cols + ((static_cast<int64_t>(ch) * k + ki) * k + kj) * l;
        for (int img = 0; img < n; ++img) {
          const S* src = &x.at4(img, ch, 0, 0);
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride - pad + ki;
            S* dst = row + (static_cast<int64_t>(img) * ho + oy) * wo;
            if (iy < 0 || iy >= h) {
              std::fill(dst, dst + wo, S(0));
              continue;
            }
            const S* src_row = src + static_cast<int64_t>(iy) * w;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride - pad + kj;
              dst[ox] = (ix >= 0 && ix < w) ? src_row[ix] : S(0);
            }
          }
        }
      }
    }
  }
}

// Scatter-add adjoint of im2col.
template <typename S>
void col2im(const S* cols, int k, int stride, int pad, int ho, int wo,
            Tensor<S>& x) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t l = static_cast<int64_t>(n) * ho * wo;
  x.zero();
  for (int ch = 0; ch < c; ++ch) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const S* row = cols + ((static_cast<int64_t>(ch) * k + ki) * k + kj) * l;
        for (int img = 0; img < n; ++img) {
          S* dst = &x.at4(img, ch, 0, 0);
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride - pad + ki;
            if (iy < 0 || iy >= h) continue;
            const S* src = row + (static_cast<int64_t>(img) * ho + oy) * wo;
            S* dst_row = dst + static_cast<int64_t>(iy) * w;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride - pad + kj;
              if (ix >= 0 && ix < w) dst_row[ix] += src[ox];
            }
          }
        }
      }
    }
  }
}

template <typename S>
class Conv2d {
 public:
  Conv2d(int in_ch, int out_ch, int k, int stride, int pad)
      : in_ch_(in_ch), out_ch_(out_ch), k_(k), stride_(stride), pad_(pad),
        w_({out_ch, in_ch, k, k}), b_({out_ch}),
        gw_({out_ch, in_ch, k, k}), gb_({out_ch}) {}

  void init(Rng rng) {
    for (auto& v : w_.data) v = static_cast<S>(rng.gaussian() * 0.02);
    b_.zero();
  }

  Tensor<S> forward(const Tensor<S>& x, Mode, Rng* = nullptr) {
    if (x.rank() != 4 || x.dim(1) != in_ch_)
      throw ShapeError("conv input mismatch: got " + x.shape_str());
    x_cache_ = x;
    const int n = x.dim(0);
    ho_ = conv_out_dim(x.dim(2), k_, stride_, pad_);
    wo_ = conv_out_dim(x.dim(3), k_, stride_, pad_);
    const int64_t l = static_cast<int64_t>(n) * ho_ * wo_;
    const int ckk = in_ch_ * k_ * k_;
    cols_.assign(static_cast<size_t>(ckk) * l, S(0));
    im2col(x, k_, stride_, pad_, ho_, wo_, cols_.data());

    Tensor<S> y({n, out_ch_, ho_, wo_});
    // y viewed as [out_ch x (N*Ho*Wo)] needs column order (n, oy, ox) which
    // differs from the natural {N,C,H,W} layout, so GEMM into a scratch and
    // transpose sample blocks back.
    RowMat<S> out(out_ch_, l);
    ConstMatMap<S> wm(w_.ptr(), out_ch_, ckk);
    ConstMatMap<S> cm(cols_.data(), ckk, l);
    out.noalias() = wm * cm;
    const int64_t hw = static_cast<int64_t>(ho_) * wo_;
    for (int img = 0; img < n; ++img)
      for (int co = 0; co < out_ch_; ++co) {
        const S* src = out.data() + co * l + img * hw;
        S* dst = &y.at4(img, co, 0, 0);
        const S bias = b_[co];
        for (int64_t i = 0; i < hw; ++i) dst[i] = src[i] + bias;
      }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gy) {
    const int n = x_cache_.dim(0);
    const int64_t l = static_cast<int64_t>(n) * ho_ * wo_;
    const int64_t hw = static_cast<int64_t>(ho_) * wo_;
    const int ckk = in_ch_ * k_ * k_;
    RowMat<S> gym(out_ch_, l);
    for (int img = 0; img < n; ++img)
      for (int co = 0; co < out_ch_; ++co) {
        const S* src = &gy.at4(img, co, 0, 0);
        S* dst = gym.data() + co * l + img * hw;
        std::copy(src, src + hw, dst);
        gb_[co] += std::accumulate(src, src + hw, S(0));
      }
    ConstMatMap<S> cm(cols_.data(), ckk, l);
    MatMap<S> gwm(gw_.ptr(), out_ch_, ckk);
    gwm.noalias() += gym * cm.transpose();

    RowMat<S> gcols(ckk, l);
    ConstMatMap<S> wm(w_.ptr(), out_ch_, ckk);
    gcols.noalias() = wm.transpose() * gym;
    Tensor<S> gx(x_cache_.shape);
    col2im(gcols.data(), k_, stride_, pad_, ho_, wo_, gx);
    return gx;
  }

  template <typename V>
  void visit_params(const std::string& prefix, V&& v) {
    v(prefix + ".w", w_, gw_);
    v(prefix + ".b", b_, gb_);
  }
  template <typename V>
  void visit_buffers(const std::string&, V&&) {}

 private:
  int in_ch_, out_ch_, k_, stride_, pad_;
  Tensor<S> w_, b_, gw_, gb_;
  Tensor<S> x_cache_;
  std::vector<S> cols_;
  int ho_ = 0, wo_ = 0;
};

// Stride-2 transposed convolution, the mirror of a stride-2 Conv2d. Weight
// layout {in_ch, out_ch, k, k}; output spatial size is exactly doubled for
// k=4, stride=2, pad=1.
template <typename S>
class ConvTranspose2d {
 public:
  ConvTranspose2d(int in_ch, int out_ch, int k, int stride, int pad)
      : in_ch_(in_ch), out_ch_(out_ch), k_(k), stride_(stride), pad_(pad),
        w_({in_ch, out_ch, k, k}), b_({out_ch}),
        gw_({in_ch, out_ch, k, k}), gb_({out_ch}) {}

  void init(Rng rng) {
    for (auto& v : w_.data) v = static_cast<S>(rng.gaussian() * 0.02);
    b_.zero();
  }

  static int out_dim(int in, int k, int stride, int pad) {
    return (in - 1) * stride - 2 * pad + k;
  }

  Tensor<S> forward(const Tensor<S>& x, Mode, Rng* = nullptr) {
    if (x.rank() != 4 || x.dim(1) != in_ch_)
      throw ShapeError("tconv input mismatch: got " + x.shape_str());
    x_cache_ = x;
    const int n = x.dim(0), hi = x.dim(2), wi = x.dim(3);
    const int ho = out_dim(hi, k_, stride_, pad_);
    const int wo = out_dim(wi, k_, stride_, pad_);
    const int okk = out_ch_ * k_ * k_;
    const int64_t li = static_cast<int64_t>(n) * hi * wi;
    const int64_t hwi = static_cast<int64_t>(hi) * wi;

    // x as [in_ch x (N*Hi*Wi)] with (n, y, x) column order.
    RowMat<S> xm(in_ch_, li);
    for (int img = 0; img < n; ++img)
      for (int ci = 0; ci < in_ch_; ++ci)
        std::copy(&x.at4(img, ci, 0, 0), &x.at4(img, ci, 0, 0) + hwi,
                  xm.data() + ci * li + img * hwi);

    RowMat<S> cols(okk, li);
    ConstMatMap<S> wm(w_.ptr(), in_ch_, okk);
    cols.noalias() = wm.transpose() * xm;

    Tensor<S> y({n, out_ch_, ho, wo});
    col2im(cols.data(), k_, stride_, pad_, hi, wi, y);
    const int64_t hwo = static_cast<int64_t>(ho) * wo;
    for (int img = 0; img < n; ++img)
      for (int co = 0; co < out_ch_; ++co) {
        S* dst = &y.at4(img, co, 0, 0);
        const S bias = b_[co];
        for (int64_t i = 0; i < hwo; ++i) dst[i] += bias;
      }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gy) {
    const int n = x_cache_.dim(0), hi = x_cache_.dim(2), wi = x_cache_.dim(3);
    const int okk = out_ch_ * k_ * k_;
    const int64_t li = static_cast<int64_t>(n) * hi * wi;
    const int64_t hwi = static_cast<int64_t>(hi) * wi;
    const int64_t hwo = static_cast<int64_t>(gy.dim(2)) * gy.dim(3);

    for (int img = 0; img < n; ++img)
      for (int co = 0; co < out_ch_; ++co) {
        const S* src = &gy.at4(img, co, 0, 0);
        gb_[co] += std::accumulate(src, src + hwo, S(0));
      }

    std::vector<S> gcols(static_cast<size_t>(okk) * li);
    im2col(gy, k_, stride_, pad_, hi, wi, gcols.data());

    RowMat<S> xm(in_ch_, li);
    for (int img = 0; img < n; ++img)
      for (int ci = 0; ci < in_ch_; ++ci)
        std::copy(&x_cache_.at4(img, ci, 0, 0),
                  &x_cache_.at4(img, ci, 0, 0) + hwi,
                  xm.data() + ci * li + img * hwi);

    ConstMatMap<S> gcm(gcols.data(), okk, li);
    MatMap<S> gwm(gw_.ptr(), in_ch_, okk);
    gwm.noalias() += xm * gcm.transpose();

    ConstMatMap<S> wm(w_.ptr(), in_ch_, okk);
    RowMat<S> gxm(in_ch_, li);
    gxm.noalias() = wm * gcm;

    Tensor<S> gx(x_cache_.shape);
    for (int img = 0; img < n; ++img)
      for (int ci = 0; ci < in_ch_; ++ci)
        std::copy(gxm.data() + ci * li + img * hwi,
                  gxm.data() + ci * li + (img + 1) * hwi,
                  &gx.at4(img, ci, 0, 0));
    return gx;
  }

  template <typename V>
  void visit_params(const std::string& prefix, V&& v) {
    v(prefix + ".w", w_, gw_);
    v(prefix + ".b", b_, gb_);
  }
  template <typename V>
  void visit_buffers(const std::string&, V&&) {}

 private:
  int in_ch_, out_ch_, k_, stride_, pad_;
  Tensor<S> w_, b_, gw_, gb_;
  Tensor<S> x_cache_;
};

template <typename S>
class Dense {
 public:
  Dense(int in, int out)
      : in_(in), out_(out), w_({out, in}), b_({out}), gw_({out, in}), gb_({out}) {}

  void init(Rng rng) {
    for (auto& v : w_.data) v = static_cast<S>(rng.gaussian() * 0.02);
    b_.zero();
  }

  Tensor<S> forward(const Tensor<S>& x, Mode, Rng* = nullptr) {
    if (x.rank() != 2 || x.dim(1) != in_)
      throw ShapeError("dense input mismatch: got " + x.shape_str());
    x_cache_ = x;
    const int n = x.dim(0);
    Tensor<S> y({n, out_});
    ConstMatMap<S> xm(x.ptr(), n, in_);
    ConstMatMap<S> wm(w_.ptr(), out_, in_);
    MatMap<S> ym(y.ptr(), n, out_);
    ym.noalias() = xm * wm.transpose();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < out_; ++j) y.data[static_cast<size_t>(i) * out_ + j] += b_[j];
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gy) {
    const int n = x_cache_.dim(0);
    ConstMatMap<S> gym(gy.ptr(), n, out_);
    ConstMatMap<S> xm(x_cache_.ptr(), n, in_);
    MatMap<S> gwm(gw_.ptr(), out_, in_);
    gwm.noalias() += gym.transpose() * xm;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < out_; ++j) gb_[j] += gy.data[static_cast<size_t>(i) * out_ + j];
    Tensor<S> gx({n, in_});
    ConstMatMap<S> wm(w_.ptr(), out_, in_);
    MatMap<S> gxm(gx.ptr(), n, in_);
    gxm.noalias() = gym * wm;
    return gx;
  }

  template <typename V>
  void visit_params(const std::string& prefix, V&& v) {
    v(prefix + ".w", w_, gw_);
    v(prefix + ".b", b_, gb_);
  }
  template <typename V>
  void visit_buffers(const std::string&, V&&) {}

 private:
  int in_, out_;
  Tensor<S> w_, b_, gw_, gb_;
  Tensor<S> x_cache_;
};

// Per-channel batch normalization over {N,C,H,W}. Training normalizes by
// batch statistics and maintains running averages; eval normalizes by the
// running averages. Both modes have exact backward passes, since a frozen
// network still needs gradients propagated through it.
template <typename S>
class BatchNorm2d {
 public:
  explicit BatchNorm2d(int channels, double momentum = 0.1, double eps = 1e-5)
      : c_(channels), momentum_(momentum), eps_(eps),
        gamma_({channels}), beta_({channels}),
        ggamma_({channels}), gbeta_({channels}),
        running_mean_({channels}), running_var_({channels}) {
    gamma_.fill(S(1));
    running_var_.fill(S(1));
  }

  void init(Rng rng) {
    for (auto& v : gamma_.data) v = static_cast<S>(1.0 + rng.gaussian() * 0.02);
    beta_.zero();
    running_mean_.zero();
    running_var_.fill(S(1));
  }

  Tensor<S> forward(const Tensor<S>& x, Mode mode, Rng* = nullptr) {
    if (x.rank() != 4 || x.dim(1) != c_)
      throw ShapeError("batchnorm input mismatch: got " + x.shape_str());
    mode_ = mode;
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int64_t m = static_cast<int64_t>(n) * h * w;
    const int64_t hw = static_cast<int64_t>(h) * w;
    Tensor<S> y(x.shape);
    xhat_ = Tensor<S>(x.shape);
    inv_std_.assign(static_cast<size_t>(c_), S(0));

    for (int ch = 0; ch < c_; ++ch) {
      double mean, var;
      if (mode == Mode::kTrain) {
        double sum = 0.0, sq = 0.0;
        for (int img = 0; img < n; ++img) {
          const S* p = &x.at4(img, ch, 0, 0);
          for (int64_t i = 0; i < hw; ++i) {
            sum += p[i];
            sq += static_cast<double>(p[i]) * p[i];
          }
        }
        mean = sum / static_cast<double>(m);
        var = sq / static_cast<double>(m) - mean * mean;
        if (var < 0.0) var = 0.0;
        running_mean_[ch] = static_cast<S>((1.0 - momentum_) * running_mean_[ch] +
                                           momentum_ * mean);
        running_var_[ch] = static_cast<S>((1.0 - momentum_) * running_var_[ch] +
                                          momentum_ * var);
      } else {
        mean = running_mean_[ch];
        var = running_var_[ch];
      }
      const S inv = static_cast<S>(1.0 / std::sqrt(var + eps_));
      inv_std_[static_cast<size_t>(ch)] = inv;
      const S mu = static_cast<S>(mean);
      const S g = gamma_[ch], bt = beta_[ch];
      for (int img = 0; img < n; ++img) {
        const S* p = &x.at4(img, ch, 0, 0);
        S* xh = &xhat_.at4(img, ch, 0, 0);
        S* py = &y.at4(img, ch, 0, 0);
        for (int64_t i = 0; i < hw; ++i) {
          xh[i] = (p[i] - mu) * inv;
          py[i] = g * xh[i] + bt;
        }
      }
    }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gy) {
    const int n = gy.dim(0), h = gy.dim(2), w = gy.dim(3);
    const int64_t m = static_cast<int64_t>(n) * h * w;
    const int64_t hw = static_cast<int64_t>(h) * w;
    Tensor<S> gx(gy.shape);
    for (int ch = 0; ch < c_; ++ch) {
      double sum_gy = 0.0, sum_gyxh = 0.0;
      for (int img = 0; img < n; ++img) {
        const S* g = &gy.at4(img, ch, 0, 0);
        const S* xh = &xhat_.at4(img, ch, 0, 0);
        for (int64_t i = 0; i < hw; ++i) {
          sum_gy += g[i];
          sum_gyxh += static_cast<double>(g[i]) * xh[i];
        }
      }
      ggamma_[ch] += static_cast<S>(sum_gyxh);
      gbeta_[ch] += static_cast<S>(sum_gy);
      const S gsc = gamma_[ch] * inv_std_[static_cast<size_t>(ch)];
      if (mode_ == Mode::kTrain) {
        const S mean_gy = static_cast<S>(sum_gy / static_cast<double>(m));
        const S mean_gyxh = static_cast<S>(sum_gyxh / static_cast<double>(m));
        for (int img = 0; img < n; ++img) {
          const S* g = &gy.at4(img, ch, 0, 0);
          const S* xh = &xhat_.at4(img, ch, 0, 0);
          S* out = &gx.at4(img, ch, 0, 0);
          for (int64_t i = 0; i < hw; ++i)
            out[i] = gsc * (g[i] - mean_gy - xh[i] * mean_gyxh);
        }
      } else {
        for (int img = 0; img < n; ++img) {
          const S* g = &gy.at4(img, ch, 0, 0);
          S* out = &gx.at4(img, ch, 0, 0);
          for (int64_t i = 0; i < hw; ++i) out[i] = gsc * g[i];
        }
      }
    }
    return gx;
  }

  template <typename V>
  void visit_params(const std::string& prefix, V&& v) {
    v(prefix + ".gamma", gamma_, ggamma_);
    v(prefix + ".beta", beta_, gbeta_);
  }
  template <typename V>
  void visit_buffers(const std::string& prefix, V&& v) {
    v(prefix + ".running_mean", running_mean_);
    v(prefix + ".running_var", running_var_);
  }

 private:
  int c_;
  double momentum_, eps_;
  Tensor<S> gamma_, beta_, ggamma_, gbeta_;
  Tensor<S> running_mean_, running_var_;
  Tensor<S> xhat_;
  std::vector<S> inv_std_;
  Mode mode_ = Mode::kTrain;
};

template <typename S>
class LeakyReLU {
 public:
  explicit LeakyReLU(double slope) : slope_(static_cast<S>(slope)) {}

  Tensor<S> forward(const Tensor<S>& x, Mode, Rng* = nullptr) {
    x_cache_ = x;
    Tensor<S> y(x.shape);
    for (int64_t i = 0; i < x.numel(); ++i)
      y[i] = x[i] > S(0) ? x[i] : slope_ * x[i];
    return y;
  }
  Tensor<S> backward(const Tensor<S>& gy) {
    Tensor<S> gx(gy.shape);
    for (int64_t i = 0; i < gy.numel(); ++i)
      gx[i] = x_cache_[i] > S(0) ? gy[i] : slope_ * gy[i];
    return gx;
  }
  template <typename V>
  void visit_params(const std::string&, V&&) {}
  template <typename V>
  void visit_buffers(const std::string&, V&&) {}

 private:
  S slope_;
  Tensor<S> x_cache_;
};

template <typename S>
class ReLU {
 public:
  Tensor<S> forward(const Tensor<S>& x, Mode, Rng* = nullptr) {
    x_cache_ = x;
    Tensor<S> y(x.shape);
    for (int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] > S(0) ? x[i] : S(0);
    return y;
  }
  Tensor<S> backward(const Tensor<S>& gy) {
    Tensor<S> gx(gy.shape);
    for (int64_t i = 0; i < gy.numel(); ++i)
      gx[i] = x_cache_[i] > S(0) ? gy[i] : S(0);
    return gx;
  }

 private:
  Tensor<S> x_cache_;
};

template <typename S>
class Tanh {
 public:
  Tensor<S> forward(const Tensor<S>& x, Mode, Rng* = nullptr) {
    y_cache_ = Tensor<S>(x.shape);
    for (int64_t i = 0; i < x.numel(); ++i)
      y_cache_[i] = static_cast<S>(std::tanh(static_cast<double>(x[i])));
    return y_cache_;
  }
  Tensor<S> backward(const Tensor<S>& gy) {
    Tensor<S> gx(gy.shape);
    for (int64_t i = 0; i < gy.numel(); ++i)
      gx[i] = gy[i] * (S(1) - y_cache_[i] * y_cache_[i]);
    return gx;
  }

 private:
  Tensor<S> y_cache_;
};

// Inverted dropout: training scales kept units by 1/(1-p), eval is identity.
// The mask comes from the Rng handed to forward so a step's noise is fully
// determined by the caller's seed derivation.
template <typename S>
class Dropout {
 public:
  explicit Dropout(double p) : p_(p) {}

  Tensor<S> forward(const Tensor<S>& x, Mode mode, Rng* rng = nullptr) {
    if (mode == Mode::kEval || p_ <= 0.0) {
      active_ = false;
      return x;
    }
    if (rng == nullptr)
      throw ShapeError("dropout in training mode needs an rng stream");
    active_ = true;
    const S scale = static_cast<S>(1.0 / (1.0 - p_));
    mask_ = Tensor<S>(x.shape);
    Tensor<S> y(x.shape);
    for (int64_t i = 0; i < x.numel(); ++i) {
      const bool keep = rng->uniform() >= p_;
      mask_[i] = keep ? scale : S(0);
      y[i] = x[i] * mask_[i];
    }
    return y;
  }
  Tensor<S> backward(const Tensor<S>& gy) {
    if (!active_) return gy;
    Tensor<S> gx(gy.shape);
    for (int64_t i = 0; i < gy.numel(); ++i) gx[i] = gy[i] * mask_[i];
    return gx;
  }

 private:
  double p_;
  bool active_ = false;
  Tensor<S> mask_;
};

// 2x2 stride-2 max pooling with floor semantics: an odd trailing row or
// column is dropped, as in the usual framework default.
template <typename S>
class MaxPool2 {
 public:
  static int out_dim(int in) { return in / 2; }

  Tensor<S> forward(const Tensor<S>& x, Mode, Rng* = nullptr) {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h < 2 || w < 2)
      throw ShapeError("2x2 maxpool input too small: " + x.shape_str());
    in_shape_ = x.shape;
    Tensor<S> y({n, c, h / 2, w / 2});
    argmax_.assign(static_cast<size_t>(y.numel()), 0);
    int64_t oi = 0;
    for (int img = 0; img < n; ++img)
      for (int ch = 0; ch < c; ++ch)
        for (int oy = 0; oy < h / 2; ++oy)
          for (int ox = 0; ox < w / 2; ++ox, ++oi) {
            int64_t best = 0;
            S bv = std::numeric_limits<S>::lowest();
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx) {
                const int64_t idx =
                    ((static_cast<int64_t>(img) * c + ch) * h + oy * 2 + dy) * w +
                    ox * 2 + dx;
                if (x[idx] > bv) {
                  bv = x[idx];
                  best = idx;
                }
              }
            y[oi] = bv;
            argmax_[static_cast<size_t>(oi)] = best;
          }
    return y;
  }
  Tensor<S> backward(const Tensor<S>& gy) {
    Tensor<S> gx(in_shape_);
    for (int64_t i = 0; i < gy.numel(); ++i)
      gx[argmax_[static_cast<size_t>(i)]] += gy[i];
    return gx;
  }

 private:
  std::vector<int> in_shape_;
  std::vector<int64_t> argmax_;
};

}  // namespace sgap

#endif  // SGAP_LAYERS_HPP
