#ifndef SGAP_SSIM_HPP
#define SGAP_SSIM_HPP

#include <array>
#include <cmath>
#include <vector>

#include "sgap/tensor.hpp"

namespace sgap {

// ============================================================================
// Structural similarity over {C, H, W} images held in [-1, 1]. Values are
// mapped onto [0, 1] internally, statistics come from an 11-tap Gaussian
// window (sigma 1.5) slid over valid positions only, and channels are
// averaged. The companion backward pass differentiates the mean SSIM with
// respect to the second image, which is what the generator trains against.
// All accumulation happens in double regardless of the storage scalar.
// ============================================================================

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double c1 = 1e-4;   // (0.01 * L)^2 with L = 1
  double c2 = 9e-4;   // (0.03 * L)^2
};

namespace detail {

inline std::vector<double> gaussian_window(int n, double sigma) {
  std::vector<double> g(static_cast<size_t>(n));
  const double mid = (n - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    g[static_cast<size_t>(i)] = std::exp(-(i - mid) * (i - mid) / (2.0 * sigma * sigma));
    sum += g[static_cast<size_t>(i)];
  }
  for (auto& v : g) v /= sum;
  return g;
}

// Valid-mode separable filtering: rows first, then columns.
inline void filter_valid(const std::vector<double>& in, int h, int w,
                         const std::vector<double>& g, std::vector<double>& out) {
  const int k = static_cast<int>(g.size());
  const int wo = w - k + 1, ho = h - k + 1;
  std::vector<double> tmp(static_cast<size_t>(h) * wo, 0.0);
  for (int y = 0; y < h; ++y)
    for (int ox = 0; ox < wo; ++ox) {
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += g[static_cast<size_t>(i)] * in[static_cast<size_t>(y) * w + ox + i];
      tmp[static_cast<size_t>(y) * wo + ox] = s;
    }
  out.assign(static_cast<size_t>(ho) * wo, 0.0);
  for (int oy = 0; oy < ho; ++oy)
    for (int ox = 0; ox < wo; ++ox) {
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += g[static_cast<size_t>(i)] * tmp[static_cast<size_t>(oy + i) * wo + ox];
      out[static_cast<size_t>(oy) * wo + ox] = s;
    }
}

// Adjoint of filter_valid: scatters window-position gradients back onto the
// full map.
inline void scatter_valid(const std::vector<double>& q, int h, int w, int k,
                          const std::vector<double>& g, std::vector<double>& out) {
  const int wo = w - k + 1, ho = h - k + 1;
  std::vector<double> tmp(static_cast<size_t>(h) * wo, 0.0);
  for (int oy = 0; oy < ho; ++oy)
    for (int ox = 0; ox < wo; ++ox) {
      const double v = q[static_cast<size_t>(oy) * wo + ox];
      if (v == 0.0) continue;
      for (int i = 0; i < k; ++i)
        tmp[static_cast<size_t>(oy + i) * wo + ox] += g[static_cast<size_t>(i)] * v;
    }
  out.assign(static_cast<size_t>(h) * w, 0.0);
  for (int y = 0; y < h; ++y)
    for (int ox = 0; ox < wo; ++ox) {
      const double v = tmp[static_cast<size_t>(y) * wo + ox];
      if (v == 0.0) continue;
      for (int i = 0; i < k; ++i)
        out[static_cast<size_t>(y) * w + ox + i] += g[static_cast<size_t>(i)] * v;
    }
}

struct SsimMoments {
  int ho = 0, wo = 0;
  std::vector<double> mu_a, mu_b, m_aa, m_bb, m_ab;
};

template <typename S>
void channel_moments(const Tensor<S>& a, const Tensor<S>& b, int ch,
                     const SsimParams& prm, const std::vector<double>& g,
                     SsimMoments& mo) {
  const int h = a.dim(1), w = a.dim(2);
  std::vector<double> ua(static_cast<size_t>(h) * w), ub(static_cast<size_t>(h) * w);
  std::vector<double> aa(ua.size()), bb(ua.size()), ab(ua.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const size_t i = static_cast<size_t>(y) * w + x;
      const double va = (static_cast<double>(a.at3(ch, y, x)) + 1.0) / 2.0;
      const double vb = (static_cast<double>(b.at3(ch, y, x)) + 1.0) / 2.0;
      ua[i] = va;
      ub[i] = vb;
      aa[i] = va * va;
      bb[i] = vb * vb;
      ab[i] = va * vb;
    }
  mo.ho = h - prm.window + 1;
  mo.wo = w - prm.window + 1;
  filter_valid(ua, h, w, g, mo.mu_a);
  filter_valid(ub, h, w, g, mo.mu_b);
  filter_valid(aa, h, w, g, mo.m_aa);
  filter_valid(bb, h, w, g, mo.m_bb);
  filter_valid(ab, h, w, g, mo.m_ab);
}

inline double ssim_at(const SsimMoments& mo, size_t i, const SsimParams& prm,
                      double* f1 = nullptr, double* f2 = nullptr,
                      double* d1 = nullptr, double* d2 = nullptr) {
  const double mua = mo.mu_a[i], mub = mo.mu_b[i];
  const double va = mo.m_aa[i] - mua * mua;
  const double vb = mo.m_bb[i] - mub * mub;
  const double cab = mo.m_ab[i] - mua * mub;
  const double n1 = 2.0 * mua * mub + prm.c1;
  const double dd1 = mua * mua + mub * mub + prm.c1;
  const double n2 = 2.0 * cab + prm.c2;
  const double dd2 = va + vb + prm.c2;
  const double ff1 = n1 / dd1, ff2 = n2 / dd2;
  if (f1) *f1 = ff1;
  if (f2) *f2 = ff2;
  if (d1) *d1 = dd1;
  if (d2) *d2 = dd2;
  return ff1 * ff2;
}

}  // namespace detail

template <typename S>
double ssim(const Tensor<S>& a, const Tensor<S>& b, const SsimParams& prm = {}) {
  if (!a.same_shape(b) || a.rank() != 3)
    throw ShapeError("ssim expects two {C,H,W} tensors of equal shape");
  if (a.dim(1) < prm.window || a.dim(2) < prm.window)
    throw ShapeError("ssim input smaller than the filter window");
  const auto g = detail::gaussian_window(prm.window, prm.sigma);
  const int c = a.dim(0);
  double total = 0.0;
  int64_t count = 0;
  detail::SsimMoments mo;
  for (int ch = 0; ch < c; ++ch) {
    detail::channel_moments(a, b, ch, prm, g, mo);
    const size_t n = static_cast<size_t>(mo.ho) * mo.wo;
    for (size_t i = 0; i < n; ++i) total += detail::ssim_at(mo, i, prm);
    count += static_cast<int64_t>(n);
  }
  return total / static_cast<double>(count);
}

// Mean 1 - SSIM, the distortion measure the generator is charged for.
template <typename S>
double distortion(const Tensor<S>& a, const Tensor<S>& b,
                  const SsimParams& prm = {}) {
  return 1.0 - ssim(a, b, prm);
}

// Accumulates gscale * d(ssim(a, b)) / d(b) into gb.
template <typename S>
void ssim_backward_wrt_b(const Tensor<S>& a, const Tensor<S>& b, double gscale,
                         Tensor<S>& gb, const SsimParams& prm = {}) {
  if (!a.same_shape(b) || !gb.same_shape(b) || a.rank() != 3)
    throw ShapeError("ssim_backward_wrt_b shape mismatch");
  const auto g = detail::gaussian_window(prm.window, prm.sigma);
  const int c = a.dim(0), h = a.dim(1), w = a.dim(2);
  const int ho = h - prm.window + 1, wo = w - prm.window + 1;
  const double per_pos = gscale / (static_cast<double>(c) * ho * wo);

  detail::SsimMoments mo;
  std::vector<double> q_mub(static_cast<size_t>(ho) * wo);
  std::vector<double> q_mbb(q_mub.size()), q_mab(q_mub.size());
  std::vector<double> s_mub, s_mbb, s_mab;
  for (int ch = 0; ch < c; ++ch) {
    detail::channel_moments(a, b, ch, prm, g, mo);
    for (size_t i = 0; i < q_mub.size(); ++i) {
      double f1, f2, d1, d2;
      const double s = detail::ssim_at(mo, i, prm, &f1, &f2, &d1, &d2);
      const double mua = mo.mu_a[i], mub = mo.mu_b[i];
      q_mub[i] = per_pos * (f2 * (2.0 * mua - f1 * 2.0 * mub) / d1 +
                            f1 * (-2.0 * mua + f2 * 2.0 * mub) / d2);
      q_mbb[i] = per_pos * (-s / d2);
      q_mab[i] = per_pos * (f1 * 2.0 / d2);
    }
    detail::scatter_valid(q_mub, h, w, prm.window, g, s_mub);
    detail::scatter_valid(q_mbb, h, w, prm.window, g, s_mbb);
    detail::scatter_valid(q_mab, h, w, prm.window, g, s_mab);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const size_t i = static_cast<size_t>(y) * w + x;
        const double uav = (static_cast<double>(a.at3(ch, y, x)) + 1.0) / 2.0;
        const double ubv = (static_cast<double>(b.at3(ch, y, x)) + 1.0) / 2.0;
        // d(u)/d(x) = 1/2 from the [-1,1] -> [0,1] mapping.
        const double grad_u = s_mub[i] + 2.0 * ubv * s_mbb[i] + uav * s_mab[i];
        gb.at3(ch, y, x) += static_cast<S>(0.5 * grad_u);
      }
  }
}

}  // namespace sgap

#endif  // SGAP_SSIM_HPP
