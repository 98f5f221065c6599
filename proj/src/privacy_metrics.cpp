#include "sgap/privacy_metrics.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "sgap/ssim.hpp"

namespace sgap {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double sq_distance(const double* a, const double* b, int dim) {
  double s = 0.0;
  for (int k = 0; k < dim; ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

// Largest pairwise distance; the scale reference for duplicate perturbation.
double diameter(const TensorD& points) {
  const int n = points.dim(0), dim = points.dim(1);
  double best = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      best = std::max(best, sq_distance(points.ptr() + static_cast<int64_t>(i) * dim,
                                        points.ptr() + static_cast<int64_t>(j) * dim, dim));
  return std::sqrt(best);
}

bool rows_identical(const TensorD& points, int i, int j) {
  const int dim = points.dim(1);
  const double* a = points.ptr() + static_cast<int64_t>(i) * dim;
  const double* b = points.ptr() + static_cast<int64_t>(j) * dim;
  return std::equal(a, a + dim, b);
}

}  // namespace

SampleSet make_sample_set(TensorD points, std::vector<int> labels,
                          uint64_t seed) {
  if (points.rank() != 2)
    throw ShapeError("sample points must form an {n, dim} matrix");
  const int n = points.dim(0), dim = points.dim(1);
  if (static_cast<int>(labels.size()) != n)
    throw ShapeError("one label per point required");

  SampleSet s;
  for (int l : labels) {
    if (l == 0) ++s.n0;
    else if (l == 1) ++s.n1;
    else throw ConfigError("sample labels must be 0 or 1");
  }
  if (s.n0 < 2 || s.n1 < 2)
    throw DegenerateSampleError(
        "each label class needs at least two points for nearest-neighbor "
        "distances");

  // Exact duplicates would produce zero nearest-neighbor distances; nudge
  // every repeat of an earlier point by a vanishing deterministic offset.
  std::vector<int> dupes;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < i; ++j)
      if (rows_identical(points, i, j)) {
        dupes.push_back(i);
        break;
      }
  if (!dupes.empty()) {
    const double diam = diameter(points);
    if (diam == 0.0)
      throw DegenerateSampleError("all sample points coincide");
    Rng rng = Rng(seed).derive("dedup");
    const double scale = 1e-9 * diam;
    for (int i : dupes)
      for (int k = 0; k < dim; ++k)
        points.ptr()[static_cast<int64_t>(i) * dim + k] +=
            (rng.uniform() * 2.0 - 1.0) * scale;
  }

  s.points = std::move(points);
  s.labels = std::move(labels);
  return s;
}

double kl_entropy(const TensorD& points) {
  if (points.rank() != 2)
    throw ShapeError("entropy input must form an {n, dim} matrix");
  const int n = points.dim(0), dim = points.dim(1);
  if (n < 2)
    throw DegenerateSampleError("entropy estimation needs at least two points");

  double log_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    const double* pi = points.ptr() + static_cast<int64_t>(i) * dim;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      best = std::min(best, sq_distance(pi, points.ptr() + static_cast<int64_t>(j) * dim, dim));
    }
    if (best <= 0.0)
      throw DegenerateSampleError(
          "zero nearest-neighbor distance; duplicate points survived");
    log_sum += 0.5 * std::log(best);
  }
  return static_cast<double>(dim) / n * log_sum + std::log(static_cast<double>(n - 1));
}

double kl_entropy_constant(int dim) {
  // log of the unit-ball volume in dim dimensions plus the Euler constant.
  const double log_vd =
      0.5 * dim * std::log(M_PI) - std::lgamma(0.5 * dim + 1.0);
  return log_vd + 0.57721566490153286;
}

double empirical_mi(const SampleSet& samples) {
  const int n = samples.points.dim(0);
  const int dim = samples.points.dim(1);
  if (samples.n0 < 2 || samples.n1 < 2 || samples.n0 + samples.n1 != n)
    throw DegenerateSampleError("sample set class counts are inconsistent");

  TensorD part0({samples.n0, dim}), part1({samples.n1, dim});
  int i0 = 0, i1 = 0;
  for (int i = 0; i < n; ++i) {
    const double* row = samples.points.ptr() + static_cast<int64_t>(i) * dim;
    double* dst = samples.labels[static_cast<size_t>(i)] == 0
                      ? part0.ptr() + static_cast<int64_t>(i0++) * dim
                      : part1.ptr() + static_cast<int64_t>(i1++) * dim;
    std::copy(row, row + dim, dst);
  }

  const double h_all = kl_entropy(samples.points);
  const double w0 = static_cast<double>(samples.n0) / n;
  const double w1 = static_cast<double>(samples.n1) / n;
  return h_all - w0 * kl_entropy(part0) - w1 * kl_entropy(part1);
}

// --------------------------------------------------------------------------

std::vector<EvaluatedPair> evaluate_pairs(Discriminator<float>& disc,
                                          Generator<float>& gen,
                                          const std::vector<ImageRecord>& corpus,
                                          const std::vector<PairSample>& pairs,
                                          uint64_t seed) {
  if (pairs.empty()) throw ConfigError("evaluation pair list is empty");
  const auto zshape = generator_bottleneck_shape(gen.config());
  const Rng noise_root = Rng(seed).derive("eval_noise");
  const double stddev = gen.config().noise_std;

  std::vector<EvaluatedPair> out;
  out.reserve(pairs.size());
  const int chunk = 32;
  for (size_t base = 0; base < pairs.size(); base += chunk) {
    const int b = static_cast<int>(std::min<size_t>(chunk, pairs.size() - base));
    std::vector<const TensorF*> lefts, rights;
    for (int i = 0; i < b; ++i) {
      lefts.push_back(&corpus[static_cast<size_t>(pairs[base + i].left)].image);
      rights.push_back(&corpus[static_cast<size_t>(pairs[base + i].right)].image);
    }
    TensorF left_batch = stack_images<float>(lefts);
    TensorF right_batch = stack_images<float>(rights);

    TensorF z({b, zshape[0], zshape[1], zshape[2]});
    const int64_t zper = static_cast<int64_t>(zshape[0]) * zshape[1] * zshape[2];
    for (int i = 0; i < b; ++i) {
      Rng zr = noise_root.derive(static_cast<uint64_t>(base + i));
      for (int64_t k = 0; k < zper; ++k)
        z[static_cast<int64_t>(i) * zper + k] =
            static_cast<float>(zr.gaussian() * stddev);
    }

    TensorF priv = gen.forward(left_batch, z, Mode::kEval);
    TensorF emb = disc.embed(concat_batches(right_batch, priv), Mode::kEval);
    auto [er, ep] = split_batches(emb, b);
    const auto ps = similarity_probabilities(er, ep, disc.config().margin);

    for (int i = 0; i < b; ++i) {
      EvaluatedPair e;
      e.left = pairs[base + i].left;
      e.right = pairs[base + i].right;
      e.label = pairs[base + i].label;
      e.privatized = slice_image(priv, i);
      e.similarity = ps[static_cast<size_t>(i)];
      e.ssim_to_source = ssim(corpus[static_cast<size_t>(e.left)].image, e.privatized);
      out.push_back(std::move(e));
    }
  }
  return out;
}

double misclassification_rate(const std::vector<double>& similarities,
                              double threshold) {
  if (similarities.empty())
    throw ConfigError("misclassification rate needs a non-empty evaluation set");
  int below = 0;
  for (double p : similarities)
    if (p < threshold) ++below;
  return static_cast<double>(below) / static_cast<double>(similarities.size());
}

// --------------------------------------------------------------------------

std::string projection_method_name(ProjectionMethod m) {
  return m == ProjectionMethod::kPca3 ? "pca3" : "tsne3";
}

ProjectionMethod projection_method_from_name(const std::string& name) {
  if (name == "pca3") return ProjectionMethod::kPca3;
  if (name == "tsne3") return ProjectionMethod::kTsne3;
  throw ConfigError("unknown projection method \"" + name +
                    "\" (expected pca3 or tsne3)");
}

namespace {

// Principal-component scores via the Gram matrix, which stays {n, n} no
// matter how long the flattened pair vectors are. Scores equal U * Sigma of
// the thin SVD; component signs are fixed by making each column's largest
// entry positive.
Mat pca_scores(const Mat& x, int out_dim) {
  const auto n = x.rows();
  Mat centered = x.rowwise() - x.colwise().mean();
  Mat gram = centered * centered.transpose();
  Eigen::SelfAdjointEigenSolver<Mat> solver(gram);
  Mat scores(n, out_dim);
  for (int k = 0; k < out_dim; ++k) {
    // Eigenvalues come back ascending.
    const auto idx = n - 1 - k;
    const double ev = std::max(solver.eigenvalues()[idx], 0.0);
    scores.col(k) = solver.eigenvectors().col(idx) * std::sqrt(ev);
    Eigen::Index arg;
    scores.col(k).cwiseAbs().maxCoeff(&arg);
    if (scores(arg, k) < 0.0) scores.col(k) = -scores.col(k);
  }
  return scores;
}

Mat tsne3(const Mat& input, uint64_t seed) {
  const auto n = input.rows();
  // The textbook preprocessing step: cut the input down to at most 50
  // principal components before the pairwise kernel.
  const int pre = static_cast<int>(std::min<Eigen::Index>(50, n - 1));
  Mat x = pca_scores(input, pre);

  Mat d2(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      d2(i, j) = (x.row(i) - x.row(j)).squaredNorm();

  const double perplexity = std::min(30.0, (static_cast<double>(n) - 1.0) / 3.0);
  const double target = std::log(perplexity);

  // Per-point bandwidth search, then symmetrized affinities.
  Mat p = Mat::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double lo = 0.0, hi = std::numeric_limits<double>::infinity(), beta = 1.0;
    Eigen::VectorXd row(n);
    for (int it = 0; it < 50; ++it) {
      double sum = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        row[j] = j == i ? 0.0 : std::exp(-beta * d2(i, j));
        sum += row[j];
      }
      if (sum <= 0.0) sum = 1e-300;
      double entropy = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (row[j] <= 0.0) continue;
        const double q = row[j] / sum;
        entropy -= q * std::log(q);
      }
      if (std::fabs(entropy - target) < 1e-5) break;
      if (entropy > target) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = lo == 0.0 ? beta / 2.0 : 0.5 * (beta + lo);
      }
    }
    double sum = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      row[j] = j == i ? 0.0 : std::exp(-beta * d2(i, j));
      sum += row[j];
    }
    for (Eigen::Index j = 0; j < n; ++j) p(i, j) = row[j] / std::max(sum, 1e-300);
  }
  p = ((p + p.transpose()) / (2.0 * static_cast<double>(n)))
          .cwiseMax(1e-12)
          .eval();

  Rng rng = Rng(seed).derive("tsne");
  Mat y(n, 3), vel = Mat::Zero(n, 3);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int k = 0; k < 3; ++k) y(i, k) = rng.gaussian() * 1e-4;

  const int iters = 500, exaggerate_until = 250;
  const double lr = 200.0;
  Mat grad(n, 3), w(n, n);
  for (int it = 0; it < iters; ++it) {
    double wsum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      w(i, i) = 0.0;
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double v = 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
        w(i, j) = v;
        w(j, i) = v;
        wsum += 2.0 * v;
      }
    }
    const double ex = it < exaggerate_until ? 12.0 : 1.0;
    grad.setZero();
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j) continue;
        const double q = std::max(w(i, j) / wsum, 1e-12);
        const double coeff = 4.0 * (ex * p(i, j) - q) * w(i, j);
        grad.row(i) += coeff * (y.row(i) - y.row(j));
      }
    const double momentum = it < exaggerate_until ? 0.5 : 0.8;
    vel = momentum * vel - lr * grad;
    y += vel;
    y.rowwise() -= y.colwise().mean();
  }
  return y;
}

}  // namespace

TensorD project_pairs(const std::vector<EvaluatedPair>& pairs,
                      const std::vector<ImageRecord>& corpus,
                      ProjectionMethod method, uint64_t seed) {
  const int n = static_cast<int>(pairs.size());
  if (n < 10)
    throw ConfigError("pair projection needs at least 10 pairs, got " +
                      std::to_string(n));
  const int64_t per = pairs[0].privatized.numel();
  Mat x(n, 2 * per);
  for (int i = 0; i < n; ++i) {
    const auto& priv = pairs[static_cast<size_t>(i)].privatized;
    const auto& orig = corpus[static_cast<size_t>(pairs[static_cast<size_t>(i)].right)].image;
    if (priv.numel() != per || orig.numel() != per)
      throw ShapeError("pair images disagree in size");
    for (int64_t k = 0; k < per; ++k) {
      x(i, k) = priv[k];
      x(i, per + k) = orig[k];
    }
  }

  Mat scores = method == ProjectionMethod::kPca3 ? pca_scores(x, 3)
                                                 : tsne3(x, seed);
  TensorD out({n, 3});
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < 3; ++k) out.ptr()[static_cast<int64_t>(i) * 3 + k] = scores(i, k);
  return out;
}

// --------------------------------------------------------------------------

std::vector<PairSample> build_same_identity_eval_pairs(
    const std::vector<ImageRecord>& corpus, int count, uint64_t seed) {
  if (count < 1) throw ConfigError("evaluation pair count must be positive");
  Rng rng = Rng(seed).derive("eval_same");
  std::vector<PairSample> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(same_identity_pair(corpus, rng));
  return out;
}

std::vector<PairSample> build_mixed_eval_pairs(
    const std::vector<ImageRecord>& corpus, int count, uint64_t seed) {
  if (count < 2 || count % 2 != 0)
    throw ConfigError("mixed evaluation pair count must be even and >= 2");
  Rng rng = Rng(seed).derive("eval_mixed");
  std::vector<PairSample> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count / 2; ++i) out.push_back(same_identity_pair(corpus, rng));
  for (int i = 0; i < count / 2; ++i)
    out.push_back(different_identity_pair(corpus, rng));
  return out;
}

// --------------------------------------------------------------------------

std::string privacy_report_csv_header() {
  return "lambda,mi_estimate,misclassification_rate,mean_ssim,n_pairs,seed";
}

std::string privacy_report_csv_row(const PrivacyReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%.6g,%.6g,%.6g,%.6g,%d,%llu", r.lambda,
                r.mi_estimate, r.misclassification, r.mean_ssim, r.n_pairs,
                static_cast<unsigned long long>(r.seed));
  return buf;
}

}  // namespace sgap
