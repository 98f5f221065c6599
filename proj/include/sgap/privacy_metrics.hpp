#ifndef SGAP_PRIVACY_METRICS_HPP
#define SGAP_PRIVACY_METRICS_HPP

#include <string>
#include <vector>

#include "sgap/data_pipeline.hpp"
#include "sgap/discriminator.hpp"
#include "sgap/generator.hpp"
#include "sgap/tensor.hpp"

namespace sgap {

// ============================================================================
// Privacy measurement: nearest-neighbor entropy and mutual information over
// projected pair representations, plus the verifier-based misclassification
// rate. Everything is deterministic given its seed.
// ============================================================================

// Labeled point cloud for the mutual-information estimator. Labels are
// binary: 0 = same identity, 1 = different identity.
struct SampleSet {
  TensorD points;           // {n, dim}
  std::vector<int> labels;  // one 0/1 label per row
  int n0 = 0;
  int n1 = 0;
};

// Builds a SampleSet, perturbing bit-identical duplicate points with
// deterministic noise of magnitude 1e-9 times the data diameter so every
// nearest-neighbor distance is positive. Throws DegenerateSampleError when a
// class has fewer than two members or all points coincide.
SampleSet make_sample_set(TensorD points, std::vector<int> labels,
                          uint64_t seed);

// Differential entropy up to the estimator's data-independent additive
// constant: (dim/n) * sum_i log R_i + log(n-1), with R_i the Euclidean
// distance from point i to its nearest other point. The dropped constant
// (unit-ball volume and digamma terms) is identical for every point set of
// the same dimension, so it cancels wherever entropies are subtracted.
double kl_entropy(const TensorD& points);

// The dropped constant for re-adding when an absolute entropy in d
// dimensions is wanted: log V_d + gamma.
double kl_entropy_constant(int dim);

// Mutual information between the points and their binary labels: entropy of
// the pooled set minus the class-weighted entropies of the two class
// partitions, each with nearest neighbors found within its own class.
double empirical_mi(const SampleSet& samples);

// --------------------------------------------------------------------------
// Pair evaluation through the trained models.
// --------------------------------------------------------------------------

// One evaluated pair: the left image privatized by the generator, scored
// against the untouched right image by the verifier, plus the structural
// similarity between the left source and its privatized version.
struct EvaluatedPair {
  int left = 0;
  int right = 0;
  int label = 0;
  TensorF privatized;       // generator output for the left image
  double similarity = 0.0;  // verifier probability of "same identity"
  double ssim_to_source = 0.0;
};

// Runs every pair through the generator and verifier in eval mode. The
// bottleneck noise for pair i comes from (seed, "eval_noise", i), so a
// fixed seed makes the whole evaluation reproducible.
std::vector<EvaluatedPair> evaluate_pairs(Discriminator<float>& disc,
                                          Generator<float>& gen,
                                          const std::vector<ImageRecord>& corpus,
                                          const std::vector<PairSample>& pairs,
                                          uint64_t seed);

// Fraction of similarity values below the threshold. On same-identity
// pairs this is the rate at which privatization fools the verifier.
double misclassification_rate(const std::vector<double>& similarities,
                              double threshold = 0.5);

inline std::vector<double> similarities_of(const std::vector<EvaluatedPair>& ps) {
  std::vector<double> out;
  out.reserve(ps.size());
  for (const auto& p : ps) out.push_back(p.similarity);
  return out;
}

// --------------------------------------------------------------------------
// Projection of (privatized, original) pair representations to 3-D for the
// entropy estimator. Each pair becomes one vector: the privatized image and
// the original right image flattened and concatenated.
// --------------------------------------------------------------------------

enum class ProjectionMethod { kPca3, kTsne3 };

std::string projection_method_name(ProjectionMethod m);
ProjectionMethod projection_method_from_name(const std::string& name);

// Projects the concatenated pair vectors to 3 dimensions. kPca3 is exact
// and deterministic (principal components via the Gram matrix, signs
// canonicalized); kTsne3 runs t-SNE at perplexity 30 from a seeded init.
// Requires at least 10 pairs.
TensorD project_pairs(const std::vector<EvaluatedPair>& pairs,
                      const std::vector<ImageRecord>& corpus,
                      ProjectionMethod method, uint64_t seed);

// --------------------------------------------------------------------------
// Evaluation pair builders over held-out draws from the corpus.
// --------------------------------------------------------------------------

// count same-identity pairs, for misclassification and distortion.
std::vector<PairSample> build_same_identity_eval_pairs(
    const std::vector<ImageRecord>& corpus, int count, uint64_t seed);

// count/2 same-identity plus count/2 different-identity pairs, for the
// mutual-information sample set. count must be even.
std::vector<PairSample> build_mixed_eval_pairs(
    const std::vector<ImageRecord>& corpus, int count, uint64_t seed);

// --------------------------------------------------------------------------
// Per-run privacy summary, one CSV row per (lambda, seed).
// --------------------------------------------------------------------------

struct PrivacyReport {
  double lambda = 0.0;
  double mi_estimate = 0.0;
  double misclassification = 0.0;
  double mean_ssim = 0.0;
  int n_pairs = 0;
  uint64_t seed = 0;
};

std::string privacy_report_csv_header();
std::string privacy_report_csv_row(const PrivacyReport& r);

}  // namespace sgap

#endif  // SGAP_PRIVACY_METRICS_HPP
