#ifndef SGAP_TRAINING_HPP
#define SGAP_TRAINING_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sgap/data_pipeline.hpp"
#include "sgap/discriminator.hpp"
#include "sgap/generator.hpp"
#include "sgap/ssim.hpp"

namespace sgap {

// ============================================================================
// Adversarial training. The verifier is trained to tell same-identity pairs
// from different-identity pairs, with half of each batch privatized by the
// frozen generator; the generator is trained to flip the verifier's answer
// on same-identity pairs while paying for structural distortion. The two
// sides alternate batch by batch.
// ============================================================================

// Label handed to the verifier for the privatized half of its batch.
// kTrueLabels keeps the pair's own identity relation, which keeps the
// verifier an identity matcher; kAlwaysDifferent marks every privatized
// pair as a mismatch regardless of identity.
enum class PrivatizedLabelPolicy { kTrueLabels, kAlwaysDifferent };

std::string privatized_label_policy_name(PrivatizedLabelPolicy p);
PrivatizedLabelPolicy privatized_label_policy_from_name(const std::string& name);

struct TrainingConfig {
  double lambda = 2.0;            // distortion weight in the generator loss
  int epochs = 100;
  int batch_size = 32;            // must be even
  double lr_d = 2e-4;
  double lr_g = 2e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int d_steps_per_g_step = 1;
  uint64_t seed = 1;
  int checkpoint_every = 0;       // epochs between checkpoints, 0 = final only
  PrivatizedLabelPolicy privatized_labels = PrivatizedLabelPolicy::kTrueLabels;

  std::vector<std::string> validate() const {
    std::vector<std::string> v;
    if (lambda < 0.0) v.push_back("training.lambda: must be >= 0");
    if (epochs < 1) v.push_back("training.epochs: must be >= 1");
    if (batch_size < 2 || batch_size % 2 != 0)
      v.push_back("training.batch_size: must be even and >= 2");
    if (lr_d <= 0.0) v.push_back("training.lr_d: must be > 0");
    if (lr_g <= 0.0) v.push_back("training.lr_g: must be > 0");
    if (adam_beta1 <= 0.0 || adam_beta1 >= 1.0)
      v.push_back("training.adam_beta1: must be in (0,1)");
    if (adam_beta2 <= 0.0 || adam_beta2 >= 1.0)
      v.push_back("training.adam_beta2: must be in (0,1)");
    if (adam_eps <= 0.0) v.push_back("training.adam_eps: must be > 0");
    if (d_steps_per_g_step < 1)
      v.push_back("training.d_steps_per_g_step: must be >= 1");
    if (checkpoint_every < 0)
      v.push_back("training.checkpoint_every: must be >= 0");
    return v;
  }
};

// One verifier update, with the paired generator update when the alternation
// schedule fires on this step.
struct StepRecord {
  int epoch = 0;
  int step = 0;
  double d_loss = 0.0;
  bool has_g = false;
  double g_adv = 0.0;         // cross entropy the generator pushes up
  double g_distortion = 0.0;  // mean 1 - ssim over the generator batch
  double g_objective = 0.0;   // -g_adv + lambda * g_distortion (minimized)
  double wall_ms = 0.0;
};

// --------------------------------------------------------------------------
// Binary cross entropy on the similarity probability, with label semantics
// 0 = same identity, 1 = different: L(l, p) = -(1-l) log p - l log(1-p).
// Probabilities are clamped to [eps, 1-eps] before the log; the derivative
// uses the clamped value, so it stays bounded by 1/eps in the saturated
// regions instead of vanishing.
// --------------------------------------------------------------------------

inline constexpr double kCrossEntropyClamp = 1e-7;

inline double cross_entropy(int label, double p,
                            double eps = kCrossEntropyClamp) {
  const double pc = std::clamp(p, eps, 1.0 - eps);
  return label == 0 ? -std::log(pc) : -std::log(1.0 - pc);
}

inline double cross_entropy_dp(int label, double p,
                               double eps = kCrossEntropyClamp) {
  const double pc = std::clamp(p, eps, 1.0 - eps);
  return label == 0 ? -1.0 / pc : 1.0 / (1.0 - pc);
}

// --------------------------------------------------------------------------
// Adam. Moment buffers are created lazily on the first step and are part of
// checkpoints, so a resumed run continues the same trajectory bit for bit.
// --------------------------------------------------------------------------

template <typename S>
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  template <typename Net>
  void step(Net& net) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    size_t i = 0;
    net.visit_params([&](const std::string&, Tensor<S>& p, Tensor<S>& g) {
      if (i >= m_.size()) {
        m_.emplace_back(p.shape);
        v_.emplace_back(p.shape);
      }
      Tensor<S>& m = m_[i];
      Tensor<S>& v = v_[i];
      for (int64_t j = 0; j < p.numel(); ++j) {
        const double gj = g[j];
        const double mj = b1_ * m[j] + (1.0 - b1_) * gj;
        const double vj = b2_ * v[j] + (1.0 - b2_) * gj * gj;
        m[j] = static_cast<S>(mj);
        v[j] = static_cast<S>(vj);
        p[j] = static_cast<S>(p[j] - lr_ * (mj / c1) / (std::sqrt(vj / c2) + eps_));
      }
      ++i;
    });
  }

  int64_t step_count() const { return t_; }
  void set_step_count(int64_t t) { t_ = t; }
  std::vector<Tensor<S>>& moments_m() { return m_; }
  std::vector<Tensor<S>>& moments_v() { return v_; }

 private:
  double lr_, b1_, b2_, eps_;
  int64_t t_ = 0;
  std::vector<Tensor<S>> m_, v_;
};

// --------------------------------------------------------------------------
// Step functions. Both derive every random stream from
// (seed, purpose, epoch, step), so any step of any epoch is reproducible in
// isolation and a resumed run continues the exact noise sequence.
// --------------------------------------------------------------------------

template <typename S>
Tensor<S> stack_records(const std::vector<ImageRecord>& corpus,
                        const std::vector<int>& indices) {
  std::vector<const TensorF*> imgs;
  imgs.reserve(indices.size());
  for (int i : indices) imgs.push_back(&corpus[static_cast<size_t>(i)].image);
  auto batch = stack_images<float>(imgs);
  if constexpr (std::is_same_v<S, float>) return batch;
  else return batch.template cast<S>();
}

template <typename S>
void fill_noise(Tensor<S>& z, Rng& rng, double stddev) {
  for (auto& v : z.data) v = static_cast<S>(rng.gaussian() * stddev);
}

// One verifier update on a batch of protocol pairs. The first half of the
// batch is used as-is; the second half has its left image replaced by the
// frozen generator's output on that image. Returns the mean cross entropy.
template <typename S>
double discriminator_step(Discriminator<S>& disc, Generator<S>& gen,
                          Adam<S>& opt, const std::vector<ImageRecord>& corpus,
                          const std::vector<PairSample>& pairs,
                          const TrainingConfig& cfg, int epoch, int step) {
  const int b = static_cast<int>(pairs.size());
  if (b < 2 || b % 2 != 0)
    throw ShapeError("discriminator batch must be even and >= 2");
  const int half = b / 2;

  std::vector<int> lefts, rights;
  std::vector<int> labels;
  for (const auto& pr : pairs) {
    lefts.push_back(pr.left);
    rights.push_back(pr.right);
    labels.push_back(pr.label);
  }
  Tensor<S> left_batch = stack_records<S>(corpus, lefts);
  Tensor<S> right_batch = stack_records<S>(corpus, rights);

  // Privatize the second half's left images with the generator frozen in
  // eval mode.
  std::vector<int> priv_idx(lefts.begin() + half, lefts.end());
  Tensor<S> priv_in = stack_records<S>(corpus, priv_idx);
  const auto zshape = generator_bottleneck_shape(gen.config());
  Tensor<S> z({half, zshape[0], zshape[1], zshape[2]});
  Rng zrng = Rng(cfg.seed).derive("d_noise").derive(static_cast<uint64_t>(epoch))
                 .derive(static_cast<uint64_t>(step));
  fill_noise(z, zrng, gen.config().noise_std);
  Tensor<S> priv_out = gen.forward(priv_in, z, Mode::kEval);
  const int64_t per_image = priv_out.numel() / half;
  std::copy(priv_out.data.begin(), priv_out.data.end(),
            left_batch.data.begin() + static_cast<int64_t>(half) * per_image);
  if (cfg.privatized_labels == PrivatizedLabelPolicy::kAlwaysDifferent)
    for (int i = half; i < b; ++i) labels[static_cast<size_t>(i)] = 1;

  Rng drop = Rng(cfg.seed).derive("d_drop").derive(static_cast<uint64_t>(epoch))
                 .derive(static_cast<uint64_t>(step));
  Tensor<S> emb = disc.embed(concat_batches(left_batch, right_batch),
                             Mode::kTrain, &drop);
  auto [ea, eb] = split_batches(emb, b);
  const double margin = disc.config().margin;
  const auto ps = similarity_probabilities(ea, eb, margin);

  double loss = 0.0;
  std::vector<double> dldp(static_cast<size_t>(b));
  for (int i = 0; i < b; ++i) {
    loss += cross_entropy(labels[static_cast<size_t>(i)], ps[static_cast<size_t>(i)]);
    dldp[static_cast<size_t>(i)] =
        cross_entropy_dp(labels[static_cast<size_t>(i)], ps[static_cast<size_t>(i)]) / b;
  }
  loss /= b;

  Tensor<S> gea(ea.shape), geb(eb.shape);
  similarity_backward(ea, eb, margin, dldp, gea, geb);
  disc.zero_grads();
  disc.backward(concat_batches(gea, geb));
  opt.step(disc);
  return loss;
}

// One generator update on a batch of same-identity (source, reference)
// pairs. The generator privatizes the sources and is pushed to make the
// frozen verifier read (reference, privatized) as different identities,
// while the distortion term pulls the output towards the source. Returns
// {mean adversarial cross entropy, mean distortion}.
template <typename S>
std::pair<double, double> generator_step(Generator<S>& gen,
                                         Discriminator<S>& disc, Adam<S>& opt,
                                         const std::vector<ImageRecord>& corpus,
                                         const std::vector<PairSample>& pairs,
                                         const TrainingConfig& cfg, int epoch,
                                         int step) {
  const int b = static_cast<int>(pairs.size());
  if (b < 1) throw ShapeError("generator batch must not be empty");
  for (const auto& pr : pairs)
    if (pr.label != 0)
      throw ShapeError("generator batches are built from same-identity pairs");

  std::vector<int> sources, refs;
  for (const auto& pr : pairs) {
    sources.push_back(pr.left);
    refs.push_back(pr.right);
  }
  Tensor<S> src_batch = stack_records<S>(corpus, sources);
  Tensor<S> ref_batch = stack_records<S>(corpus, refs);

  const auto zshape = generator_bottleneck_shape(gen.config());
  Tensor<S> z({b, zshape[0], zshape[1], zshape[2]});
  Rng zrng = Rng(cfg.seed).derive("g_noise").derive(static_cast<uint64_t>(epoch))
                 .derive(static_cast<uint64_t>(step));
  fill_noise(z, zrng, gen.config().noise_std);
  Rng drop = Rng(cfg.seed).derive("g_drop").derive(static_cast<uint64_t>(epoch))
                 .derive(static_cast<uint64_t>(step));
  Tensor<S> priv = gen.forward(src_batch, z, Mode::kTrain, &drop);

  Tensor<S> emb = disc.embed(concat_batches(ref_batch, priv), Mode::kEval);
  auto [er, ep] = split_batches(emb, b);
  const double margin = disc.config().margin;
  const auto ps = similarity_probabilities(er, ep, margin);

  double g_adv = 0.0;
  std::vector<double> djdp(static_cast<size_t>(b));
  for (int i = 0; i < b; ++i) {
    g_adv += cross_entropy(0, ps[static_cast<size_t>(i)]);
    // The generator maximizes the cross entropy, so the minimized objective
    // carries it with a negative sign.
    djdp[static_cast<size_t>(i)] = -cross_entropy_dp(0, ps[static_cast<size_t>(i)]) / b;
  }
  g_adv /= b;

  Tensor<S> ger(er.shape), gep(ep.shape);
  similarity_backward(er, ep, margin, djdp, ger, gep);
  disc.zero_grads();
  Tensor<S> gimages = disc.backward(concat_batches(ger, gep));
  auto [gref_unused, gpriv] = split_batches(gimages, b);
  (void)gref_unused;

  double mean_dist = 0.0;
  Tensor<S> gslice({priv.dim(1), priv.dim(2), priv.dim(3)});
  const int64_t per = gslice.numel();
  for (int i = 0; i < b; ++i) {
    Tensor<S> src_i = slice_image(src_batch, i);
    Tensor<S> priv_i = slice_image(priv, i);
    mean_dist += distortion(src_i, priv_i);
    gslice.zero();
    // Objective term +lambda/b * (1 - ssim) differentiates to
    // -lambda/b * d(ssim)/d(priv).
    ssim_backward_wrt_b(src_i, priv_i, -cfg.lambda / b, gslice);
    for (int64_t j = 0; j < per; ++j) gpriv.data[static_cast<size_t>(i) * per + j] += gslice[j];
  }
  mean_dist /= b;

  gen.zero_grads();
  gen.backward(gpriv);
  opt.step(gen);
  return {g_adv, mean_dist};
}

// --------------------------------------------------------------------------
// Full training driver (float path). Writes checkpoints, a final parameter
// archive and an ndjson step log under out_dir when one is given.
// --------------------------------------------------------------------------

struct ModelParams;

struct TrainOutcome {
  std::vector<StepRecord> records;
  std::string final_params_path;   // empty when out_dir is empty
};

TrainOutcome train(const DatasetSpec& data, const DiscriminatorConfig& dcfg,
                   const GeneratorConfig& gcfg, const TrainingConfig& tcfg,
                   const std::string& out_dir,
                   const std::function<void(const StepRecord&)>& on_step = {});

// Picks a run back up from a checkpoint archive. The run continues on the
// exact step, pair and noise sequence the uninterrupted run would have used;
// a checkpoint of a finished run returns immediately with no new records.
TrainOutcome resume_training(const std::string& checkpoint_path,
                             const std::string& out_dir,
                             const std::function<void(const StepRecord&)>& on_step = {});

std::string step_record_json(const StepRecord& r);

}  // namespace sgap

#endif  // SGAP_TRAINING_HPP
