#include "sgap/utility_harness.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "sgap/params_io.hpp"
#include "sgap/training.hpp"

namespace sgap {

const char* proxy_classifier_name(ProxyClassifier c) {
  return c == ProxyClassifier::kSmallCnn ? "small_cnn" : "pretrained_finetune";
}

ProxyClassifier proxy_classifier_from_name(const std::string& name) {
  if (name == "small_cnn") return ProxyClassifier::kSmallCnn;
  if (name == "pretrained_finetune") return ProxyClassifier::kPretrainedFinetune;
  throw ConfigError("utility.classifier: unknown value \"" + name + "\"");
}

std::vector<ImageRecord> privatize_corpus(Generator<float>* gen,
                                          const std::vector<ImageRecord>& corpus,
                                          uint64_t seed) {
  std::vector<ImageRecord> out;
  out.reserve(corpus.size());
  if (gen == nullptr) {
    for (const auto& rec : corpus) {
      ImageRecord r = rec;
      for (auto& v : r.image.data) v = std::tanh(v);
      out.push_back(std::move(r));
    }
    return out;
  }

  const auto zshape = generator_bottleneck_shape(gen->config());
  const Rng noise_root = Rng(seed).derive("priv_noise");
  const double stddev = gen->config().noise_std;
  const int chunk = 32;
  for (size_t base = 0; base < corpus.size(); base += chunk) {
    const int b = static_cast<int>(std::min<size_t>(chunk, corpus.size() - base));
    std::vector<const TensorF*> imgs;
    for (int i = 0; i < b; ++i) imgs.push_back(&corpus[base + static_cast<size_t>(i)].image);
    TensorF batch = stack_images<float>(imgs);

    TensorF z({b, zshape[0], zshape[1], zshape[2]});
    const int64_t zper = static_cast<int64_t>(zshape[0]) * zshape[1] * zshape[2];
    for (int i = 0; i < b; ++i) {
      Rng zr = noise_root.derive(static_cast<uint64_t>(base) + static_cast<uint64_t>(i));
      for (int64_t k = 0; k < zper; ++k)
        z[static_cast<int64_t>(i) * zper + k] =
            static_cast<float>(zr.gaussian() * stddev);
    }

    TensorF priv = gen->forward(batch, z, Mode::kEval);
    for (int i = 0; i < b; ++i) {
      ImageRecord r = corpus[base + static_cast<size_t>(i)];
      r.image = slice_image(priv, i);
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<std::vector<int>> stratified_folds(
    const std::vector<ImageRecord>& corpus, int folds, uint64_t seed) {
  if (folds < 2) throw ConfigError("utility.folds: must be >= 2");
  if (corpus.empty()) throw ConfigError("cannot build folds from an empty corpus");

  std::map<int, std::vector<int>> by_class;
  for (size_t i = 0; i < corpus.size(); ++i)
    by_class[corpus[i].attribute].push_back(static_cast<int>(i));

  std::vector<std::vector<int>> out(static_cast<size_t>(folds));
  const Rng root = Rng(seed).derive("folds");
  for (auto& [cls, members] : by_class) {
    if (static_cast<int>(members.size()) < folds)
      throw ConfigError("attribute class " + std::to_string(cls) + " has " +
                        std::to_string(members.size()) +
                        " samples, fewer than the " + std::to_string(folds) +
                        " folds; every fold must contain every class");
    Rng r = root.derive(static_cast<uint64_t>(cls));
    r.shuffle(members.begin(), members.end());
    for (size_t p = 0; p < members.size(); ++p)
      out[p % static_cast<size_t>(folds)].push_back(members[p]);
  }
  for (auto& fold : out) std::sort(fold.begin(), fold.end());
  return out;
}

namespace {

std::pair<TensorF, std::vector<int>> stack_labeled(
    const std::vector<ImageRecord>& corpus, const std::vector<int>& idx,
    size_t begin, size_t count) {
  std::vector<const TensorF*> imgs;
  std::vector<int> labels;
  for (size_t i = begin; i < begin + count; ++i) {
    const auto& rec = corpus[static_cast<size_t>(idx[i])];
    imgs.push_back(&rec.image);
    labels.push_back(rec.attribute);
  }
  return {stack_images<float>(imgs), std::move(labels)};
}

double train_and_eval_fold(const std::vector<ImageRecord>& corpus,
                           const std::vector<int>& train_idx,
                           const std::vector<int>& eval_idx,
                           const SmallCnnConfig& ncfg, const UtilityConfig& cfg,
                           int fold) {
  SmallCnn<float> net(ncfg);
  const Rng root(cfg.seed);
  net.init_params(root.derive("proxy_init", static_cast<uint64_t>(fold)).next_u64());
  if (cfg.classifier == ProxyClassifier::kPretrainedFinetune) {
    const ModelParams pre = load_params(cfg.pretrained_path);
    restore_network<SmallCnn<float>, float>(pre, net, "proxy/");
  }

  Adam<float> opt(cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  std::vector<int> order = train_idx;
  const size_t batch = static_cast<size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuf = root.derive("proxy_order", static_cast<uint64_t>(fold))
                   .derive(static_cast<uint64_t>(epoch));
    shuf.shuffle(order.begin(), order.end());
    for (size_t pos = 0; pos < order.size(); pos += batch) {
      const size_t b = std::min(batch, order.size() - pos);
      auto [images, labels] = stack_labeled(corpus, order, pos, b);
      TensorF logits = net.forward(images, Mode::kTrain);
      TensorF dlogits;
      softmax_cross_entropy(logits, labels, &dlogits);
      net.zero_grads();
      net.backward(dlogits);
      opt.step(net);
    }
  }

  int correct = 0;
  const size_t chunk = 64;
  for (size_t pos = 0; pos < eval_idx.size(); pos += chunk) {
    const size_t b = std::min(chunk, eval_idx.size() - pos);
    auto [images, labels] = stack_labeled(corpus, eval_idx, pos, b);
    const auto preds = argmax_rows(net.forward(images, Mode::kEval));
    for (size_t i = 0; i < b; ++i)
      if (preds[i] == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(eval_idx.size());
}

}  // namespace

UtilityReport proxy_accuracy(const std::vector<ImageRecord>& corpus,
                             const UtilityConfig& cfg) {
  auto violations = cfg.validate();
  if (!violations.empty()) throw ConfigError(violations);
  if (corpus.empty()) throw ConfigError("cannot measure utility of an empty corpus");

  int classes = 0;
  for (const auto& rec : corpus) {
    if (rec.attribute < 0)
      throw ConfigError("negative attribute id in corpus");
    classes = std::max(classes, rec.attribute + 1);
  }
  if (classes < 2)
    throw DegenerateSampleError("proxy task needs at least two attribute classes");

  SmallCnnConfig ncfg;
  ncfg.input_channels = corpus[0].image.dim(0);
  ncfg.input_size = corpus[0].image.dim(1);
  ncfg.classes = classes;

  const auto folds = stratified_folds(corpus, cfg.folds, cfg.seed);
  UtilityReport rep;
  for (int f = 0; f < cfg.folds; ++f) {
    std::vector<int> train_idx;
    for (int g = 0; g < cfg.folds; ++g)
      if (g != f)
        train_idx.insert(train_idx.end(), folds[static_cast<size_t>(g)].begin(),
                         folds[static_cast<size_t>(g)].end());
    rep.per_fold.push_back(train_and_eval_fold(
        corpus, train_idx, folds[static_cast<size_t>(f)], ncfg, cfg, f));
  }

  rep.accuracy_mean =
      std::accumulate(rep.per_fold.begin(), rep.per_fold.end(), 0.0) /
      static_cast<double>(rep.per_fold.size());
  double var = 0.0;
  for (double a : rep.per_fold) {
    const double d = a - rep.accuracy_mean;
    var += d * d;
  }
  rep.accuracy_std = std::sqrt(var / static_cast<double>(rep.per_fold.size()));
  return rep;
}

}  // namespace sgap
