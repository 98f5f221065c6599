#include <cmath>
#include <deque>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "fd_check.hpp"
#include "sgap/params_io.hpp"
#include "sgap/utility_harness.hpp"

using namespace sgap;
namespace fs = std::filesystem;

namespace {

std::vector<ImageRecord> desk_corpus(int identities, int per_identity,
                                     int size, uint64_t seed) {
  DatasetSpec ds;
  ds.kind = DatasetKind::kSynthetic;
  ds.image_size = size;
  ds.identities = identities;
  ds.images_per_identity = per_identity;
  ds.seed = seed;
  return synth_glyph_corpus(ds);
}

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / "sgap_utility_tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("softmax cross entropy on hand-checkable logits") {
  TensorD logits({1, 2});
  std::vector<int> labels = {0};
  TensorD d;
  CHECK(softmax_cross_entropy(logits, labels, &d) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(d[0] == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(d[1] == doctest::Approx(0.5).epsilon(1e-12));

  // Shift invariance: adding a constant to a row changes nothing.
  TensorD l2({2, 3});
  l2.data = {1.0, -2.0, 0.5, 101.0, 98.0, 100.5};
  const double a = softmax_cross_entropy(l2, {2, 2});
  TensorD l3 = l2;
  for (int j = 0; j < 3; ++j) l3[j] += 100.0;
  const double b0 = softmax_cross_entropy(l3, {2, 2});
  CHECK(a == doctest::Approx(b0).epsilon(1e-12));

  // Overflow-safe for large logits.
  TensorD big({1, 2});
  big.data = {5000.0, 0.0};
  CHECK(std::isfinite(softmax_cross_entropy(big, {1})));
  CHECK(softmax_cross_entropy(big, {0}) == doctest::Approx(0.0).epsilon(1e-12));

  CHECK_THROWS_AS(softmax_cross_entropy(logits, {0, 1}), ShapeError);
  CHECK_THROWS_AS(softmax_cross_entropy(logits, {2}), ShapeError);

  TensorD am({2, 3});
  am.data = {0.1, 0.9, 0.3, 2.0, -1.0, 1.5};
  CHECK(argmax_rows(am) == std::vector<int>{1, 0});
}

TEST_CASE("classifier gradients match finite differences") {
  SmallCnnConfig cfg;
  cfg.input_size = 24;
  cfg.input_channels = 1;
  cfg.classes = 3;
  cfg.conv_channels = {2, 3, 4};
  SmallCnn<double> net(cfg);
  net.init_params(11);

  TensorD x({3, 1, 24, 24});
  Rng rng(5);
  for (auto& v : x.data) v = rng.gaussian() * 0.5;
  const std::vector<int> labels = {0, 2, 1};

  auto loss = [&]() {
    return softmax_cross_entropy(net.forward(x, Mode::kTrain), labels);
  };

  net.zero_grads();
  TensorD dlogits;
  softmax_cross_entropy(net.forward(x, Mode::kTrain), labels, &dlogits);
  net.backward(dlogits);

  std::deque<TensorD> grad_copies;
  std::vector<sgap::testing::FdSpan> spans;
  net.visit_params([&](const std::string&, TensorD& p, TensorD& g) {
    grad_copies.push_back(g);
    spans.push_back({p.ptr(), grad_copies.back().ptr(), p.numel()});
  });

  auto r = sgap::testing::fd_compare(loss, spans, 25);
  CHECK(r.checked > 60);
  CHECK(r.usable_fraction() > 0.7);
  CHECK(r.max_rel_err < 1e-4);
}

TEST_CASE("stratified folds cover and balance every class") {
  auto corpus = desk_corpus(10, 6, 32, 3);  // 60 images, attributes 0..3
  const int k = 4;
  auto folds = stratified_folds(corpus, k, 21);
  REQUIRE(folds.size() == 4);

  // Disjoint cover of the corpus.
  std::set<int> seen;
  for (const auto& f : folds)
    for (int i : f) CHECK(seen.insert(i).second);
  CHECK(seen.size() == corpus.size());

  // Per-class counts differ by at most one across folds and never hit zero.
  for (int cls = 0; cls < 4; ++cls) {
    int lo = 1 << 30, hi = 0;
    for (const auto& f : folds) {
      int count = 0;
      for (int i : f)
        if (corpus[static_cast<size_t>(i)].attribute == cls) ++count;
      lo = std::min(lo, count);
      hi = std::max(hi, count);
    }
    CHECK(lo >= 1);
    CHECK(hi - lo <= 1);
  }

  CHECK(stratified_folds(corpus, k, 21) == folds);
  CHECK(stratified_folds(corpus, k, 22) != folds);

  // A class thinner than the fold count cannot cover every fold.
  std::vector<ImageRecord> thin;
  for (int i = 0; i < 8; ++i) {
    ImageRecord r;
    r.image = TensorF({1, 32, 32});
    r.attribute = i < 6 ? 0 : 1;
    thin.push_back(std::move(r));
  }
  CHECK_THROWS_AS(stratified_folds(thin, 4, 1), ConfigError);
}

TEST_CASE("corpus privatization preserves labels and layout") {
  auto corpus = desk_corpus(4, 4, 32, 9);

  auto base = privatize_corpus(nullptr, corpus, 1);
  REQUIRE(base.size() == corpus.size());
  for (size_t i = 0; i < corpus.size(); ++i) {
    CHECK(base[i].identity == corpus[i].identity);
    CHECK(base[i].attribute == corpus[i].attribute);
    CHECK(base[i].path == corpus[i].path);
    CHECK(base[i].image.shape == corpus[i].image.shape);
    for (int64_t j = 0; j < corpus[i].image.numel(); ++j)
      CHECK(base[i].image[j] ==
            doctest::Approx(std::tanh(corpus[i].image[j])).epsilon(1e-6));
  }

  GeneratorConfig gc;
  gc.input_size = 32;
  gc.base_channels = 2;
  Generator<float> gen(gc);
  gen.init_params(7);

  auto priv1 = privatize_corpus(&gen, corpus, 3);
  auto priv2 = privatize_corpus(&gen, corpus, 3);
  auto priv3 = privatize_corpus(&gen, corpus, 4);
  REQUIRE(priv1.size() == corpus.size());
  bool noise_matters = false;
  for (size_t i = 0; i < corpus.size(); ++i) {
    CHECK(priv1[i].identity == corpus[i].identity);
    CHECK(priv1[i].attribute == corpus[i].attribute);
    CHECK(priv1[i].image.shape == corpus[i].image.shape);
    CHECK(priv1[i].image.data == priv2[i].image.data);
    if (priv1[i].image.data != priv3[i].image.data) noise_matters = true;
    for (float v : priv1[i].image.data) {
      CHECK(v >= -1.0f);
      CHECK(v <= 1.0f);
    }
  }
  CHECK(noise_matters);

  auto small = desk_corpus(2, 2, 64, 1);
  CHECK_THROWS_AS(privatize_corpus(&gen, small, 1), ShapeError);
}

TEST_CASE("proxy classifier learns the synthetic attribute") {
  auto corpus = desk_corpus(20, 10, 32, 41);
  UtilityConfig cfg;
  cfg.seed = 6;
  auto rep = proxy_accuracy(corpus, cfg);
  REQUIRE(rep.per_fold.size() == 4);
  double mean = 0.0;
  for (double a : rep.per_fold) mean += a;
  mean /= 4.0;
  CHECK(rep.accuracy_mean == doctest::Approx(mean).epsilon(1e-12));
  CHECK(rep.accuracy_mean > 0.9);
  CHECK(rep.accuracy_std >= 0.0);
  CHECK(rep.accuracy_std < 0.5);

  auto rep2 = proxy_accuracy(corpus, cfg);
  CHECK(rep2.per_fold == rep.per_fold);
}

TEST_CASE("utility config validation lists violations") {
  UtilityConfig cfg;
  cfg.folds = 1;
  cfg.epochs = 0;
  cfg.lr = 0.0;
  auto v = cfg.validate();
  REQUIRE(v.size() == 3);
  CHECK(v[0].find("utility.folds") != std::string::npos);

  UtilityConfig fin;
  fin.classifier = ProxyClassifier::kPretrainedFinetune;
  auto v2 = fin.validate();
  REQUIRE(v2.size() == 1);
  CHECK(v2[0].find("pretrained_path") != std::string::npos);

  CHECK(proxy_classifier_from_name("small_cnn") == ProxyClassifier::kSmallCnn);
  CHECK(proxy_classifier_from_name("pretrained_finetune") ==
        ProxyClassifier::kPretrainedFinetune);
  CHECK(proxy_classifier_name(ProxyClassifier::kSmallCnn) ==
        std::string("small_cnn"));
  CHECK_THROWS_AS(proxy_classifier_from_name("resnet"), ConfigError);
}

TEST_CASE("finetune mode seeds the classifier from an archive") {
  auto corpus = desk_corpus(6, 4, 32, 13);
  const auto dir = fresh_dir("finetune");

  SmallCnnConfig ncfg;
  ncfg.input_size = 32;
  ncfg.input_channels = 1;
  ncfg.classes = 4;
  SmallCnn<float> donor(ncfg);
  donor.init_params(99);
  ModelParams params;
  params.config = {{"archive", "proxy"}};
  collect_network<SmallCnn<float>, float>(donor, "proxy/", params);
  const auto good = (dir / "pre.bin").string();
  save_params(good, params);

  UtilityConfig cfg;
  cfg.classifier = ProxyClassifier::kPretrainedFinetune;
  cfg.pretrained_path = good;
  cfg.epochs = 1;
  cfg.seed = 2;
  auto rep = proxy_accuracy(corpus, cfg);
  CHECK(rep.per_fold.size() == 4);

  // An archive whose shapes disagree with the corpus-derived classifier.
  SmallCnnConfig other = ncfg;
  other.conv_channels = {4, 4, 4};
  SmallCnn<float> wrong(other);
  wrong.init_params(1);
  ModelParams bad;
  bad.config = {{"archive", "proxy"}};
  collect_network<SmallCnn<float>, float>(wrong, "proxy/", bad);
  const auto badpath = (dir / "bad.bin").string();
  save_params(badpath, bad);
  UtilityConfig cfg2 = cfg;
  cfg2.pretrained_path = badpath;
  CHECK_THROWS_AS(proxy_accuracy(corpus, cfg2), IntegrityError);

  UtilityConfig cfg3 = cfg;
  cfg3.pretrained_path = (dir / "missing.bin").string();
  CHECK_THROWS_AS(proxy_accuracy(corpus, cfg3), IoError);
}
