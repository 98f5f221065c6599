#include <unistd.h>

#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fd_check.hpp"
#include "sgap/config_json.hpp"
#include "sgap/params_io.hpp"
#include "sgap/training.hpp"

using namespace sgap;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() /
               ("sgap_train_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

DatasetSpec tiny_dataset() {
  DatasetSpec ds;
  ds.kind = DatasetKind::kSynthetic;
  ds.image_size = 32;
  ds.channels = 1;
  ds.identities = 4;
  ds.images_per_identity = 4;
  ds.epoch_pair_count = 8;
  ds.seed = 77;
  return ds;
}

DiscriminatorConfig tiny_disc() {
  DiscriminatorConfig dc;
  dc.input_size = 32;
  dc.conv_channels = {2, 3, 4};
  dc.embedding_dim = 5;
  dc.dense_width = 16;
  return dc;
}

GeneratorConfig tiny_gen() {
  GeneratorConfig gc;
  gc.input_size = 32;
  gc.base_channels = 2;
  return gc;
}

template <typename Net, typename S>
std::vector<S> snapshot_state(Net& net) {
  std::vector<S> all;
  net.visit_params([&](const std::string&, Tensor<S>& p, Tensor<S>&) {
    all.insert(all.end(), p.data.begin(), p.data.end());
  });
  net.visit_buffers([&](const std::string&, Tensor<S>& b) {
    all.insert(all.end(), b.data.begin(), b.data.end());
  });
  return all;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

struct MiniNet {
  TensorD p{std::vector<int>{2}};
  TensorD g{std::vector<int>{2}};
  template <typename V>
  void visit_params(V&& v) { v(std::string("p"), p, g); }
};

// Freshly initialized weights put every embedding within a whisker of every
// other, which parks the similarity probability on the cross-entropy clamp
// where the loss is locally flat and finite differences read zero. Widening
// the head layer moves the probabilities into the differentiable band so a
// finite-difference comparison means something.
void spread_embeddings(Discriminator<double>& disc) {
  disc.visit_params([](const std::string& name, TensorD& p, TensorD&) {
    if (name == "head.w")
      for (auto& x : p.data) x *= 150.0;
  });
}

}  // namespace

TEST_CASE("cross entropy values and derivative") {
  CHECK(cross_entropy(0, 0.5) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(cross_entropy(1, 0.5) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(cross_entropy(0, 0.25) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  // Clamping bounds the loss at -log(eps) however extreme the probability.
  const double cap = -std::log(1e-7);
  CHECK(cross_entropy(0, 0.0) == doctest::Approx(cap).epsilon(1e-12));
  CHECK(cross_entropy(0, -3.0) == doctest::Approx(cap).epsilon(1e-12));
  // 1 - (1 - 1e-7) is not exactly 1e-7 in doubles, hence the looser bound.
  CHECK(cross_entropy(1, 1.0) == doctest::Approx(cap).epsilon(1e-8));

  CHECK(cross_entropy_dp(0, 0.25) == doctest::Approx(-4.0).epsilon(1e-12));
  CHECK(cross_entropy_dp(1, 0.75) == doctest::Approx(4.0).epsilon(1e-12));

  for (double p : {0.05, 0.3, 0.5, 0.77, 0.98}) {
    for (int label : {0, 1}) {
      const double h = 1e-7;
      const double fd =
          (cross_entropy(label, p + h) - cross_entropy(label, p - h)) / (2 * h);
      CHECK(cross_entropy_dp(label, p) == doctest::Approx(fd).epsilon(1e-5));
    }
  }
}

TEST_CASE("adam follows the reference update") {
  MiniNet net;
  net.p[0] = 1.0;
  net.p[1] = -2.0;

  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Adam<double> opt(lr, b1, b2, eps);

  // Straight-line reference arithmetic, kept separate from the class.
  double m[2] = {0, 0}, v[2] = {0, 0}, ref[2] = {1.0, -2.0};
  const double grads[3][2] = {{1.0, -3.0}, {0.5, 0.25}, {-2.0, 1.5}};
  for (int t = 1; t <= 3; ++t) {
    net.g[0] = grads[t - 1][0];
    net.g[1] = grads[t - 1][1];
    opt.step(net);
    for (int j = 0; j < 2; ++j) {
      const double gj = grads[t - 1][j];
      m[j] = b1 * m[j] + (1 - b1) * gj;
      v[j] = b2 * v[j] + (1 - b2) * gj * gj;
      const double mhat = m[j] / (1 - std::pow(b1, t));
      const double vhat = v[j] / (1 - std::pow(b2, t));
      ref[j] -= lr * mhat / (std::sqrt(vhat) + eps);
      CHECK(net.p[j] == doctest::Approx(ref[j]).epsilon(1e-14));
    }
  }
  CHECK(opt.step_count() == 3);

  // First-step magnitude is lr regardless of gradient scale.
  MiniNet big;
  big.p[0] = 0.0;
  big.g[0] = 1e6;
  big.g[1] = 1e6;
  Adam<double> opt2(lr, b1, b2, eps);
  opt2.step(big);
  CHECK(big.p[0] == doctest::Approx(-lr).epsilon(1e-9));
}

TEST_CASE("discriminator step trains d and leaves g untouched") {
  auto ds = tiny_dataset();
  auto corpus = synth_glyph_corpus(ds);
  Discriminator<float> disc(tiny_disc());
  Generator<float> gen(tiny_gen());
  disc.init_params(11);
  gen.init_params(12);
  TrainingConfig tc;
  tc.batch_size = 4;

  std::vector<PairSample> pairs;
  for (int i = 0; i < 4; ++i) pairs.push_back(sample_pair(ds, corpus, tc.seed, 0, i));

  const auto g_before = snapshot_state<Generator<float>, float>(gen);
  const auto d_before = snapshot_state<Discriminator<float>, float>(disc);
  Adam<float> opt(tc.lr_d, tc.adam_beta1, tc.adam_beta2, tc.adam_eps);
  const double loss = discriminator_step(disc, gen, opt, corpus, pairs, tc, 0, 0);

  CHECK(std::isfinite(loss));
  CHECK(loss > 0.0);
  CHECK(snapshot_state<Generator<float>, float>(gen) == g_before);
  CHECK(snapshot_state<Discriminator<float>, float>(disc) != d_before);

  // Same state, same inputs, fresh nets: the step reproduces exactly.
  Discriminator<float> disc2(tiny_disc());
  Generator<float> gen2(tiny_gen());
  disc2.init_params(11);
  gen2.init_params(12);
  Adam<float> opt2(tc.lr_d, tc.adam_beta1, tc.adam_beta2, tc.adam_eps);
  const double loss2 = discriminator_step(disc2, gen2, opt2, corpus, pairs, tc, 0, 0);
  CHECK(loss2 == loss);
  CHECK(snapshot_state<Discriminator<float>, float>(disc2) ==
        snapshot_state<Discriminator<float>, float>(disc));
}

TEST_CASE("privatized label policy changes only mixed-label batches") {
  auto ds = tiny_dataset();
  auto corpus = synth_glyph_corpus(ds);
  auto groups = index_by_identity(corpus);
  TrainingConfig tc;
  tc.batch_size = 4;

  auto run = [&](PrivatizedLabelPolicy policy, const std::vector<PairSample>& pairs) {
    Discriminator<float> disc(tiny_disc());
    Generator<float> gen(tiny_gen());
    disc.init_params(21);
    gen.init_params(22);
    Adam<float> opt(tc.lr_d, tc.adam_beta1, tc.adam_beta2, tc.adam_eps);
    TrainingConfig t = tc;
    t.privatized_labels = policy;
    return discriminator_step(disc, gen, opt, corpus, pairs, t, 0, 0);
  };

  // All pairs already labeled different: the policies agree exactly.
  std::vector<PairSample> all_diff = {{groups[0][0], groups[1][0], 1},
                                      {groups[1][1], groups[2][0], 1},
                                      {groups[2][1], groups[3][0], 1},
                                      {groups[3][1], groups[0][1], 1}};
  CHECK(run(PrivatizedLabelPolicy::kTrueLabels, all_diff) ==
        run(PrivatizedLabelPolicy::kAlwaysDifferent, all_diff));

  // Same-identity pairs in the privatized half: the policies diverge.
  std::vector<PairSample> mixed = {{groups[0][0], groups[1][0], 1},
                                   {groups[1][1], groups[2][0], 1},
                                   {groups[2][0], groups[2][1], 0},
                                   {groups[3][0], groups[3][1], 0}};
  CHECK(run(PrivatizedLabelPolicy::kTrueLabels, mixed) !=
        run(PrivatizedLabelPolicy::kAlwaysDifferent, mixed));
}

TEST_CASE("generator step trains g against a frozen verifier") {
  auto ds = tiny_dataset();
  auto corpus = synth_glyph_corpus(ds);
  auto groups = index_by_identity(corpus);
  Discriminator<float> disc(tiny_disc());
  Generator<float> gen(tiny_gen());
  disc.init_params(31);
  gen.init_params(32);
  TrainingConfig tc;
  tc.batch_size = 4;

  std::vector<PairSample> pairs = {{groups[0][0], groups[0][1], 0},
                                   {groups[1][0], groups[1][2], 0},
                                   {groups[2][1], groups[2][3], 0},
                                   {groups[3][2], groups[3][0], 0}};

  const auto d_before = snapshot_state<Discriminator<float>, float>(disc);
  const auto g_before = snapshot_state<Generator<float>, float>(gen);
  Adam<float> opt(tc.lr_g, tc.adam_beta1, tc.adam_beta2, tc.adam_eps);
  auto [adv, dist] = generator_step(gen, disc, opt, corpus, pairs, tc, 0, 0);

  CHECK(std::isfinite(adv));
  CHECK(adv > 0.0);
  CHECK(dist >= 0.0);
  CHECK(dist <= 2.0);
  // The verifier runs in eval mode, so even its running statistics must
  // come back bit-identical.
  CHECK(snapshot_state<Discriminator<float>, float>(disc) == d_before);
  CHECK(snapshot_state<Generator<float>, float>(gen) != g_before);

  // A label-1 pair has no place in a generator batch.
  std::vector<PairSample> bad = pairs;
  bad[0].label = 1;
  CHECK_THROWS_AS(generator_step(gen, disc, opt, corpus, bad, tc, 0, 1),
                  ShapeError);
}

TEST_CASE("generator step gradient matches finite differences") {
  DatasetSpec ds = tiny_dataset();
  ds.identities = 3;
  ds.images_per_identity = 3;
  auto corpus = synth_glyph_corpus(ds);
  auto groups = index_by_identity(corpus);

  Discriminator<double> disc(tiny_disc());
  Generator<double> gen(tiny_gen());
  disc.init_params(41);
  gen.init_params(42);
  spread_embeddings(disc);
  TrainingConfig tc;
  tc.lambda = 1.5;
  tc.batch_size = 2;
  Adam<double> opt(0.0, tc.adam_beta1, tc.adam_beta2, tc.adam_eps);

  std::vector<PairSample> pairs = {{groups[0][0], groups[0][1], 0},
                                   {groups[1][2], groups[1][0], 0}};

  auto objective = [&]() {
    auto [adv, dist] = generator_step(gen, disc, opt, corpus, pairs, tc, 3, 7);
    return -adv + tc.lambda * dist;
  };

  // One call leaves the analytic gradient of that exact objective in the
  // generator (the zero-rate optimizer never moves the parameters).
  objective();
  std::deque<TensorD> grad_copies;
  std::vector<sgap::testing::FdSpan> spans;
  gen.visit_params([&](const std::string&, TensorD& p, TensorD& g) {
    grad_copies.push_back(g);
    spans.push_back({p.data.data(), grad_copies.back().data.data(), p.numel()});
  });

  const auto r = sgap::testing::fd_compare(objective, spans, 4);
  CAPTURE(r.max_rel_err);
  CAPTURE(r.usable_fraction());
  CHECK(r.checked > 60);
  CHECK(r.usable_fraction() > 0.7);
  CHECK(r.max_rel_err < 1e-4);
}

TEST_CASE("discriminator step gradient matches finite differences") {
  DatasetSpec ds = tiny_dataset();
  ds.identities = 3;
  ds.images_per_identity = 3;
  auto corpus = synth_glyph_corpus(ds);
  auto groups = index_by_identity(corpus);

  Discriminator<double> disc(tiny_disc());
  Generator<double> gen(tiny_gen());
  disc.init_params(51);
  gen.init_params(52);
  spread_embeddings(disc);
  TrainingConfig tc;
  tc.batch_size = 4;
  Adam<double> opt(0.0, tc.adam_beta1, tc.adam_beta2, tc.adam_eps);

  std::vector<PairSample> pairs = {{groups[0][0], groups[0][1], 0},
                                   {groups[1][0], groups[2][0], 1},
                                   {groups[2][1], groups[2][2], 0},
                                   {groups[0][2], groups[1][1], 1}};

  auto loss = [&]() {
    return discriminator_step(disc, gen, opt, corpus, pairs, tc, 2, 5);
  };

  loss();
  std::deque<TensorD> grad_copies;
  std::vector<sgap::testing::FdSpan> spans;
  disc.visit_params([&](const std::string&, TensorD& p, TensorD& g) {
    grad_copies.push_back(g);
    spans.push_back({p.data.data(), grad_copies.back().data.data(), p.numel()});
  });

  const auto r = sgap::testing::fd_compare(loss, spans, 4);
  CAPTURE(r.max_rel_err);
  CAPTURE(r.usable_fraction());
  CHECK(r.checked > 30);
  CHECK(r.usable_fraction() > 0.7);
  CHECK(r.max_rel_err < 1e-4);
}

TEST_CASE("training run writes logs, checkpoints and a loadable archive") {
  auto out = fresh_dir("run");
  TrainingConfig tc;
  tc.epochs = 2;
  tc.batch_size = 4;
  tc.checkpoint_every = 1;
  tc.seed = 5;

  auto outcome = train(tiny_dataset(), tiny_disc(), tiny_gen(), tc, out.string());

  // 8 pairs / batch 4 = 2 steps per epoch, 2 epochs.
  REQUIRE(outcome.records.size() == 4);
  for (const auto& r : outcome.records) {
    CHECK(std::isfinite(r.d_loss));
    CHECK(r.has_g);
    CHECK(std::isfinite(r.g_adv));
    CHECK(r.g_distortion >= 0.0);
    CHECK(r.g_objective ==
          doctest::Approx(-r.g_adv + tc.lambda * r.g_distortion).epsilon(1e-12));
  }

  std::ifstream log(out / "train_log.ndjson");
  REQUIRE(log.good());
  int lines = 0;
  std::string line;
  while (std::getline(log, line)) {
    ++lines;
    auto j = nlohmann::json::parse(line);
    CHECK(j.contains("epoch"));
    CHECK(j.contains("d_loss"));
    CHECK(j.contains("g_objective"));
  }
  CHECK(lines == 4);

  REQUIRE(!outcome.final_params_path.empty());
  auto params = load_params(outcome.final_params_path);
  CHECK(params.config.at("archive") == "model");
  Discriminator<float> disc(tiny_disc());
  Generator<float> gen(tiny_gen());
  restore_models(params, disc, gen);

  auto ck = load_params((out / "checkpoint.bin").string());
  CHECK(ck.config.at("archive") == "checkpoint");
  CHECK(ck.config.at("progress").at("epochs_completed") == 2);

  fs::remove_all(out);
}

TEST_CASE("training is deterministic across runs") {
  auto out1 = fresh_dir("det1");
  auto out2 = fresh_dir("det2");
  TrainingConfig tc;
  tc.epochs = 1;
  tc.batch_size = 4;
  tc.seed = 9;

  auto a = train(tiny_dataset(), tiny_disc(), tiny_gen(), tc, out1.string());
  auto b = train(tiny_dataset(), tiny_disc(), tiny_gen(), tc, out2.string());

  REQUIRE(a.records.size() == b.records.size());
  for (size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].d_loss == b.records[i].d_loss);
    CHECK(a.records[i].g_adv == b.records[i].g_adv);
    CHECK(a.records[i].g_distortion == b.records[i].g_distortion);
  }
  CHECK(slurp(a.final_params_path) == slurp(b.final_params_path));

  // A different seed must actually change the run.
  auto out3 = fresh_dir("det3");
  TrainingConfig other = tc;
  other.seed = 10;
  auto c = train(tiny_dataset(), tiny_disc(), tiny_gen(), other, out3.string());
  CHECK(slurp(a.final_params_path) != slurp(c.final_params_path));

  fs::remove_all(out1);
  fs::remove_all(out2);
  fs::remove_all(out3);
}

TEST_CASE("resume from a mid-run checkpoint matches the uninterrupted run") {
  auto out_full = fresh_dir("resume_full");
  auto out_tail = fresh_dir("resume_tail");
  fs::path kept = out_full / "kept_checkpoint.bin";

  TrainingConfig tc;
  tc.epochs = 2;
  tc.batch_size = 4;
  tc.checkpoint_every = 1;
  tc.seed = 13;

  // Keep a copy of the epoch-1 checkpoint before the run moves past it.
  bool copied = false;
  auto full = train(tiny_dataset(), tiny_disc(), tiny_gen(), tc,
                    out_full.string(), [&](const StepRecord& r) {
                      if (!copied && r.epoch == 1) {
                        fs::copy_file(out_full / "checkpoint.bin", kept);
                        copied = true;
                      }
                    });
  REQUIRE(copied);

  auto tail = resume_training(kept.string(), out_tail.string());
  REQUIRE(tail.records.size() == 2);
  for (size_t i = 0; i < tail.records.size(); ++i) {
    const auto& got = tail.records[i];
    const auto& want = full.records[2 + i];
    CHECK(got.epoch == want.epoch);
    CHECK(got.step == want.step);
    CHECK(got.d_loss == want.d_loss);
    CHECK(got.g_adv == want.g_adv);
    CHECK(got.g_distortion == want.g_distortion);
  }
  CHECK(slurp(full.final_params_path) == slurp(tail.final_params_path));

  // Resuming a finished run is a no-op.
  auto out_noop = fresh_dir("resume_noop");
  auto noop = resume_training((out_full / "checkpoint.bin").string(),
                              out_noop.string());
  CHECK(noop.records.empty());
  CHECK(slurp(noop.final_params_path) == slurp(full.final_params_path));

  // A poisoned parameter aborts the run instead of training on garbage.
  auto poisoned = load_params(kept.string());
  bool found = false;
  for (auto& [name, tensor] : poisoned.arrays) {
    if (name.rfind("d/", 0) == 0 && name.find(".conv.w") != std::string::npos) {
      tensor[0] = std::numeric_limits<float>::quiet_NaN();
      found = true;
      break;
    }
  }
  REQUIRE(found);
  fs::path bad = out_full / "poisoned.bin";
  save_params(bad.string(), poisoned);
  auto out_bad = fresh_dir("resume_bad");
  CHECK_THROWS_AS(resume_training(bad.string(), out_bad.string()),
                  TrainingAbortError);

  fs::remove_all(out_full);
  fs::remove_all(out_tail);
  fs::remove_all(out_noop);
  fs::remove_all(out_bad);
}

TEST_CASE("experiment config json round trip and validation") {
  ExperimentConfig cfg;
  cfg.dataset = tiny_dataset();
  cfg.discriminator = tiny_disc();
  cfg.generator = tiny_gen();
  cfg.training.lambda = 0.25;
  cfg.training.privatized_labels = PrivatizedLabelPolicy::kAlwaysDifferent;

  nlohmann::json j = cfg;
  auto back = j.get<ExperimentConfig>();
  CHECK(back.dataset.image_size == 32);
  CHECK(back.dataset.identities == 4);
  CHECK(back.discriminator.conv_channels == std::array<int, 3>{2, 3, 4});
  CHECK(back.training.lambda == 0.25);
  CHECK(back.training.privatized_labels == PrivatizedLabelPolicy::kAlwaysDifferent);
  CHECK(nlohmann::json(back).dump() == j.dump());
  CHECK(back.validate().empty());

  // Partial documents override only the keys they carry.
  ExperimentConfig partial = nlohmann::json::parse(
      R"({"training": {"lambda": 7.5}})").get<ExperimentConfig>();
  CHECK(partial.training.lambda == 7.5);
  CHECK(partial.training.epochs == TrainingConfig{}.epochs);
  CHECK(partial.dataset.image_size == DatasetSpec{}.image_size);

  // Cross-section mismatches are reported by name.
  ExperimentConfig bad = cfg;
  bad.generator.input_size = 64;
  auto v = bad.validate();
  REQUIRE(v.size() == 1);
  CHECK(v[0].find("generator.input_size") != std::string::npos);

  CHECK_THROWS_AS(privatized_label_policy_from_name("sometimes"), ConfigError);

  auto dir = fresh_dir("cfg");
  {
    std::ofstream f(dir / "bad.json");
    f << "{ not json";
  }
  CHECK_THROWS_AS(load_experiment_config((dir / "bad.json").string()), ConfigError);
  CHECK_THROWS_AS(load_experiment_config((dir / "missing.json").string()), IoError);
  {
    std::ofstream f(dir / "good.json");
    f << nlohmann::json(cfg).dump();
  }
  auto loaded = load_experiment_config((dir / "good.json").string());
  CHECK(loaded.training.lambda == 0.25);
  fs::remove_all(dir);
}
