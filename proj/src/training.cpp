#include "sgap/training.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "sgap/config_json.hpp"
#include "sgap/params_io.hpp"

namespace sgap {

std::string privatized_label_policy_name(PrivatizedLabelPolicy p) {
  return p == PrivatizedLabelPolicy::kTrueLabels ? "true_labels"
                                                 : "always_different";
}

PrivatizedLabelPolicy privatized_label_policy_from_name(const std::string& name) {
  if (name == "true_labels") return PrivatizedLabelPolicy::kTrueLabels;
  if (name == "always_different") return PrivatizedLabelPolicy::kAlwaysDifferent;
  throw ConfigError("training.privatized_labels: unknown policy \"" + name +
                    "\" (expected true_labels or always_different)");
}

std::string step_record_json(const StepRecord& r) {
  nlohmann::json j{{"epoch", r.epoch},
                   {"step", r.step},
                   {"d_loss", r.d_loss},
                   {"wall_ms", r.wall_ms}};
  if (r.has_g) {
    j["g_adv"] = r.g_adv;
    j["g_distortion"] = r.g_distortion;
    j["g_objective"] = r.g_objective;
  }
  return j.dump();
}

namespace {

template <typename Net>
void collect_adam(Net& net, Adam<float>& opt, const std::string& prefix,
                  ModelParams& out) {
  size_t i = 0;
  net.visit_params([&](const std::string& name, TensorF&, TensorF&) {
    if (i < opt.moments_m().size()) {
      out.arrays[prefix + "/m/" + name] = opt.moments_m()[i];
      out.arrays[prefix + "/v/" + name] = opt.moments_v()[i];
    }
    ++i;
  });
}

template <typename Net>
void restore_adam(const ModelParams& in, Net& net, Adam<float>& opt,
                  const std::string& prefix, int64_t step_count) {
  opt.set_step_count(step_count);
  if (step_count == 0) return;
  auto& m = opt.moments_m();
  auto& v = opt.moments_v();
  m.clear();
  v.clear();
  net.visit_params([&](const std::string& name, TensorF& p, TensorF&) {
    for (auto [tag, dst] : {std::pair{"/m/", &m}, std::pair{"/v/", &v}}) {
      auto it = in.arrays.find(prefix + tag + name);
      if (it == in.arrays.end())
        throw IntegrityError("checkpoint is missing optimizer state " + prefix +
                             tag + name);
      if (it->second.shape != p.shape)
        throw IntegrityError("optimizer state " + prefix + tag + name +
                             " has the wrong shape");
      dst->push_back(it->second);
    }
  });
}

void write_checkpoint(const std::string& path, const ExperimentConfig& exp,
                      Discriminator<float>& disc, Generator<float>& gen,
                      Adam<float>& opt_d, Adam<float>& opt_g,
                      int epochs_completed) {
  ModelParams p;
  p.config = nlohmann::json{
      {"archive", "checkpoint"},
      {"experiment", exp},
      {"progress",
       {{"epochs_completed", epochs_completed},
        {"adam_t_d", opt_d.step_count()},
        {"adam_t_g", opt_g.step_count()}}}};
  collect_models(disc, gen, p);
  collect_adam(disc, opt_d, "opt_d", p);
  collect_adam(gen, opt_g, "opt_g", p);
  save_params(path, p);
}

TrainOutcome run_loop(const ExperimentConfig& exp,
                      const std::vector<ImageRecord>& corpus,
                      Discriminator<float>& disc, Generator<float>& gen,
                      Adam<float>& opt_d, Adam<float>& opt_g, int start_epoch,
                      const std::string& out_dir,
                      const std::function<void(const StepRecord&)>& on_step) {
  const TrainingConfig& t = exp.training;
  const int npairs = epoch_pair_count(exp.dataset, corpus);
  const int steps = npairs / t.batch_size;
  if (steps < 1)
    throw ConfigError("training.batch_size: exceeds the number of pairs per epoch");

  std::ofstream log;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    log.open(out_dir + "/train_log.ndjson",
             start_epoch > 0 ? std::ios::app : std::ios::trunc);
    if (!log) throw IoError("cannot open " + out_dir + "/train_log.ndjson");
  }

  TrainOutcome out;
  std::vector<int> order(static_cast<size_t>(npairs));
  for (int epoch = start_epoch; epoch < t.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffler = Rng(t.seed).derive("order").derive(static_cast<uint64_t>(epoch));
    shuffler.shuffle(order.begin(), order.end());

    for (int step = 0; step < steps; ++step) {
      const auto t0 = std::chrono::steady_clock::now();
      std::vector<PairSample> pairs;
      pairs.reserve(static_cast<size_t>(t.batch_size));
      for (int i = 0; i < t.batch_size; ++i)
        pairs.push_back(sample_pair(exp.dataset, corpus, t.seed, epoch,
                                    order[static_cast<size_t>(step * t.batch_size + i)]));

      StepRecord rec;
      rec.epoch = epoch;
      rec.step = step;
      rec.d_loss =
          discriminator_step(disc, gen, opt_d, corpus, pairs, t, epoch, step);

      if ((step + 1) % t.d_steps_per_g_step == 0) {
        Rng gp = Rng(t.seed).derive("gpairs").derive(static_cast<uint64_t>(epoch))
                     .derive(static_cast<uint64_t>(step));
        std::vector<PairSample> gpairs;
        gpairs.reserve(static_cast<size_t>(t.batch_size));
        for (int i = 0; i < t.batch_size; ++i)
          gpairs.push_back(same_identity_pair(corpus, gp));
        auto [adv, dist] =
            generator_step(gen, disc, opt_g, corpus, gpairs, t, epoch, step);
        rec.has_g = true;
        rec.g_adv = adv;
        rec.g_distortion = dist;
        rec.g_objective = -adv + t.lambda * dist;
      }

      rec.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t0)
                        .count();

      const bool finite =
          std::isfinite(rec.d_loss) &&
          (!rec.has_g ||
           (std::isfinite(rec.g_adv) && std::isfinite(rec.g_distortion)));
      if (!finite)
        throw TrainingAbortError(
            "non-finite loss at epoch " + std::to_string(epoch) + " step " +
            std::to_string(step) +
            "; the run stopped, the last checkpoint on disk is intact");

      if (log.is_open()) log << step_record_json(rec) << "\n";
      out.records.push_back(rec);
      if (on_step) on_step(rec);
    }
    if (log.is_open()) log.flush();

    if (!out_dir.empty() && t.checkpoint_every > 0 &&
        (epoch + 1) % t.checkpoint_every == 0)
      write_checkpoint(out_dir + "/checkpoint.bin", exp, disc, gen, opt_d,
                       opt_g, epoch + 1);
  }

  if (!out_dir.empty()) {
    write_checkpoint(out_dir + "/checkpoint.bin", exp, disc, gen, opt_d, opt_g,
                     t.epochs);
    ModelParams final_params;
    final_params.config =
        nlohmann::json{{"archive", "model"}, {"experiment", exp}};
    collect_models(disc, gen, final_params);
    out.final_params_path = out_dir + "/params.bin";
    save_params(out.final_params_path, final_params);
  }
  return out;
}

}  // namespace

TrainOutcome train(const DatasetSpec& data, const DiscriminatorConfig& dcfg,
                   const GeneratorConfig& gcfg, const TrainingConfig& tcfg,
                   const std::string& out_dir,
                   const std::function<void(const StepRecord&)>& on_step) {
  ExperimentConfig exp{data, dcfg, gcfg, tcfg};
  exp.validate_or_throw();
  const auto corpus = load_corpus(data);

  Discriminator<float> disc(dcfg);
  Generator<float> gen(gcfg);
  disc.init_params(mix_tag(tcfg.seed, "d_init"));
  gen.init_params(mix_tag(tcfg.seed, "g_init"));
  Adam<float> opt_d(tcfg.lr_d, tcfg.adam_beta1, tcfg.adam_beta2, tcfg.adam_eps);
  Adam<float> opt_g(tcfg.lr_g, tcfg.adam_beta1, tcfg.adam_beta2, tcfg.adam_eps);

  return run_loop(exp, corpus, disc, gen, opt_d, opt_g, 0, out_dir, on_step);
}

TrainOutcome resume_training(const std::string& checkpoint_path,
                             const std::string& out_dir,
                             const std::function<void(const StepRecord&)>& on_step) {
  ModelParams ck = load_params(checkpoint_path);
  if (ck.config.value("archive", "") != "checkpoint")
    throw IncompatibilityError(checkpoint_path +
                               " is a parameter archive, not a checkpoint");
  ExperimentConfig exp = ck.config.at("experiment").get<ExperimentConfig>();
  exp.validate_or_throw();
  const auto& progress = ck.config.at("progress");
  const int done = progress.at("epochs_completed").get<int>();

  const auto corpus = load_corpus(exp.dataset);
  Discriminator<float> disc(exp.discriminator);
  Generator<float> gen(exp.generator);
  restore_models(ck, disc, gen);

  const TrainingConfig& t = exp.training;
  Adam<float> opt_d(t.lr_d, t.adam_beta1, t.adam_beta2, t.adam_eps);
  Adam<float> opt_g(t.lr_g, t.adam_beta1, t.adam_beta2, t.adam_eps);
  restore_adam(ck, disc, opt_d, "opt_d", progress.at("adam_t_d").get<int64_t>());
  restore_adam(ck, gen, opt_g, "opt_g", progress.at("adam_t_g").get<int64_t>());

  return run_loop(exp, corpus, disc, gen, opt_d, opt_g, done, out_dir, on_step);
}

}  // namespace sgap
