#ifndef SGAP_CLI_REPORTING_HPP
#define SGAP_CLI_REPORTING_HPP

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sgap/config_json.hpp"
#include "sgap/privacy_metrics.hpp"
#include "sgap/utility_harness.hpp"

namespace sgap {

// ============================================================================
// Operator surface: single training runs, model evaluation, the lambda sweep
// and its CSV/plot reports. Everything here is a thin, testable library layer;
// the executable in tools/ only parses arguments and forwards.
// ============================================================================

// How a trained model gets evaluated: pair counts for the privacy metrics and
// the projection feeding the mutual-information estimate.
struct EvalConfig {
  int eval_pairs = 1000;  // total; half same-identity, half mixed
  double threshold = 0.5;
  ProjectionMethod projection = ProjectionMethod::kPca3;
  uint64_t seed = 1;

  std::vector<std::string> validate() const {
    std::vector<std::string> v;
    if (eval_pairs < 20 || eval_pairs % 2 != 0)
      v.push_back("eval.eval_pairs: must be even and >= 20");
    if (threshold <= 0.0 || threshold >= 1.0)
      v.push_back("eval.threshold: must be in (0,1)");
    return v;
  }
};

inline void to_json(nlohmann::json& j, const EvalConfig& c) {
  j = nlohmann::json{{"eval_pairs", c.eval_pairs},
                     {"threshold", c.threshold},
                     {"projection", projection_method_name(c.projection)},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, EvalConfig& c) {
  detail::maybe(j, "eval_pairs", c.eval_pairs);
  detail::maybe(j, "threshold", c.threshold);
  if (j.contains("projection"))
    c.projection =
        projection_method_from_name(j.at("projection").get<std::string>());
  detail::maybe(j, "seed", c.seed);
}

// The experiment grid. The training section acts as a template; each cell
// overwrites lambda and seed before running.
struct SweepConfig {
  std::vector<double> lambdas = {10.0, 8.0, 6.0, 4.0, 2.0, 1.0, 0.7};
  std::vector<uint64_t> seeds = {1};
  ExperimentConfig experiment;
  UtilityConfig utility;
  EvalConfig eval;
  std::string output_dir = "sweep_out";

  std::vector<std::string> validate() const {
    std::vector<std::string> v = experiment.validate();
    if (lambdas.empty()) v.push_back("sweep.lambdas: must not be empty");
    for (double l : lambdas)
      if (!(l >= 0.0)) v.push_back("sweep.lambdas: entries must be >= 0");
    if (seeds.empty()) v.push_back("sweep.seeds: must not be empty");
    if (output_dir.empty()) v.push_back("sweep.output_dir: must not be empty");
    auto u = utility.validate();
    v.insert(v.end(), u.begin(), u.end());
    auto e = eval.validate();
    v.insert(v.end(), e.begin(), e.end());
    return v;
  }

  void validate_or_throw() const {
    auto v = validate();
    if (!v.empty()) throw ConfigError(v);
  }
};

inline void to_json(nlohmann::json& j, const SweepConfig& c) {
  j = nlohmann::json{{"lambdas", c.lambdas},
                     {"seeds", c.seeds},
                     {"dataset", c.experiment.dataset},
                     {"discriminator", c.experiment.discriminator},
                     {"generator", c.experiment.generator},
                     {"training", c.experiment.training},
                     {"utility", c.utility},
                     {"eval", c.eval},
                     {"output_dir", c.output_dir}};
}

inline void from_json(const nlohmann::json& j, SweepConfig& c) {
  detail::maybe(j, "lambdas", c.lambdas);
  detail::maybe(j, "seeds", c.seeds);
  from_json(j, c.experiment);
  detail::maybe(j, "utility", c.utility);
  detail::maybe(j, "eval", c.eval);
  detail::maybe(j, "output_dir", c.output_dir);
}

SweepConfig load_sweep_config(const std::string& path);

// Artifact version plus a 16-hex-digit hash of the canonical config dump.
// Two runs share a provenance string exactly when they ran the same code
// generation on the same configuration.
std::string config_provenance(const nlohmann::json& canonical_config);

// Prepends $SGAP_OUTPUT_ROOT to relative output paths when the variable is
// set; absolute paths and unset environments pass through.
std::string resolve_output_dir(const std::string& dir);

// ----------------------------------------------------------------------------
// Sweep rows and their CSV form
// ----------------------------------------------------------------------------

struct SweepRow {
  double lambda = 0.0;
  uint64_t seed = 0;
  double mi_estimate = 0.0;
  double misclassification_rate = 0.0;
  double mean_ssim = 0.0;
  double accuracy_mean = 0.0;
  double accuracy_std = 0.0;
  double baseline_accuracy_mean = 0.0;
  int n_pairs = 0;
  std::string provenance;
  // Not serialized to the CSV; "ok" or "failed: <reason>".
  std::string status = "ok";
};

std::string sweep_csv_header();
std::string sweep_csv_row(const SweepRow& row);
std::vector<SweepRow> parse_sweep_csv(const std::string& text);

// ----------------------------------------------------------------------------
// Model evaluation
// ----------------------------------------------------------------------------

struct ModelEvaluation {
  PrivacyReport privacy;
  UtilityReport utility;
};

// Builds the held-out evaluation pairs, runs them through the models, and
// trains the proxy classifier on the privatized corpus. The baseline (the
// same classifier on passthrough images) is recomputed unless a value is
// supplied, so sweeps can share one baseline run across cells.
ModelEvaluation evaluate_model(Discriminator<float>& disc, Generator<float>& gen,
                               const std::vector<ImageRecord>& corpus,
                               double lambda, const EvalConfig& eval_cfg,
                               const UtilityConfig& utility_cfg,
                               std::optional<double> baseline_accuracy = {});

SweepRow sweep_row_from(const ModelEvaluation& ev, double lambda, uint64_t seed,
                        const std::string& provenance);

// ----------------------------------------------------------------------------
// The sweep
// ----------------------------------------------------------------------------

struct SweepResult {
  std::vector<SweepRow> rows;  // one per (lambda, seed), lambda desc, seed asc
  std::string csv_path;
  std::string provenance;
  int trained = 0;
  int skipped = 0;
  int failed = 0;
};

// Runs every (lambda, seed) cell under output_dir/cells/, evaluating each
// trained model and recording one row. Cells already completed under the same
// provenance are skipped; a failing cell is recorded with its reason and the
// sweep moves on. sweep.csv and both plots are regenerated at the end from
// the completed rows.
SweepResult run_sweep(const SweepConfig& cfg, std::ostream* log = nullptr);

// Plot generation is a pure function of parsed sweep.csv rows: multiple seeds
// per lambda collapse to a mean line with per-seed markers.
std::string svg_privacy_plot(const std::vector<SweepRow>& rows);
std::string svg_accuracy_plot(const std::vector<SweepRow>& rows);

// ----------------------------------------------------------------------------
// Command layer. Streams are injected so tests can capture output. Exit
// codes: 0 success, 1 runtime failure, 2 invalid configuration or usage.
// ----------------------------------------------------------------------------

int cmd_train(const std::string& config_path, const std::string& out_dir,
              std::optional<uint64_t> seed_override, std::ostream& out,
              std::ostream& err);

int cmd_privatize(const std::string& params_path, const std::string& input,
                  const std::string& out_dir, uint64_t seed, std::ostream& out,
                  std::ostream& err);

int cmd_eval(const std::string& params_path,
             const std::string& eval_config_path,
             std::optional<uint64_t> seed_override, std::ostream& out,
             std::ostream& err);

int cmd_sweep(const std::string& config_path,
              const std::optional<std::string>& out_dir_override,
              std::ostream& out, std::ostream& err);

int cmd_report(const std::string& csv_path, const std::string& out_dir,
               std::ostream& out, std::ostream& err);

}  // namespace sgap

#endif  // SGAP_CLI_REPORTING_HPP
