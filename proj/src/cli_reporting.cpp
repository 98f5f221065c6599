#include "sgap/cli_reporting.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "sgap/params_io.hpp"
#include "sgap/ssim.hpp"
#include "sgap/training.hpp"

namespace fs = std::filesystem;

namespace sgap {

namespace {

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void spill(const std::string& path, const std::string& text) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write file: " + path);
  out << text;
  if (!out.good()) throw IoError("cannot write file: " + path);
}

}  // namespace

SweepConfig load_sweep_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  try {
    return j.get<SweepConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
}

std::string config_provenance(const nlohmann::json& canonical_config) {
  const std::string dump = canonical_config.dump();
  const uint64_t h = fnv1a64(dump.data(), dump.size());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(kVersion) + ":" + buf;
}

std::string resolve_output_dir(const std::string& dir) {
  if (dir.empty() || fs::path(dir).is_absolute()) return dir;
  const char* root = std::getenv("SGAP_OUTPUT_ROOT");
  if (root == nullptr || *root == '\0') return dir;
  return (fs::path(root) / dir).string();
}

// ----------------------------------------------------------------------------
// CSV
// ----------------------------------------------------------------------------

std::string sweep_csv_header() {
  return "lambda,seed,mi_estimate,misclassification_rate,mean_ssim,"
         "accuracy_mean,accuracy_std,baseline_accuracy_mean,n_pairs,provenance";
}

std::string sweep_csv_row(const SweepRow& r) {
  std::ostringstream os;
  os << fmt_g(r.lambda) << ',' << r.seed << ',' << fmt_g(r.mi_estimate) << ','
     << fmt_g(r.misclassification_rate) << ',' << fmt_g(r.mean_ssim) << ','
     << fmt_g(r.accuracy_mean) << ',' << fmt_g(r.accuracy_std) << ','
     << fmt_g(r.baseline_accuracy_mean) << ',' << r.n_pairs << ','
     << r.provenance;
  return os.str();
}

std::vector<SweepRow> parse_sweep_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != sweep_csv_header())
    throw IoError("sweep csv: missing or unexpected header line");
  std::vector<SweepRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (fields.size() != 10)
      throw IoError("sweep csv line " + std::to_string(lineno) + ": expected 10 fields, got " +
                    std::to_string(fields.size()));
    auto num = [&](int i) {
      char* end = nullptr;
      const double v = std::strtod(fields[static_cast<size_t>(i)].c_str(), &end);
      if (end == nullptr || *end != '\0')
        throw IoError("sweep csv line " + std::to_string(lineno) +
                      ": field " + std::to_string(i + 1) + " is not a number");
      return v;
    };
    SweepRow r;
    r.lambda = num(0);
    r.seed = static_cast<uint64_t>(std::strtoull(fields[1].c_str(), nullptr, 10));
    r.mi_estimate = num(2);
    r.misclassification_rate = num(3);
    r.mean_ssim = num(4);
    r.accuracy_mean = num(5);
    r.accuracy_std = num(6);
    r.baseline_accuracy_mean = num(7);
    r.n_pairs = static_cast<int>(num(8));
    r.provenance = fields[9];
    rows.push_back(std::move(r));
  }
  return rows;
}

// ----------------------------------------------------------------------------
// Evaluation
// ----------------------------------------------------------------------------

ModelEvaluation evaluate_model(Discriminator<float>& disc, Generator<float>& gen,
                               const std::vector<ImageRecord>& corpus,
                               double lambda, const EvalConfig& eval_cfg,
                               const UtilityConfig& utility_cfg,
                               std::optional<double> baseline_accuracy) {
  {
    auto v = eval_cfg.validate();
    auto u = utility_cfg.validate();
    v.insert(v.end(), u.begin(), u.end());
    if (!v.empty()) throw ConfigError(v);
  }

  const int half = eval_cfg.eval_pairs / 2;
  auto pairs = build_same_identity_eval_pairs(corpus, half, eval_cfg.seed);
  {
    auto mixed = build_mixed_eval_pairs(corpus, half, eval_cfg.seed);
    pairs.insert(pairs.end(), mixed.begin(), mixed.end());
  }
  auto ev = evaluate_pairs(disc, gen, corpus, pairs, eval_cfg.seed);

  PrivacyReport pr;
  pr.lambda = lambda;
  pr.seed = eval_cfg.seed;
  pr.n_pairs = static_cast<int>(ev.size());

  // Misclassification counts same-identity pairs the verifier now rejects.
  std::vector<double> same_sims;
  for (int i = 0; i < half; ++i)
    same_sims.push_back(ev[static_cast<size_t>(i)].similarity);
  pr.misclassification = misclassification_rate(same_sims, eval_cfg.threshold);

  double ssim_sum = 0.0;
  for (const auto& e : ev) ssim_sum += e.ssim_to_source;
  pr.mean_ssim = ssim_sum / static_cast<double>(ev.size());

  // Mutual information lives on the label-balanced half of the pair set, so
  // the label prior is the protocol's 50/50.
  std::vector<EvaluatedPair> mixed_ev(ev.begin() + half, ev.end());
  std::vector<int> labels;
  for (const auto& e : mixed_ev) labels.push_back(e.label);
  const TensorD scores =
      project_pairs(mixed_ev, corpus, eval_cfg.projection, eval_cfg.seed);
  pr.mi_estimate = empirical_mi(make_sample_set(scores, labels, eval_cfg.seed));

  auto privatized = privatize_corpus(&gen, corpus, eval_cfg.seed);
  UtilityReport ur = proxy_accuracy(privatized, utility_cfg);
  ur.lambda = lambda;
  ur.baseline_accuracy_mean =
      baseline_accuracy
          ? *baseline_accuracy
          : proxy_accuracy(privatize_corpus(nullptr, corpus, eval_cfg.seed),
                           utility_cfg)
                .accuracy_mean;
  return {pr, ur};
}

SweepRow sweep_row_from(const ModelEvaluation& ev, double lambda, uint64_t seed,
                        const std::string& provenance) {
  SweepRow r;
  r.lambda = lambda;
  r.seed = seed;
  r.mi_estimate = ev.privacy.mi_estimate;
  r.misclassification_rate = ev.privacy.misclassification;
  r.mean_ssim = ev.privacy.mean_ssim;
  r.accuracy_mean = ev.utility.accuracy_mean;
  r.accuracy_std = ev.utility.accuracy_std;
  r.baseline_accuracy_mean = ev.utility.baseline_accuracy_mean;
  r.n_pairs = ev.privacy.n_pairs;
  r.provenance = provenance;
  return r;
}

// ----------------------------------------------------------------------------
// Sweep
// ----------------------------------------------------------------------------

namespace {

std::string cell_name(double lambda, uint64_t seed) {
  return "lam" + fmt_g(lambda) + "_seed" + std::to_string(seed);
}

nlohmann::json row_to_json(const SweepRow& r) {
  return nlohmann::json{{"lambda", r.lambda},
                        {"seed", r.seed},
                        {"mi_estimate", r.mi_estimate},
                        {"misclassification_rate", r.misclassification_rate},
                        {"mean_ssim", r.mean_ssim},
                        {"accuracy_mean", r.accuracy_mean},
                        {"accuracy_std", r.accuracy_std},
                        {"baseline_accuracy_mean", r.baseline_accuracy_mean},
                        {"n_pairs", r.n_pairs},
                        {"provenance", r.provenance}};
}

SweepRow row_from_json(const nlohmann::json& j) {
  SweepRow r;
  r.lambda = j.at("lambda").get<double>();
  r.seed = j.at("seed").get<uint64_t>();
  r.mi_estimate = j.at("mi_estimate").get<double>();
  r.misclassification_rate = j.at("misclassification_rate").get<double>();
  r.mean_ssim = j.at("mean_ssim").get<double>();
  r.accuracy_mean = j.at("accuracy_mean").get<double>();
  r.accuracy_std = j.at("accuracy_std").get<double>();
  r.baseline_accuracy_mean = j.at("baseline_accuracy_mean").get<double>();
  r.n_pairs = j.at("n_pairs").get<int>();
  r.provenance = j.at("provenance").get<std::string>();
  return r;
}

void sort_rows(std::vector<SweepRow>& rows) {
  std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    if (a.lambda != b.lambda) return a.lambda > b.lambda;
    return a.seed < b.seed;
  });
}

}  // namespace

SweepResult run_sweep(const SweepConfig& cfg, std::ostream* log) {
  cfg.validate_or_throw();
  const fs::path root = resolve_output_dir(cfg.output_dir);
  fs::create_directories(root / "cells");

  // The output location does not change what was computed, so it stays out
  // of the provenance hash and out of resume decisions.
  nlohmann::json canonical = cfg;
  canonical.erase("output_dir");
  const std::string prov = config_provenance(canonical);

  const auto corpus = load_corpus(cfg.experiment.dataset);
  std::optional<double> baseline;

  SweepResult result;
  result.provenance = prov;

  for (double lambda : cfg.lambdas) {
    for (uint64_t seed : cfg.seeds) {
      const std::string name = cell_name(lambda, seed);
      const fs::path cell = root / "cells" / name;
      const fs::path row_path = cell / "row.json";

      if (fs::exists(row_path)) {
        bool reused = false;
        try {
          SweepRow r = row_from_json(nlohmann::json::parse(slurp(row_path.string())));
          if (r.provenance == prov) {
            result.rows.push_back(std::move(r));
            ++result.skipped;
            reused = true;
            if (log) *log << name << ": already complete, skipping\n";
          } else if (log) {
            *log << name << ": stale provenance, retraining\n";
          }
        } catch (const std::exception&) {
          if (log) *log << name << ": unreadable row record, retraining\n";
        }
        if (reused) continue;
      }

      try {
        ExperimentConfig exp = cfg.experiment;
        exp.training.lambda = lambda;
        exp.training.seed = seed;
        if (log) *log << name << ": training " << exp.training.epochs << " epochs\n";
        const TrainOutcome trained =
            train(exp.dataset, exp.discriminator, exp.generator, exp.training,
                  cell.string());

        const ModelParams mp = load_params(trained.final_params_path);
        Discriminator<float> disc(exp.discriminator);
        Generator<float> gen(exp.generator);
        restore_models(mp, disc, gen);

        if (!baseline)
          baseline = proxy_accuracy(
                         privatize_corpus(nullptr, corpus, cfg.eval.seed),
                         cfg.utility)
                         .accuracy_mean;

        const ModelEvaluation ev = evaluate_model(
            disc, gen, corpus, lambda, cfg.eval, cfg.utility, baseline);
        SweepRow row = sweep_row_from(ev, lambda, seed, prov);
        spill(row_path.string(), row_to_json(row).dump(2) + "\n");
        fs::remove(cell / "failed.json");
        result.rows.push_back(std::move(row));
        ++result.trained;
        if (log)
          *log << name << ": done (misclassification "
               << fmt_g(result.rows.back().misclassification_rate)
               << ", accuracy " << fmt_g(result.rows.back().accuracy_mean)
               << ")\n";
      } catch (const std::exception& e) {
        SweepRow row;
        row.lambda = lambda;
        row.seed = seed;
        row.provenance = prov;
        row.status = std::string("failed: ") + e.what();
        try {
          spill((cell / "failed.json").string(),
                nlohmann::json{{"lambda", lambda},
                               {"seed", seed},
                               {"error", e.what()}}
                        .dump(2) +
                    "\n");
        } catch (const std::exception&) {
        }
        result.rows.push_back(std::move(row));
        ++result.failed;
        if (log) *log << name << ": FAILED: " << e.what() << "\n";
      }
    }
  }

  sort_rows(result.rows);

  std::ostringstream csv;
  csv << sweep_csv_header() << "\n";
  for (const auto& r : result.rows)
    if (r.status == "ok") csv << sweep_csv_row(r) << "\n";
  result.csv_path = (root / "sweep.csv").string();
  spill(result.csv_path, csv.str());

  // Plots are regenerated from the file just written, never from in-memory
  // state, so report generation stays a pure function of sweep.csv.
  const auto parsed = parse_sweep_csv(slurp(result.csv_path));
  spill((root / "privacy_vs_lambda.svg").string(), svg_privacy_plot(parsed));
  spill((root / "accuracy_vs_lambda.svg").string(), svg_accuracy_plot(parsed));
  return result;
}

// ----------------------------------------------------------------------------
// Plots
// ----------------------------------------------------------------------------

namespace {

struct Axis {
  double lo = 0.0, hi = 1.0;
  double px0 = 0.0, px1 = 1.0;
  double map(double v) const {
    const double t = (v - lo) / (hi - lo);
    return px0 + t * (px1 - px0);
  }
};

// Per-lambda mean of one measure plus the individual seed values.
struct SeriesPoint {
  double lambda = 0.0;
  double mean = 0.0;
  std::vector<double> values;
};

std::vector<SeriesPoint> collapse(const std::vector<SweepRow>& rows,
                                  double SweepRow::* field) {
  std::map<double, std::vector<double>> by_lambda;
  for (const auto& r : rows) by_lambda[r.lambda].push_back(r.*field);
  std::vector<SeriesPoint> out;
  for (const auto& [lambda, values] : by_lambda) {
    SeriesPoint p;
    p.lambda = lambda;
    p.values = values;
    for (double v : values) p.mean += v;
    p.mean /= static_cast<double>(values.size());
    out.push_back(std::move(p));
  }
  return out;
}

void polyline(std::ostringstream& os, const Axis& x, const Axis& y,
              const std::vector<SeriesPoint>& pts, const char* color,
              bool dashed = false) {
  os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"";
  if (dashed) os << " stroke-dasharray=\"6 4\"";
  os << " points=\"";
  for (const auto& p : pts)
    os << fmt_g(x.map(p.lambda)) << ',' << fmt_g(y.map(p.mean)) << ' ';
  os << "\"/>\n";
  for (const auto& p : pts)
    for (double v : p.values)
      os << "<circle cx=\"" << fmt_g(x.map(p.lambda)) << "\" cy=\""
         << fmt_g(y.map(v)) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
}

void frame(std::ostringstream& os, const Axis& x, const Axis& y,
           const std::string& title, const std::string& ylab,
           int yticks = 5) {
  os << "<rect x=\"" << fmt_g(x.px0) << "\" y=\"" << fmt_g(y.px1)
     << "\" width=\"" << fmt_g(x.px1 - x.px0) << "\" height=\""
     << fmt_g(y.px0 - y.px1)
     << "\" fill=\"white\" stroke=\"#444\" stroke-width=\"1\"/>\n";
  os << "<text x=\"" << fmt_g((x.px0 + x.px1) / 2) << "\" y=\"22\" "
     << "text-anchor=\"middle\" font-size=\"15\" font-family=\"sans-serif\">"
     << title << "</text>\n";
  os << "<text x=\"" << fmt_g((x.px0 + x.px1) / 2) << "\" y=\""
     << fmt_g(y.px0 + 36)
     << "\" text-anchor=\"middle\" font-size=\"12\" "
        "font-family=\"sans-serif\">distortion weight</text>\n";
  os << "<text x=\"14\" y=\"" << fmt_g((y.px0 + y.px1) / 2)
     << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\""
     << " transform=\"rotate(-90 14 " << fmt_g((y.px0 + y.px1) / 2) << ")\">"
     << ylab << "</text>\n";
  for (int i = 0; i <= yticks; ++i) {
    const double v = y.lo + (y.hi - y.lo) * i / yticks;
    const double py = y.map(v);
    os << "<line x1=\"" << fmt_g(x.px0 - 4) << "\" y1=\"" << fmt_g(py)
       << "\" x2=\"" << fmt_g(x.px0) << "\" y2=\"" << fmt_g(py)
       << "\" stroke=\"#444\"/>\n";
    os << "<text x=\"" << fmt_g(x.px0 - 8) << "\" y=\"" << fmt_g(py + 4)
       << "\" text-anchor=\"end\" font-size=\"11\" "
          "font-family=\"sans-serif\">"
       << fmt_g(v) << "</text>\n";
  }
}

void x_ticks(std::ostringstream& os, const Axis& x, const Axis& y,
             const std::vector<double>& lambdas) {
  for (double l : lambdas) {
    const double px = x.map(l);
    os << "<line x1=\"" << fmt_g(px) << "\" y1=\"" << fmt_g(y.px0)
       << "\" x2=\"" << fmt_g(px) << "\" y2=\"" << fmt_g(y.px0 + 4)
       << "\" stroke=\"#444\"/>\n";
    os << "<text x=\"" << fmt_g(px) << "\" y=\"" << fmt_g(y.px0 + 18)
       << "\" text-anchor=\"middle\" font-size=\"11\" "
          "font-family=\"sans-serif\">"
       << fmt_g(l) << "</text>\n";
  }
}

void legend(std::ostringstream& os, double px, double py,
            const std::vector<std::pair<const char*, const char*>>& entries) {
  double yy = py;
  for (const auto& [color, label] : entries) {
    os << "<line x1=\"" << fmt_g(px) << "\" y1=\"" << fmt_g(yy) << "\" x2=\""
       << fmt_g(px + 24) << "\" y2=\"" << fmt_g(yy) << "\" stroke=\"" << color
       << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << fmt_g(px + 30) << "\" y=\"" << fmt_g(yy + 4)
       << "\" font-size=\"11\" font-family=\"sans-serif\">" << label
       << "</text>\n";
    yy += 16;
  }
}

std::vector<double> lambda_grid(const std::vector<SweepRow>& rows) {
  std::vector<double> ls;
  for (const auto& r : rows) ls.push_back(r.lambda);
  std::sort(ls.begin(), ls.end());
  ls.erase(std::unique(ls.begin(), ls.end()), ls.end());
  return ls;
}

Axis x_axis(const std::vector<double>& lambdas) {
  Axis x;
  x.lo = lambdas.front();
  x.hi = lambdas.back();
  if (x.lo == x.hi) {
    x.lo -= 0.5;
    x.hi += 0.5;
  }
  const double pad = 0.04 * (x.hi - x.lo);
  x.lo -= pad;
  x.hi += pad;
  x.px0 = 70;
  x.px1 = 600;
  return x;
}

constexpr const char* kSvgOpen =
    "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"420\" "
    "viewBox=\"0 0 640 420\">\n<rect width=\"640\" height=\"420\" "
    "fill=\"white\"/>\n";

}  // namespace

std::string svg_privacy_plot(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << kSvgOpen;
  if (rows.empty()) {
    os << "<text x=\"320\" y=\"210\" text-anchor=\"middle\" font-size=\"14\" "
          "font-family=\"sans-serif\">no completed sweep cells</text>\n</svg>\n";
    return os.str();
  }
  const auto lambdas = lambda_grid(rows);
  Axis x = x_axis(lambdas);
  const auto mi = collapse(rows, &SweepRow::mi_estimate);
  const auto mis = collapse(rows, &SweepRow::misclassification_rate);
  double mi_hi = 0.05;
  for (const auto& p : mi)
    for (double v : p.values) mi_hi = std::max(mi_hi, v);
  Axis y;
  y.lo = 0.0;
  y.hi = std::max(1.0, mi_hi * 1.1);
  y.px0 = 360;
  y.px1 = 50;
  frame(os, x, y, "privacy against the identity verifier", "nats / rate");
  x_ticks(os, x, y, lambdas);
  polyline(os, x, y, mi, "#1565c0");
  polyline(os, x, y, mis, "#c62828");
  legend(os, 90, 66,
         {{"#1565c0", "mutual information estimate (nats)"},
          {"#c62828", "misclassification rate"}});
  os << "</svg>\n";
  return os.str();
}

std::string svg_accuracy_plot(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << kSvgOpen;
  if (rows.empty()) {
    os << "<text x=\"320\" y=\"210\" text-anchor=\"middle\" font-size=\"14\" "
          "font-family=\"sans-serif\">no completed sweep cells</text>\n</svg>\n";
    return os.str();
  }
  const auto lambdas = lambda_grid(rows);
  Axis x = x_axis(lambdas);
  Axis y;
  y.lo = 0.0;
  y.hi = 1.0;
  y.px0 = 360;
  y.px1 = 50;
  frame(os, x, y, "proxy-task utility after privatization", "accuracy");
  x_ticks(os, x, y, lambdas);
  const auto acc = collapse(rows, &SweepRow::accuracy_mean);
  const auto base = collapse(rows, &SweepRow::baseline_accuracy_mean);
  polyline(os, x, y, base, "#6a1b9a", true);
  polyline(os, x, y, acc, "#2e7d32");
  const auto ssim = collapse(rows, &SweepRow::mean_ssim);
  polyline(os, x, y, ssim, "#ef6c00");
  legend(os, 90, 66,
         {{"#2e7d32", "attribute accuracy (privatized)"},
          {"#6a1b9a", "attribute accuracy (originals)"},
          {"#ef6c00", "mean structural similarity"}});
  os << "</svg>\n";
  return os.str();
}

// ----------------------------------------------------------------------------
// Commands
// ----------------------------------------------------------------------------

namespace {

int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

// Rebuilds the model pair recorded in a parameter archive.
struct LoadedModel {
  ExperimentConfig config;
  std::unique_ptr<Discriminator<float>> disc;
  std::unique_ptr<Generator<float>> gen;
};

LoadedModel load_model(const std::string& params_path) {
  LoadedModel m;
  const ModelParams mp = load_params(params_path);
  if (!mp.config.contains("experiment"))
    throw IntegrityError("archive " + params_path +
                         " carries no experiment config");
  m.config = mp.config.at("experiment").get<ExperimentConfig>();
  m.config.validate_or_throw();
  m.disc = std::make_unique<Discriminator<float>>(m.config.discriminator);
  m.gen = std::make_unique<Generator<float>>(m.config.generator);
  restore_models(mp, *m.disc, *m.gen);
  return m;
}

}  // namespace

int cmd_train(const std::string& config_path, const std::string& out_dir,
              std::optional<uint64_t> seed_override, std::ostream& out,
              std::ostream& err) {
  ExperimentConfig cfg;
  try {
    cfg = load_experiment_config(config_path);
    if (seed_override) cfg.training.seed = *seed_override;
    cfg.validate_or_throw();
  } catch (const IoError& e) {
    err << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    err << e.what() << "\n";
    return 2;
  }
  const std::string dir = resolve_output_dir(out_dir);
  return guarded(err, [&]() {
    try {
      const TrainOutcome outcome = train(cfg.dataset, cfg.discriminator,
                                         cfg.generator, cfg.training, dir);
      out << outcome.final_params_path << "\n";
      return 0;
    } catch (const TrainingAbortError& e) {
      err << "training aborted: " << e.what() << "\n";
      err << "step log: " << (fs::path(dir) / "train_log.ndjson").string()
          << "\n";
      return 1;
    }
  });
}

int cmd_privatize(const std::string& params_path, const std::string& input,
                  const std::string& out_dir, uint64_t seed, std::ostream& out,
                  std::ostream& err) {
  return guarded(err, [&]() {
    LoadedModel model = load_model(params_path);
    DatasetSpec spec = model.config.dataset;
    if (input != "synthetic") {
      if (spec.kind == DatasetKind::kSynthetic)
        throw ConfigError(
            "the archive was trained on the synthetic corpus; pass "
            "\"synthetic\" as the input");
      spec.root = input;
    }
    const auto corpus = load_corpus(spec);
    const auto privatized = privatize_corpus(model.gen.get(), corpus, seed);

    const fs::path root = resolve_output_dir(out_dir);
    std::ostringstream manifest;
    manifest << "filename,identity_id,attribute_id,ssim\n";
    int written = 0;
    for (size_t i = 0; i < corpus.size(); ++i) {
      const fs::path orig_path = root / "originals" / corpus[i].path;
      const fs::path priv_path = root / "privatized" / corpus[i].path;
      write_image_png(orig_path.string(), corpus[i].image);
      write_image_png(priv_path.string(), privatized[i].image);
      // The manifest number describes the files as written, so it is
      // computed from what a reader of those files will see.
      const TensorF orig_back = read_image_png(
          orig_path.string(), spec.image_size, spec.channels);
      const TensorF priv_back = read_image_png(
          priv_path.string(), spec.image_size, spec.channels);
      manifest << corpus[i].path << ',' << corpus[i].identity << ','
               << corpus[i].attribute << ',' << fmt_g(ssim(orig_back, priv_back))
               << "\n";
      ++written;
    }
    spill((root / "manifest.csv").string(), manifest.str());
    out << written << "\n";
    return 0;
  });
}

int cmd_eval(const std::string& params_path,
             const std::string& eval_config_path,
             std::optional<uint64_t> seed_override, std::ostream& out,
             std::ostream& err) {
  EvalConfig eval_cfg;
  UtilityConfig utility_cfg;
  try {
    if (!eval_config_path.empty()) {
      std::ifstream in(eval_config_path, std::ios::binary);
      if (!in) throw IoError("cannot read config file: " + eval_config_path);
      nlohmann::json j;
      try {
        in >> j;
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file " + eval_config_path +
                          " is not valid JSON: " + e.what());
      }
      if (j.contains("eval")) j.at("eval").get_to(eval_cfg);
      if (j.contains("utility")) j.at("utility").get_to(utility_cfg);
    }
    if (seed_override) {
      eval_cfg.seed = *seed_override;
      utility_cfg.seed = *seed_override;
    }
    auto v = eval_cfg.validate();
    auto u = utility_cfg.validate();
    v.insert(v.end(), u.begin(), u.end());
    if (!v.empty()) throw ConfigError(v);
  } catch (const IoError& e) {
    err << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    err << e.what() << "\n";
    return 2;
  }

  return guarded(err, [&]() {
    LoadedModel model = load_model(params_path);
    const auto corpus = load_corpus(model.config.dataset);
    const double lambda = model.config.training.lambda;
    const ModelEvaluation ev = evaluate_model(*model.disc, *model.gen, corpus,
                                              lambda, eval_cfg, utility_cfg);
    nlohmann::json doc{{"experiment", model.config},
                       {"eval", eval_cfg},
                       {"utility", utility_cfg}};
    const SweepRow row =
        sweep_row_from(ev, lambda, eval_cfg.seed, config_provenance(doc));

    out << sweep_csv_header() << "\n" << sweep_csv_row(row) << "\n";
    out << "privacy: mutual information " << fmt_g(row.mi_estimate)
        << " nats, misclassification " << fmt_g(row.misclassification_rate)
        << ", mean structural similarity " << fmt_g(row.mean_ssim) << " over "
        << row.n_pairs << " pairs\n";
    out << "utility: attribute accuracy " << fmt_g(row.accuracy_mean)
        << " +/- " << fmt_g(row.accuracy_std) << " against baseline "
        << fmt_g(row.baseline_accuracy_mean) << "\n";
    return 0;
  });
}

int cmd_sweep(const std::string& config_path,
              const std::optional<std::string>& out_dir_override,
              std::ostream& out, std::ostream& err) {
  SweepConfig cfg;
  try {
    cfg = load_sweep_config(config_path);
    if (out_dir_override) cfg.output_dir = *out_dir_override;
    cfg.validate_or_throw();
  } catch (const IoError& e) {
    err << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    err << e.what() << "\n";
    return 2;
  }
  return guarded(err, [&]() {
    const SweepResult result = run_sweep(cfg, &out);
    out << "sweep finished: " << result.trained << " trained, "
        << result.skipped << " reused, " << result.failed << " failed\n";
    out << result.csv_path << "\n";
    return result.failed == 0 ? 0 : 1;
  });
}

int cmd_report(const std::string& csv_path, const std::string& out_dir,
               std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() {
    const auto rows = parse_sweep_csv(slurp(csv_path));
    const fs::path root = resolve_output_dir(out_dir);
    const auto privacy = (root / "privacy_vs_lambda.svg").string();
    const auto accuracy = (root / "accuracy_vs_lambda.svg").string();
    spill(privacy, svg_privacy_plot(rows));
    spill(accuracy, svg_accuracy_plot(rows));
    out << privacy << "\n" << accuracy << "\n";
    return 0;
  });
}

}  // namespace sgap
