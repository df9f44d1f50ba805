#include "sween/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "sween/datasets.hpp"
#include "sween/ensemble.hpp"
#include "sween/error.hpp"
#include "sween/io_util.hpp"
#include "sween/metrics.hpp"
#include "sween/models.hpp"
#include "sween/parallel.hpp"
#include "sween/smoothing.hpp"

namespace sween::cli {

namespace fs = std::filesystem;

namespace {

struct GlobalOptions {
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::string out;
};

struct GenDataOptions {
  std::string kind;
  std::size_t dim = 2;
  std::size_t classes = 2;
  std::size_t n = 1000;
  double separation = 4.0;
  double std_dev = 0.5;
  std::vector<double> radii = {1.0, 3.0};
  double noise = 0.1;
  std::string name = "data";
  std::vector<double> split;
};

struct TrainOptions {
  std::string data;
  std::string eval;
  std::vector<std::size_t> arch;
  TrainConfig cfg;
};

struct SolveOptions {
  std::vector<std::string> models;
  std::string data;
  double sigma = 0.0;
  std::string mode = "erm";
  SolveConfig cfg;
};

struct CertifyOptions {
  std::string weights;
  std::string model;
  std::string data;
  double sigma = 0.0;
  CertifyParams params;
  double diameter = 0.0;
  std::size_t max_points = 0;
  bool adaptive = false;
  AdaptiveConfig adaptive_cfg;
  std::string svg;
  std::string name;
};

struct ReportOptions {
  std::vector<std::string> inputs;
  std::vector<std::string> names;
};

void require_file(const std::string& path) {
  if (!fs::exists(path)) fail(ErrorKind::kIo, "input file '" + path + "' does not exist");
}

void require_distinct(const fs::path& output, const std::vector<std::string>& inputs) {
  for (const auto& in : inputs) {
    std::error_code ec;
    if (fs::exists(in) && fs::exists(output) && fs::equivalent(in, output, ec)) {
      fail(ErrorKind::kInvalidParameter,
           "output path '" + output.string() + "' is also an input");
    }
  }
}

std::string join(const std::vector<double>& v, int precision) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision);
  for (std::size_t i = 0; i < v.size(); ++i) s << (i ? "," : "") << v[i];
  return s.str();
}

int cmd_gen_data(const GlobalOptions& g, const GenDataOptions& o, std::ostream& out) {
  Dataset data;
  if (o.kind == "mixture") {
    data = gen_gaussian_mixture(o.dim, o.classes, o.n, o.separation, o.std_dev, g.seed);
  } else if (o.kind == "rings") {
    data = gen_rings(o.n, o.radii, o.noise, g.seed);
  } else {
    fail(ErrorKind::kInvalidParameter,
         "unknown dataset kind '" + o.kind + "' (expected mixture or rings)");
  }
  if (!o.split.empty() && o.split.size() != 3) {
    fail(ErrorKind::kInvalidParameter, "--split takes three fractions");
  }
  const fs::path dir = g.out.empty() ? fs::path(".") : fs::path(g.out);
  const fs::path main_csv = dir / (o.name + ".csv");
  save_dataset(data, main_csv);
  out << "wrote " << main_csv.string() << " (" << data.size() << " points, diameter "
      << data.diameter << ")\n";
  if (!o.split.empty()) {
    const auto parts = split(data, {o.split[0], o.split[1], o.split[2]}, g.seed);
    const std::pair<const char*, const Dataset*> named[] = {
        {"train", &parts.train}, {"weight_eval", &parts.weight_eval}, {"test", &parts.test}};
    for (const auto& [suffix, part] : named) {
      const fs::path p = dir / (o.name + "_" + suffix + ".csv");
      save_dataset(*part, p);
      out << "wrote " << p.string() << " (" << part->size() << " points)\n";
    }
  }
  return kOk;
}

int cmd_train(const GlobalOptions& g, TrainOptions o, std::ostream& out) {
  require_file(o.data);
  if (g.out.empty()) fail(ErrorKind::kInvalidParameter, "train: --out model path required");
  require_distinct(g.out, {o.data, o.eval});
  if (o.cfg.epochs < 1) fail(ErrorKind::kInvalidParameter, "--epochs must be >= 1");
  const Dataset train = load_dataset(o.data);
  o.cfg.seed = g.seed;
  std::vector<double> history;
  const MlpParams model = train_gaussian_aug(train, o.arch, o.cfg, &history);
  save_model(model, g.out);
  double accuracy = 0.0;
  if (!o.eval.empty()) {
    require_file(o.eval);
    accuracy = clean_accuracy(model, load_dataset(o.eval));
  } else {
    accuracy = clean_accuracy(model, train);
  }
  out << std::setprecision(6) << std::fixed;
  out << "final_train_loss " << history.back() << "\n";
  out << "clean_accuracy " << accuracy << "\n";
  return kOk;
}

int cmd_solve_weights(const GlobalOptions& g, SolveOptions o, std::ostream& out) {
  if (o.models.empty()) fail(ErrorKind::kInvalidParameter, "solve-weights: need --models");
  for (const auto& m : o.models) require_file(m);
  require_file(o.data);
  if (g.out.empty()) fail(ErrorKind::kInvalidParameter, "solve-weights: --out path required");
  auto inputs = o.models;
  inputs.push_back(o.data);
  require_distinct(g.out, inputs);
  if (o.mode == "erm") {
    o.cfg.mode = SolveMode::kErm;
  } else if (o.mode == "streaming") {
    o.cfg.mode = SolveMode::kStreaming;
  } else {
    fail(ErrorKind::kInvalidParameter, "unknown --mode '" + o.mode + "'");
  }
  o.cfg.seed = g.seed;

  std::vector<MlpParams> candidates;
  for (const auto& m : o.models) candidates.push_back(load_model(m));
  const Dataset eval = load_dataset(o.data);
  const EnsembleWeights w = solve_weights(candidates, eval, o.sigma, o.cfg);
  const double risk = empirical_risk(candidates, w, eval, o.sigma,
                                     std::max<std::uint64_t>(o.cfg.samples, 1), g.seed);

  // Candidate paths are stored relative to the weights file when possible.
  WeightsFile file;
  file.sigma = o.sigma;
  file.weights = w.w;
  const fs::path out_dir = fs::absolute(fs::path(g.out)).parent_path();
  for (const auto& m : o.models) {
    file.candidates.push_back(fs::absolute(m).lexically_relative(out_dir).string());
  }
  save_weights_file(file, g.out);

  double total = 0.0;
  for (double v : w.w) total += v;
  out << "weights " << join(w.w, 6) << "\n";
  out << std::fixed << std::setprecision(6) << "sum " << total << "\n";
  out << "empirical_risk " << risk << "\n";
  return kOk;
}

int cmd_certify(const GlobalOptions& g, CertifyOptions o, std::ostream& out) {
  if (o.weights.empty() == o.model.empty()) {
    fail(ErrorKind::kInvalidParameter, "certify: give exactly one of --weights or --model");
  }
  if (o.params.n < 1 || o.params.n0 < 1) {
    fail(ErrorKind::kInvalidParameter, "certify: --n and --n0 must be >= 1");
  }
  if (!(o.params.alpha > 0.0 && o.params.alpha < 1.0)) {
    fail(ErrorKind::kInvalidParameter, "certify: --alpha must lie in (0, 1)");
  }
  require_file(o.data);
  const std::string source = o.weights.empty() ? o.model : o.weights;
  require_file(source);
  if (g.out.empty()) fail(ErrorKind::kInvalidParameter, "certify: --out directory required");

  SweenModel model;
  if (!o.weights.empty()) {
    model = load_sween_model(o.weights);
    if (o.sigma > 0.0) model.sigma = o.sigma;
  } else {
    if (!(o.sigma > 0.0)) fail(ErrorKind::kInvalidParameter, "certify: --sigma required with --model");
    model.candidates.push_back(load_model(o.model));
    model.weights = {{1.0}};
    model.sigma = o.sigma;
  }
  validate(model);
  const Dataset test = load_dataset(o.data);
  if (test.dim != model.input_dim()) {
    fail(ErrorKind::kDimensionMismatch, "certify: dataset dim does not match the model");
  }
  o.params.sigma = model.sigma;
  o.params.diameter = o.diameter > 0.0 ? o.diameter : test.diameter;

  const std::size_t count =
      o.max_points > 0 ? std::min(o.max_points, test.size()) : test.size();
  std::vector<PointOutcome> outcomes(count);
  const ProbabilityFunction full = ensemble_function(model.candidates, model.weights);
  parallel_for(count, g.jobs, [&](std::size_t i) {
    const auto& p = test.points[i];
    const NoiseStreamKey key{g.seed, static_cast<std::uint32_t>(i), 0, 0};
    const CertificationResult r =
        o.adaptive ? adaptive_certify(model, p.features, o.adaptive_cfg, o.params, key).result
                   : certify(full, p.features, o.params, key);
    outcomes[i] = make_outcome(i, p.label, r);
  });

  const RobustnessReport report = radius_accuracy_curve(
      outcomes, default_radius_grid(),
      {o.params.sigma, o.params.n0, o.params.n, o.params.alpha});
  const fs::path dir(g.out);
  io::write_file(dir / "outcomes.csv", outcomes_csv(outcomes));
  io::write_file(dir / "report.csv", report_csv(report));
  if (!o.svg.empty()) {
    const NamedReport curve{o.name.empty() ? fs::path(source).stem().string() : o.name, report};
    io::write_file(o.svg, radius_accuracy_svg(std::span(&curve, 1)));
  }
  out << std::fixed << std::setprecision(6);
  out << "points " << count << "\n";
  out << "aca " << join(report.aca, 4) << "\n";
  out << "acr " << report.acr << "\n";
  out << "mean_evals " << mean_evals(outcomes) << "\n";
  return kOk;
}

int cmd_report(const GlobalOptions& g, const ReportOptions& o, std::ostream& out) {
  if (o.inputs.empty()) fail(ErrorKind::kInvalidParameter, "report: need --inputs");
  if (!o.names.empty() && o.names.size() != o.inputs.size()) {
    fail(ErrorKind::kInvalidParameter, "report: --names must match --inputs");
  }
  std::vector<NamedReport> rows;
  for (std::size_t i = 0; i < o.inputs.size(); ++i) {
    require_file(o.inputs[i]);
    const std::string name = o.names.empty()
                                 ? fs::path(o.inputs[i]).parent_path().filename().string() +
                                       "/" + fs::path(o.inputs[i]).stem().string()
                                 : o.names[i];
    rows.push_back({name, parse_report_csv(io::read_file(o.inputs[i]))});
  }
  const std::string table = comparison_csv(rows);
  if (g.out.empty()) {
    out << table;
  } else {
    require_distinct(g.out, o.inputs);
    io::write_file(g.out, table);
    out << "wrote " << g.out << "\n";
  }
  return kOk;
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kIo:
    case ErrorKind::kFormat:
      return kIoFailure;
    case ErrorKind::kNumericFailure:
      return kNumericFailure;
    default:
      return kUsage;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Randomized-smoothing certification with smoothed weighted ensembles"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions global;
  app.add_option("--seed", global.seed, "Global random seed");
  app.add_option("--jobs", global.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", global.out, "Output file or directory");

  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen_cmd->add_option("--kind", gen.kind, "mixture | rings")->required();
  gen_cmd->add_option("--dim", gen.dim, "Feature dimension (mixture)");
  gen_cmd->add_option("--classes", gen.classes, "Number of classes (mixture)");
  gen_cmd->add_option("--n", gen.n, "Number of points");
  gen_cmd->add_option("--separation", gen.separation, "Center spacing (mixture)");
  gen_cmd->add_option("--std", gen.std_dev, "Cluster std (mixture)");
  gen_cmd->add_option("--radii", gen.radii, "Ring radii (rings)")->delimiter(',');
  gen_cmd->add_option("--noise", gen.noise, "Ring noise std (rings)");
  gen_cmd->add_option("--name", gen.name, "File stem");
  gen_cmd->add_option("--split", gen.split,
                      "Also write train/weight_eval/test parts, e.g. 0.7,0.1,0.2")
      ->delimiter(',');

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Train a candidate under Gaussian augmentation");
  train_cmd->add_option("--data", train.data, "Training CSV")->required();
  train_cmd->add_option("--eval", train.eval, "Held-out CSV for clean accuracy");
  train_cmd->add_option("--arch", train.arch, "Layer sizes, e.g. 2,32,32,4")
      ->delimiter(',')
      ->required();
  train_cmd->add_option("--sigma", train.cfg.sigma, "Augmentation noise level");
  train_cmd->add_option("--epochs", train.cfg.epochs, "Epochs");
  train_cmd->add_option("--batch-size", train.cfg.batch_size, "Minibatch size");
  train_cmd->add_option("--lr", train.cfg.learning_rate, "Initial learning rate");
  train_cmd->add_option("--lr-decay-epochs", train.cfg.lr_decay_epochs, "Decay epochs")
      ->delimiter(',');
  train_cmd->add_option("--lr-decay-factor", train.cfg.lr_decay_factor, "Decay factor");

  SolveOptions solve;
  auto* solve_cmd = app.add_subcommand("solve-weights", "Solve ensemble weights on the simplex");
  solve_cmd->add_option("--models", solve.models, "Candidate model files")->required();
  solve_cmd->add_option("--data", solve.data, "Weight-eval CSV")->required();
  solve_cmd->add_option("--sigma", solve.sigma, "Noise level")->required();
  solve_cmd->add_option("--mode", solve.mode, "erm | streaming");
  solve_cmd->add_option("--samples", solve.cfg.samples, "Noise samples per point (erm)");
  solve_cmd->add_option("--epochs", solve.cfg.epochs, "Iteration cap");
  solve_cmd->add_option("--lr", solve.cfg.learning_rate, "Step size");

  CertifyOptions cert;
  cert.params.n0 = 100;
  cert.params.n = 100000;
  cert.params.alpha = 0.001;
  auto* cert_cmd = app.add_subcommand("certify", "Certify test points");
  cert_cmd->add_option("--weights", cert.weights, "Weights file");
  cert_cmd->add_option("--model", cert.model, "Single model file");
  cert_cmd->add_option("--data", cert.data, "Test CSV")->required();
  cert_cmd->add_option("--sigma", cert.sigma, "Noise level (overrides weights file)");
  cert_cmd->add_option("--n0", cert.params.n0, "Selection samples");
  cert_cmd->add_option("--n", cert.params.n, "Estimation samples");
  cert_cmd->add_option("--alpha", cert.params.alpha, "Failure probability");
  cert_cmd->add_option("--diameter", cert.diameter, "Override input-space diameter");
  cert_cmd->add_option("--max-points", cert.max_points, "Certify only the first N points");
  cert_cmd->add_flag("--adaptive", cert.adaptive, "Use adaptive prediction");
  cert_cmd->add_option("--adaptive-alpha", cert.adaptive_cfg.alpha, "Adaptive significance");
  cert_cmd->add_option("--threshold", cert.adaptive_cfg.threshold, "Adaptive first-exit T");
  cert_cmd->add_option("--s-local", cert.adaptive_cfg.s_local, "Samples per local prediction");
  cert_cmd->add_option("--svg", cert.svg, "Write a radius-accuracy SVG");
  cert_cmd->add_option("--name", cert.name, "Curve label");

  ReportOptions rep;
  auto* report_cmd = app.add_subcommand("report", "Combine report CSVs with UE and AVG rows");
  report_cmd->add_option("--inputs", rep.inputs, "Report CSVs")->required();
  report_cmd->add_option("--names", rep.names, "Row names")->delimiter(',');

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(global, gen, out);
    if (*train_cmd) return cmd_train(global, train, out);
    if (*solve_cmd) return cmd_solve_weights(global, solve, out);
    if (*cert_cmd) return cmd_certify(global, cert, out);
    if (*report_cmd) return cmd_report(global, rep, out);
  } catch (const Error& e) {
    err << "error: " << to_string(e.kind()) << ": " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error: io-error: " << e.what() << "\n";
    return kIoFailure;
  }
  return kUsage;
}

}  // namespace sween::cli
