// tsdiff command-line entry point.
//
// Exit codes: 0 ok, 1 verify --strict failure, 2 usage, 3 invalid argument,
// 4 dimension, 5 domain, 6 model, 7 contract, 8 divergence, 9 io.

#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tsdiff/config.hpp"
#include "tsdiff/experiments.hpp"
#include "tsdiff/tsdiff.hpp"

namespace fs = std::filesystem;
using namespace tsdiff;
using nlohmann::json;

namespace {

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::invalid_argument: return 3;
    case ErrorCategory::dimension: return 4;
    case ErrorCategory::domain: return 5;
    case ErrorCategory::model: return 6;
    case ErrorCategory::contract: return 7;
    case ErrorCategory::divergence: return 8;
    case ErrorCategory::io: return 9;
  }
  return 1;
}

// Flags override config-file values; unset flags leave the file alone.
struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> T;
  std::optional<std::string> dataset, model, checkpoint, method, grid, mode, optimizer;
  std::optional<std::size_t> dim, size, chains, epochs, batch, max_steps;
  std::optional<int> steps, window, cutoff;
  std::optional<double> eta, phi, lr;

  void add_data(CLI::App* c) {
    c->add_option("--config", config, "JSON experiment config")->check(CLI::ExistingFile);
    c->add_option("--seed", seed, "root seed");
    c->add_option("--out", out, "output directory");
    c->add_option("--T", T, "number of diffusion steps in the schedule");
    c->add_option("--dataset", dataset, "gaussian | gmm | swiss-roll | hetero");
    c->add_option("--dim", dim, "data dimension");
    c->add_option("--size", size, "dataset size");
  }
  void add_model(CLI::App* c) {
    c->add_option("--model", model, "analytic | checkpoint");
    c->add_option("--checkpoint", checkpoint, "checkpoint file (implies --model checkpoint)");
    c->add_option("--phi", phi, "injected per-step error level");
  }
  void add_sampler(CLI::App* c) {
    c->add_option("--method", method, "ddpm | ddim | s-pndm | f-pndm, or ts-<method>");
    c->add_option("--steps", steps, "sampling steps");
    c->add_option("--grid", grid, "uniform | quadratic");
    c->add_option("--eta", eta, "ddim stochasticity");
    c->add_option("--chains", chains, "number of chains");
  }
  void add_shift(CLI::App* c) {
    c->add_option("--window", window, "time-shift window width (even)");
    c->add_option("--cutoff", cutoff, "no shifting at or below this timestep");
    c->add_option("--variance-mode", mode, "batch | per-chain");
  }
  void add_training(CLI::App* c) {
    c->add_option("--epochs", epochs);
    c->add_option("--batch-size", batch);
    c->add_option("--lr", lr, "learning rate");
    c->add_option("--optimizer", optimizer, "adam | sgd");
    c->add_option("--max-steps", max_steps, "stop after this many updates (0 = all epochs)");
  }

  ExperimentConfig resolve() const {
    ExperimentConfig c = config.empty() ? ExperimentConfig{} : ExperimentConfig::load(config);
    if (seed) c.seed = *seed;
    if (out) c.output = *out;
    if (T) c.schedule.T = *T;
    if (dataset) c.dataset.kind = *dataset;
    if (dim) c.dataset.dim = *dim;
    if (size) c.dataset.size = *size;
    if (model) c.model.kind = *model;
    if (checkpoint) {
      c.model.checkpoint = *checkpoint;
      if (!model) c.model.kind = "checkpoint";
    }
    if (phi) c.model.phi = *phi;
    if (method) c.sampler.method = *method;
    if (steps) c.sampler.steps = *steps;
    if (grid) c.sampler.grid = *grid;
    if (eta) c.sampler.eta = *eta;
    if (chains) c.sampler.chains = *chains;
    if (window || cutoff || mode) {
      ShiftConfig sh = c.resolved_shift();
      if (window) sh.window = *window;
      if (cutoff) sh.cutoff = *cutoff;
      if (mode) sh.mode = parse_variance_mode(*mode);
      c.shift = sh;
    }
    if (epochs) c.training.epochs = *epochs;
    if (batch) c.training.batch_size = *batch;
    if (lr) c.training.learning_rate = *lr;
    if (optimizer) c.training.optimizer = parse_optimizer(*optimizer);
    if (max_steps) c.training.max_steps = *max_steps;
    c.validate();
    return c;
  }
};

fs::path prepare_output(const ExperimentConfig& cfg) {
  const fs::path dir = cfg.output;
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorCategory::io, "cannot create output directory " + dir.string() + ": " + ec.message());
  write_artifact(dir / "config.json", cfg.to_json().dump(2) + "\n");
  return dir;
}

void emit(const fs::path& p, const std::string& content) {
  write_artifact(p, content);
  std::cout << "wrote " << p.string() << "\n";
}

void report_warnings(const Trajectory& traj) {
  for (const auto& w : traj.warnings) std::cerr << "warning: " << w << "\n";
}

std::size_t model_dim(const ExperimentConfig& cfg) {
  if (cfg.model.kind != "checkpoint") return cfg.dataset.data_dim();
  const auto ck = Checkpoint::load(cfg.model.checkpoint);
  return ck.variant == "mlp" ? ck.net.shape().dim : ck.mixture.front().mean.size();
}

struct Range {
  int lo = 0, hi = 0, step = 1;
};

Range parse_range(const std::string& text) {
  Range r;
  char c1 = 0, c2 = 0;
  std::istringstream in(text);
  in >> r.lo >> c1 >> r.hi >> c2 >> r.step;
  require(in && c1 == ':' && c2 == ':' && in.peek() == EOF, ErrorCategory::invalid_argument,
          "range must look like lo:hi:step, got '" + text + "'");
  require(r.step > 0 && r.lo <= r.hi, ErrorCategory::invalid_argument, "range needs step > 0 and lo <= hi");
  return r;
}

std::vector<int> expand(const Range& r) {
  std::vector<int> v;
  for (int x = r.lo; x <= r.hi; x += r.step) v.push_back(x);
  return v;
}

// ---------------------------------------------------------------------------

void cmd_schedule_dump(const Overrides& o, double beta_start, double beta_end) {
  ScheduleSpec spec;
  if (!o.config.empty()) spec = ExperimentConfig::load(o.config).schedule;
  if (o.T) spec.T = *o.T;
  if (beta_start > 0) spec.beta_start = beta_start;
  if (beta_end > 0) spec.beta_end = beta_end;
  const auto s = spec.build();
  if (!o.out) {
    std::cout << s.to_csv();
    return;
  }
  const fs::path dir = *o.out;
  fs::create_directories(dir);
  write_artifact(dir / "config.json",
                 json{{"schedule", schedule_to_json(spec)}, {"fingerprint", s.fingerprint()}}.dump(2) + "\n");
  emit(dir / "schedule.csv", s.to_csv());
}

void cmd_train(const Overrides& o) {
  auto cfg = o.resolve();
  if (cfg.model.kind == "analytic") cfg.model.kind = "mlp";
  require(cfg.model.kind == "mlp", ErrorCategory::invalid_argument, "train only fits the mlp model");
  const auto s = cfg.schedule.build();
  const auto dir = prepare_output(cfg);
  const auto data = cfg.dataset.draw(cfg.dataset.size, cfg.root_seed());
  MlpShape shape = cfg.model.shape;
  shape.dim = data.dim();
  TrainConfig tc = cfg.training;
  tc.seed = cfg.root_seed();
  const auto result = train(Mlp::initialized(shape, cfg.root_seed()), data, s, tc);
  Checkpoint ck;
  ck.variant = "mlp";
  ck.schedule = cfg.schedule;
  ck.schedule_fingerprint = s.fingerprint();
  ck.net = result.net;
  ck.extra = {{"config", cfg.to_json()}, {"final_loss", result.losses.empty() ? 0.0 : result.losses.back()}};
  emit(dir / "loss.csv", result.loss_csv());
  ck.save(dir / "checkpoint.json");
  std::cout << "wrote " << (dir / "checkpoint.json").string() << "\n";
}

void cmd_sample(const Overrides& o) {
  const auto cfg = o.resolve();
  const auto s = cfg.schedule.build();
  const auto model = build_model(cfg, s);
  const auto scfg = cfg.sampler_config(s);
  const std::size_t dim = model_dim(cfg);
  const auto dir = prepare_output(cfg);
  const auto r = cfg.sampler.time_shift() ? run_time_shift_sampler(scfg, cfg.resolved_shift(), *model, s, dim)
                                          : run_sampler(scfg, *model, s, dim);
  report_warnings(r.trajectory);
  emit(dir / "samples.csv", samples_csv(r.samples));
  emit(dir / "trajectory.jsonl", r.trajectory.to_jsonl());
}

void cmd_diagnose(const Overrides& o, const std::string& which, std::vector<int> timesteps, int t_split,
                  int off_lo, int off_hi) {
  const auto cfg = o.resolve();
  const auto s = cfg.schedule.build();
  const auto dir = prepare_output(cfg);
  const auto seed = cfg.root_seed();
  if (which == "variance") {
    if (timesteps.empty())
      for (int t = 0; t < s.T(); t += s.T() / 10) timesteps.push_back(t);
    const auto vd = variance_density(cfg.dataset.draw(cfg.dataset.size, seed), timesteps, s, seed);
    emit(dir / "variance_density.csv", vd.to_csv());
    return;
  }
  const auto model = build_model(cfg, s);
  const auto scfg = cfg.sampler_config(s);
  const auto x0 = cfg.dataset.draw(scfg.n, seed);
  if (which == "mse") {
    std::vector<double> mean(x0.dim(), 0.0);
    if (cfg.dataset.has_mixture()) {
      mean = mixture_moments(cfg.dataset.mixture()).mean;
    } else {
      const auto ref = cfg.dataset.draw(cfg.dataset.size, seed, Purpose::reference);
      for (std::size_t i = 0; i < ref.rows(); ++i)
        for (std::size_t j = 0; j < ref.dim(); ++j) mean[j] += ref(i, j) / static_cast<double>(ref.rows());
    }
    const int split = t_split >= 0 ? t_split : (65 * s.T()) / 100;
    emit(dir / "mse.csv", mse_by_step(scfg, *model, x0, mean, split, s).to_csv());
  } else {
    emit(dir / "coupling.csv", coupling_matrix(scfg, *model, x0, off_lo, off_hi, s).to_csv());
  }
}

int cmd_verify(const std::string& which, const std::optional<std::uint64_t>& seed, const std::optional<std::string>& out,
               std::size_t trials, std::size_t dim, std::size_t chains, bool strict) {
  json rep;
  if (which == "theorem") {
    experiments::TheoremParams p;
    p.trials = trials;
    if (dim) p.dim = dim;
    if (seed) p.seed = *seed;
    rep = experiments::theorem_agreement(p);
  } else if (which == "window") {
    rep = experiments::window_bound_sanity();
  } else if (which == "order") {
    rep = experiments::solver_order({});
  } else {
    experiments::EquivalenceParams p;
    p.chains = chains;
    if (seed) p.seeds = {*seed};
    rep = experiments::degenerate_equivalence(p);
  }
  const std::string text = rep.dump(2) + "\n";
  if (out) {
    fs::create_directories(*out);
    write_artifact(fs::path(*out) / ("verify_" + which + ".json"), text);
  }
  std::cout << text;
  return strict && !rep.value("pass", false) ? 1 : 0;
}

void cmd_sweep(const Overrides& o, const std::string& windows, const std::string& cutoffs, std::size_t projections) {
  auto cfg = o.resolve();
  const auto s = cfg.schedule.build();
  const auto model = build_model(cfg, s);
  const auto scfg = cfg.sampler_config(s);
  const std::size_t dim = model_dim(cfg);
  const auto ws = expand(parse_range(windows)), cs = expand(parse_range(cutoffs));
  const auto mode = cfg.resolved_shift().mode;
  for (int w : ws) ShiftConfig{w, 0, mode}.validate(s);
  for (int c : cs) ShiftConfig{0, c, mode}.validate(s);
  const auto dir = prepare_output(cfg);
  const auto ref = cfg.dataset.draw(scfg.n, cfg.root_seed(), Purpose::reference);
  const double base = sliced_wasserstein(run_sampler(scfg, *model, s, dim).samples, ref, projections, cfg.root_seed());
  std::cerr << "baseline " << to_string(scfg.method) << " sliced_wasserstein " << format_real(base) << "\n";
  CsvWriter csv({"window", "cutoff", "sliced_wasserstein", "baseline"});
  for (int w : ws)
    for (int c : cs) {
      const auto r = run_time_shift_sampler(scfg, {w, c, mode}, *model, s, dim);
      csv.row(w, c, sliced_wasserstein(r.samples, ref, projections, cfg.root_seed()), base);
    }
  emit(dir / "sweep.csv", csv.str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tsdiff: diffusion samplers with variance-matched time shifting"};
  app.require_subcommand(1);
  Overrides o;

  auto* schedule = app.add_subcommand("schedule", "inspect the noise schedule");
  schedule->require_subcommand(1);
  auto* dump = schedule->add_subcommand("dump", "print or write the schedule table");
  double beta_start = 0, beta_end = 0;
  dump->add_option("--config", o.config)->check(CLI::ExistingFile);
  dump->add_option("--T", o.T);
  dump->add_option("--beta-start", beta_start);
  dump->add_option("--beta-end", beta_end);
  dump->add_option("--out", o.out, "write schedule.csv here instead of stdout");

  auto* train_cmd = app.add_subcommand("train", "fit the MLP denoiser and write a checkpoint");
  o.add_data(train_cmd);
  o.add_training(train_cmd);

  auto* sample = app.add_subcommand("sample", "run a sampler");
  o.add_data(sample);
  o.add_model(sample);
  o.add_sampler(sample);
  o.add_shift(sample);

  auto* diagnose = app.add_subcommand("diagnose", "exposure-bias diagnostics");
  std::string diag_kind;
  std::vector<int> timesteps;
  int t_split = -1, off_lo = -6, off_hi = 4;
  diagnose->add_option("kind", diag_kind, "variance | mse | coupling")
      ->required()
      ->check(CLI::IsMember({"variance", "mse", "coupling"}));
  o.add_data(diagnose);
  o.add_model(diagnose);
  o.add_sampler(diagnose);
  diagnose->add_option("--timesteps", timesteps, "variance: timesteps to probe (-1 = clean data)");
  diagnose->add_option("--t-split", t_split, "mse: stage boundary (default 0.65 T)");
  diagnose->add_option("--offset-lo", off_lo, "coupling: lowest probe offset");
  diagnose->add_option("--offset-hi", off_hi, "coupling: highest probe offset");

  auto* verify = app.add_subcommand("verify", "controlled checks with a JSON report");
  std::string verify_kind;
  std::size_t trials = 1000, vdim = 0, vchains = 100;
  bool strict = false;
  verify->add_option("kind", verify_kind, "theorem | window | order | equivalence")
      ->required()
      ->check(CLI::IsMember({"theorem", "window", "order", "equivalence"}));
  verify->add_option("--trials", trials, "theorem: trials per cell")->check(CLI::PositiveNumber);
  verify->add_option("--dim", vdim, "theorem: data dimension");
  verify->add_option("--chains", vchains, "equivalence: chains per run")->check(CLI::PositiveNumber);
  verify->add_option("--seed", o.seed);
  verify->add_option("--out", o.out, "also write verify_<kind>.json here");
  verify->add_flag("--strict", strict, "exit 1 when the check fails");

  auto* sweep = app.add_subcommand("sweep", "grid over window x cutoff");
  std::string windows = "10:60:10", cutoffs = "0:500:100";
  std::size_t projections = 64;
  o.add_data(sweep);
  o.add_model(sweep);
  o.add_sampler(sweep);
  sweep->add_option("--window", windows, "lo:hi:step");
  sweep->add_option("--cutoff", cutoffs, "lo:hi:step");
  sweep->add_option("--variance-mode", o.mode, "batch | per-chain");
  sweep->add_option("--projections", projections, "sliced-Wasserstein projections");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*dump) cmd_schedule_dump(o, beta_start, beta_end);
    else if (*train_cmd) cmd_train(o);
    else if (*sample) cmd_sample(o);
    else if (*diagnose) cmd_diagnose(o, diag_kind, timesteps, t_split, off_lo, off_hi);
    else if (*verify) return cmd_verify(verify_kind, o.seed, o.out, trials, vdim, vchains, strict);
    else if (*sweep) cmd_sweep(o, windows, cutoffs, projections);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.category()) << "): " << e.what() << "\n";
    return exit_code(e.category());
  }
  return 0;
}
