#pragma once

// Experiment configuration: nested JSON on disk, command-line flags on top.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsdiff/checkpoint.hpp"
#include "tsdiff/datasets.hpp"
#include "tsdiff/denoiser.hpp"
#include "tsdiff/samplers.hpp"
#include "tsdiff/timeshift.hpp"
#include "tsdiff/training.hpp"

namespace tsdiff {

struct DatasetSpec {
  std::string kind = "gaussian";  // gaussian | gmm | swiss-roll | hetero
  std::size_t dim = 16;
  std::size_t size = 1000;
  double mean = 0.0;
  double variance = 1.0;
  std::vector<double> levels{-0.6, -0.2, 0.2, 0.6};
  double noise = 0.05;            // swiss-roll jitter
  double vmin = 0.1, vmax = 0.8;  // hetero per-sample variance range

  std::size_t data_dim() const { return kind == "swiss-roll" ? 2 : dim; }

  bool has_mixture() const { return kind == "gaussian" || kind == "gmm"; }

  GaussianMixture mixture() const {
    require(has_mixture(), ErrorCategory::contract, "dataset '" + kind + "' has no closed-form mixture");
    return kind == "gaussian" ? single_gaussian(dim, mean, variance) : level_mixture(dim, levels, variance);
  }

  SampleBatch draw(std::size_t n, std::uint64_t seed, Purpose purpose = Purpose::data) const {
    if (has_mixture()) return sample_mixture(mixture(), n, seed, purpose);
    // The toy generators are keyed by seed only; mix the purpose in.
    const std::uint64_t key = purpose == Purpose::data ? seed : splitmix64(seed ^ static_cast<std::uint64_t>(purpose));
    if (kind == "swiss-roll") return swiss_roll(n, key, noise);
    return heterogeneous_variance(n, dim, vmin, vmax, key);
  }

  void validate() const {
    static const std::set<std::string> kinds{"gaussian", "gmm", "swiss-roll", "hetero"};
    require(kinds.count(kind) == 1, ErrorCategory::invalid_argument, "unknown dataset kind '" + kind + "'");
    require(size >= 1, ErrorCategory::invalid_argument, "dataset size must be >= 1");
    require(data_dim() >= 1, ErrorCategory::invalid_argument, "dataset dim must be >= 1");
  }
};

struct ModelSpec {
  std::string kind = "analytic";  // analytic | mlp | checkpoint
  std::string checkpoint;         // required for kind == checkpoint
  double phi = 0.0;               // injected per-step error, 0 = none
  MlpShape shape;                 // dim is taken from the dataset
};

struct SamplerSpec {
  std::string method = "ddim";  // ddpm | ddim | s-pndm | f-pndm, optional "ts-" prefix
  int steps = 10;
  std::string grid = "uniform";
  double eta = 0.0;
  std::size_t chains = 100;

  bool time_shift() const { return method.rfind("ts-", 0) == 0; }
  Method base() const { return parse_method(time_shift() ? method.substr(3) : method); }
};

inline GridMode parse_grid(const std::string& s) {
  if (s == "uniform") return GridMode::uniform;
  if (s == "quadratic") return GridMode::quadratic;
  fail(ErrorCategory::invalid_argument, "unknown grid '" + s + "'");
}

inline VarianceMode parse_variance_mode(const std::string& s) {
  if (s == "batch") return VarianceMode::batch;
  if (s == "per-chain") return VarianceMode::per_chain;
  fail(ErrorCategory::invalid_argument, "unknown variance mode '" + s + "'");
}

inline const char* to_string(VarianceMode m) { return m == VarianceMode::batch ? "batch" : "per-chain"; }

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  fail(ErrorCategory::invalid_argument, "unknown optimizer '" + s + "'");
}

struct ExperimentConfig {
  std::optional<std::uint64_t> seed;
  ScheduleSpec schedule;
  DatasetSpec dataset;
  ModelSpec model;
  TrainConfig training{20, 128, 1e-3, OptimizerKind::adam, 0, 0};
  SamplerSpec sampler;
  std::optional<ShiftConfig> shift;  // unset: preset for the step count
  std::string output = "out";

  std::uint64_t root_seed() const {
    require(seed.has_value(), ErrorCategory::invalid_argument, "a seed is required (config 'seed' or --seed)");
    return *seed;
  }

  ShiftConfig resolved_shift() const { return shift ? *shift : preset_shift(sampler.steps); }

  SamplerConfig sampler_config(const NoiseSchedule& s) const {
    SamplerConfig c;
    c.method = sampler.base();
    c.grid = select_time_grid(s, sampler.steps, parse_grid(sampler.grid));
    c.eta = sampler.eta;
    c.n = sampler.chains;
    c.seed = root_seed();
    return c;
  }

  void validate() const {
    root_seed();
    dataset.validate();
    const auto s = schedule.build();
    sampler_config(s).validate(s);
    resolved_shift().validate(s);
    training.validate();
    require(model.phi >= 0.0, ErrorCategory::invalid_argument, "phi must be >= 0");
    if (model.kind == "checkpoint") {
      require(!model.checkpoint.empty(), ErrorCategory::invalid_argument, "model.checkpoint path is empty");
      require(std::filesystem::exists(model.checkpoint), ErrorCategory::io,
              "checkpoint not found: " + model.checkpoint);
    } else {
      require(model.kind == "analytic" || model.kind == "mlp", ErrorCategory::invalid_argument,
              "unknown model kind '" + model.kind + "'");
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["seed"] = root_seed();
    j["schedule"] = schedule_to_json(schedule);
    j["dataset"] = {{"kind", dataset.kind},   {"dim", dataset.dim},         {"size", dataset.size},
                    {"mean", dataset.mean},   {"variance", dataset.variance}, {"levels", dataset.levels},
                    {"noise", dataset.noise}, {"vmin", dataset.vmin},       {"vmax", dataset.vmax}};
    j["model"] = {{"kind", model.kind},          {"checkpoint", model.checkpoint}, {"phi", model.phi},
                  {"hidden", model.shape.hidden}, {"depth", model.shape.depth},      {"embed", model.shape.embed}};
    j["training"] = {{"epochs", training.epochs},
                     {"batch_size", training.batch_size},
                     {"learning_rate", training.learning_rate},
                     {"optimizer", training.optimizer == OptimizerKind::adam ? "adam" : "sgd"},
                     {"max_steps", training.max_steps}};
    j["sampler"] = {{"method", sampler.method}, {"steps", sampler.steps}, {"grid", sampler.grid},
                    {"eta", sampler.eta},       {"chains", sampler.chains}};
    const auto sh = resolved_shift();
    j["shift"] = {{"window", sh.window}, {"cutoff", sh.cutoff}, {"mode", to_string(sh.mode)}};
    j["output"] = output;
    return j;
  }

  static ExperimentConfig from_json(const nlohmann::json& j) {
    try {
      return from_json_unchecked(j);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCategory::invalid_argument, std::string("bad config value: ") + e.what());
    }
  }

  static ExperimentConfig load(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      fail(ErrorCategory::io, "cannot parse config " + path.string() + ": " + e.what());
    }
    return from_json(j);
  }

 private:
  static void only_keys(const nlohmann::json& j, const std::set<std::string>& keys, const std::string& where) {
    require(j.is_object(), ErrorCategory::invalid_argument, where + " must be an object");
    for (const auto& [k, v] : j.items())
      require(keys.count(k) == 1, ErrorCategory::invalid_argument, "unknown key '" + k + "' in " + where);
  }

  static ExperimentConfig from_json_unchecked(const nlohmann::json& j) {
    only_keys(j, {"seed", "schedule", "dataset", "model", "training", "sampler", "shift", "output"}, "config");
    ExperimentConfig c;
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("schedule")) c.schedule = schedule_from_json(j.at("schedule"));
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      only_keys(d, {"kind", "dim", "size", "mean", "variance", "levels", "noise", "vmin", "vmax"}, "dataset");
      auto& ds = c.dataset;
      ds.kind = d.value("kind", ds.kind);
      ds.dim = d.value("dim", ds.dim);
      ds.size = d.value("size", ds.size);
      ds.mean = d.value("mean", ds.mean);
      ds.variance = d.value("variance", ds.variance);
      ds.levels = d.value("levels", ds.levels);
      ds.noise = d.value("noise", ds.noise);
      ds.vmin = d.value("vmin", ds.vmin);
      ds.vmax = d.value("vmax", ds.vmax);
    }
    if (j.contains("model")) {
      const auto& m = j.at("model");
      only_keys(m, {"kind", "checkpoint", "phi", "hidden", "depth", "embed"}, "model");
      c.model.kind = m.value("kind", c.model.kind);
      c.model.checkpoint = m.value("checkpoint", c.model.checkpoint);
      c.model.phi = m.value("phi", c.model.phi);
      c.model.shape.hidden = m.value("hidden", c.model.shape.hidden);
      c.model.shape.depth = m.value("depth", c.model.shape.depth);
      c.model.shape.embed = m.value("embed", c.model.shape.embed);
    }
    if (j.contains("training")) {
      const auto& t = j.at("training");
      only_keys(t, {"epochs", "batch_size", "learning_rate", "optimizer", "max_steps"}, "training");
      c.training.epochs = t.value("epochs", c.training.epochs);
      c.training.batch_size = t.value("batch_size", c.training.batch_size);
      c.training.learning_rate = t.value("learning_rate", c.training.learning_rate);
      if (t.contains("optimizer")) c.training.optimizer = parse_optimizer(t.at("optimizer").get<std::string>());
      c.training.max_steps = t.value("max_steps", c.training.max_steps);
    }
    if (j.contains("sampler")) {
      const auto& s = j.at("sampler");
      only_keys(s, {"method", "steps", "grid", "eta", "chains"}, "sampler");
      c.sampler.method = s.value("method", c.sampler.method);
      c.sampler.steps = s.value("steps", c.sampler.steps);
      c.sampler.grid = s.value("grid", c.sampler.grid);
      c.sampler.eta = s.value("eta", c.sampler.eta);
      c.sampler.chains = s.value("chains", c.sampler.chains);
    }
    if (j.contains("shift")) {
      const auto& s = j.at("shift");
      only_keys(s, {"window", "cutoff", "mode"}, "shift");
      ShiftConfig sh = preset_shift(c.sampler.steps);
      sh.window = s.value("window", sh.window);
      sh.cutoff = s.value("cutoff", sh.cutoff);
      if (s.contains("mode")) sh.mode = parse_variance_mode(s.at("mode").get<std::string>());
      c.shift = sh;
    }
    c.output = j.value("output", c.output);
    return c;
  }
};

/// Denoiser described by the config; the optional error injection wraps it.
inline std::shared_ptr<const Denoiser> build_model(const ExperimentConfig& cfg, const NoiseSchedule& s) {
  std::shared_ptr<const Denoiser> base;
  if (cfg.model.kind == "checkpoint") {
    const auto ck = Checkpoint::load(cfg.model.checkpoint);
    require(ck.schedule_fingerprint == s.fingerprint(), ErrorCategory::model,
            "checkpoint was trained on a different schedule");
    base = ck.make_model();
  } else if (cfg.model.kind == "analytic") {
    base = std::make_shared<AnalyticDenoiser>(cfg.dataset.mixture(), s);
  } else {
    fail(ErrorCategory::contract, "an untrained mlp cannot sample; train it and pass model.kind = checkpoint");
  }
  if (cfg.model.phi > 0.0)
    base = perturb_epsilon(base, constant_perturbation(s.T(), cfg.model.phi, cfg.root_seed()), s);
  return base;
}

}  // namespace tsdiff
