#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include <json.hpp>

#include "tsdiff/denoiser.hpp"
#include "tsdiff/errors.hpp"
#include "tsdiff/io.hpp"
#include "tsdiff/mlp.hpp"
#include "tsdiff/schedule.hpp"

namespace tsdiff {

inline constexpr int kCheckpointSchemaVersion = 1;

inline nlohmann::json schedule_to_json(const ScheduleSpec& spec) {
  return {{"kind", "linear"}, {"T", spec.T}, {"beta_start", spec.beta_start}, {"beta_end", spec.beta_end}};
}

inline ScheduleSpec schedule_from_json(const nlohmann::json& j) {
  ScheduleSpec spec;
  const std::string kind = j.value("kind", std::string("linear"));
  require(kind == "linear", ErrorCategory::invalid_argument, "unknown schedule kind '" + kind + "'");
  spec.T = j.value("T", spec.T);
  spec.beta_start = j.value("beta_start", spec.beta_start);
  spec.beta_end = j.value("beta_end", spec.beta_end);
  return spec;
}

inline nlohmann::json mixture_to_json(const GaussianMixture& mix) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : mix) arr.push_back({{"weight", c.weight}, {"mean", c.mean}, {"variance", c.variance}});
  return arr;
}

inline GaussianMixture mixture_from_json(const nlohmann::json& j) {
  GaussianMixture mix;
  for (const auto& c : j)
    mix.push_back({c.at("mean").get<std::vector<double>>(), c.at("variance").get<std::vector<double>>(),
                   c.at("weight").get<double>()});
  validate_mixture(mix);
  return mix;
}

/// Versioned model file. `extra` is echoed verbatim (training config etc.).
struct Checkpoint {
  std::string variant;
  ScheduleSpec schedule;
  std::string schedule_fingerprint;
  Mlp net;                 // when variant == "mlp"
  GaussianMixture mixture; // analytic variants
  nlohmann::json extra = nlohmann::json::object();

  nlohmann::json to_json() const {
    nlohmann::json j{{"schema_version", kCheckpointSchemaVersion},
                     {"variant", variant},
                     {"schedule", schedule_to_json(schedule)},
                     {"schedule_fingerprint", schedule_fingerprint},
                     {"extra", extra}};
    if (variant == "mlp") {
      const auto& s = net.shape();
      j["mlp"] = {{"dim", s.dim}, {"hidden", s.hidden}, {"depth", s.depth}, {"embed", s.embed},
                  {"parameters", net.parameters()}};
    } else {
      j["mixture"] = mixture_to_json(mixture);
    }
    return j;
  }

  static Checkpoint from_json(const nlohmann::json& j) {
    try {
      return from_json_unchecked(j);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCategory::model, std::string("malformed checkpoint: ") + e.what());
    }
  }

 private:
  static Checkpoint from_json_unchecked(const nlohmann::json& j) {
    const int version = j.value("schema_version", -1);
    require(version == kCheckpointSchemaVersion, ErrorCategory::model,
            "unsupported checkpoint schema_version " + std::to_string(version));
    Checkpoint c;
    c.variant = j.at("variant").get<std::string>();
    c.schedule = schedule_from_json(j.at("schedule"));
    c.schedule_fingerprint = j.at("schedule_fingerprint").get<std::string>();
    require(c.schedule.build().fingerprint() == c.schedule_fingerprint, ErrorCategory::model,
            "checkpoint schedule fingerprint does not match its schedule parameters");
    c.extra = j.value("extra", nlohmann::json::object());
    if (c.variant == "mlp") {
      const auto& m = j.at("mlp");
      MlpShape shape{m.at("dim").get<std::size_t>(), m.at("hidden").get<std::size_t>(),
                     m.at("depth").get<std::size_t>(), m.at("embed").get<std::size_t>()};
      c.net = Mlp(shape);
      auto params = m.at("parameters").get<std::vector<double>>();
      require(params.size() == c.net.parameter_count(), ErrorCategory::model,
              "checkpoint parameter count does not match the layer shapes");
      for (double p : params) require(std::isfinite(p), ErrorCategory::model, "non-finite weight in checkpoint");
      c.net.parameters() = std::move(params);
    } else if (c.variant == "analytic-gaussian" || c.variant == "analytic-gmm") {
      c.mixture = mixture_from_json(j.at("mixture"));
    } else {
      fail(ErrorCategory::model, "unknown checkpoint variant '" + c.variant + "'");
    }
    return c;
  }


 public:
  std::shared_ptr<const Denoiser> make_model() const {
    if (variant == "mlp") return std::make_shared<MlpDenoiser>(net);
    return std::make_shared<AnalyticDenoiser>(mixture, schedule.build());
  }

  void save(const std::filesystem::path& path) const { write_artifact(path, to_json().dump(1) + "\n"); }

  static Checkpoint load(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCategory::io, "cannot parse checkpoint " + path.string() + ": " + e.what());
    }
    return from_json(j);
  }
};

}  // namespace tsdiff
