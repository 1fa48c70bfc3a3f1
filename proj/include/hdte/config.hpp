#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hdte/bootstrap.hpp"
#include "hdte/errors.hpp"
#include "hdte/dictionary.hpp"
#include "hdte/pipeline.hpp"
#include "hdte/simulation.hpp"

namespace hdte {

/// Configuration problems map to the dedicated CLI exit code.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

inline Estimand parse_estimand(const std::string& name) {
  if (name == "ATE") return Estimand::ATE;
  if (name == "ATE-T") return Estimand::ATE_T;
  if (name == "LATE") return Estimand::LATE;
  if (name == "LATE-T") return Estimand::LATE_T;
  if (name == "LASF") return Estimand::LASF;
  if (name == "LASF-T") return Estimand::LASF_T;
  if (name == "LDTE") return Estimand::LDTE;
  if (name == "LQTE") return Estimand::LQTE;
  if (name == "LDTE-T") return Estimand::LDTE_T;
  if (name == "LQTE-T") return Estimand::LQTE_T;
  throw ConfigError("unknown estimand '" + name + "'");
}

inline MultiplierKind parse_multiplier(const std::string& name) {
  if (name == "bayesian") return MultiplierKind::Bayesian;
  if (name == "gaussian") return MultiplierKind::Gaussian;
  if (name == "wild") return MultiplierKind::Wild;
  throw ConfigError("unknown multiplier kind '" + name + "' (bayesian|gaussian|wild)");
}

inline TransformKind parse_transform_kind(const std::string& name) {
  if (name == "identity") return TransformKind::Identity;
  if (name == "power") return TransformKind::Power;
  if (name == "categorical") return TransformKind::CategoricalIndicators;
  if (name == "quadratic_spline") return TransformKind::QuadraticSpline;
  throw ConfigError("unknown transform kind '" + name +
                    "' (identity|power|categorical|quadratic_spline)");
}

inline DictionarySpec parse_dictionary(const nlohmann::json& j) {
  DictionarySpec spec;
  if (j.contains("standardize")) spec.standardize = j.at("standardize").get<bool>();
  for (const auto& t : j.value("transforms", nlohmann::json::array())) {
    ColumnTransform ct;
    ct.column = t.at("column").get<std::string>();
    ct.kind = parse_transform_kind(t.value("kind", std::string("identity")));
    if (t.contains("power")) ct.power = t.at("power").get<int>();
    if (t.contains("cuts")) ct.cuts = t.at("cuts").get<std::vector<double>>();
    spec.transforms.push_back(std::move(ct));
  }
  for (const auto& d : j.value("interactions", nlohmann::json::array())) {
    InteractionDirective dir;
    dir.groups = d.at("groups").get<std::vector<std::vector<std::string>>>();
    spec.interactions.push_back(std::move(dir));
  }
  try {
    spec.validate();
  } catch (const std::exception& ex) {
    throw ConfigError(ex.what());
  }
  return spec;
}

inline PenaltyConfig parse_penalty(const nlohmann::json& j) {
  PenaltyConfig cfg;
  if (j.contains("c")) cfg.c = j.at("c").get<double>();
  if (j.contains("gamma")) cfg.gamma = j.at("gamma").get<double>();
  if (j.contains("max_loading_iterations")) {
    cfg.max_loading_iterations = j.at("max_loading_iterations").get<int>();
  }
  if (j.contains("loading_stop_tol")) cfg.loading_stop_tol = j.at("loading_stop_tol").get<double>();
  if (j.contains("loading_floor")) cfg.loading_floor = j.at("loading_floor").get<double>();
  if (j.contains("kkt_tol")) cfg.kkt_tol = j.at("kkt_tol").get<double>();
  try {
    cfg.validate();
  } catch (const std::exception& ex) {
    throw ConfigError(ex.what());
  }
  return cfg;
}

/// A full estimation run: input location, column roles, and the estimation
/// settings handed to the pipeline.
struct RunConfig {
  std::string input_path;
  std::string y_col = "y";
  std::string d_col = "d";
  std::string z_col;  // empty: exogenous, z := d
  std::string out_dir = ".";
  EstimationConfig est;
  nlohmann::json echo;  // canonical config for the manifest
};

inline RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig cfg;
  cfg.echo = j;
  try {
    cfg.input_path = j.value("input", std::string());
    if (j.contains("columns")) {
      const auto& c = j.at("columns");
      cfg.y_col = c.value("y", std::string("y"));
      cfg.d_col = c.value("d", std::string("d"));
      cfg.z_col = c.value("z", std::string());
    }
    cfg.out_dir = j.value("out_dir", std::string("."));

    for (const auto& name : j.value("estimands", std::vector<std::string>{})) {
      cfg.est.estimands.push_back(parse_estimand(name));
    }
    if (j.contains("dictionary")) cfg.est.dictionary = parse_dictionary(j.at("dictionary"));
    if (j.contains("penalty")) cfg.est.penalty = parse_penalty(j.at("penalty"));
    if (j.contains("add_intercept")) cfg.est.add_intercept = j.at("add_intercept").get<bool>();
    if (j.contains("prune_tol")) cfg.est.prune_tol = j.at("prune_tol").get<double>();
    if (j.contains("trim_eps")) cfg.est.trim_eps = j.at("trim_eps").get<double>();
    if (j.contains("denom_tol")) cfg.est.denom_tol = j.at("denom_tol").get<double>();
    cfg.est.one_sided_compliance = j.value("one_sided_compliance", false);
    cfg.est.exogenous = j.value("exogenous", cfg.z_col.empty());

    if (j.contains("u_grid")) {
      const auto& u = j.at("u_grid");
      cfg.est.u_lo = u.value("lo", 0.05);
      cfg.est.u_hi = u.value("hi", 0.95);
      cfg.est.u_step = u.value("step", 0.01);
    }
    if (j.contains("tau_grid")) {
      const auto& t = j.at("tau_grid");
      const double lo = t.value("lo", 0.10);
      const double hi = t.value("hi", 0.90);
      const double step = t.value("step", 0.01);
      QuantileGrid grid;
      const int steps = static_cast<int>(std::round((hi - lo) / step));
      for (int k = 0; k <= steps; ++k) grid.taus.push_back(lo + step * k);
      grid.validate();
      cfg.est.taus = grid;
    }
    if (j.contains("bootstrap")) {
      const auto& b = j.at("bootstrap");
      cfg.est.bootstrap_b = b.value("B", 500);
      cfg.est.multiplier = parse_multiplier(b.value("kind", std::string("wild")));
      cfg.est.band_level = b.value("level", 0.95);
      cfg.est.seed = b.value("seed", static_cast<std::uint64_t>(1));
      const std::string param = b.value("weights", std::string("mean1"));
      if (param == "mean0") {
        cfg.est.weight_param = WeightParam::Mean0;
      } else if (param == "mean1") {
        cfg.est.weight_param = WeightParam::Mean1;
      } else {
        throw ConfigError("bootstrap.weights must be mean0 or mean1");
      }
    }

    if (!(cfg.est.trim_eps > 0.0 && cfg.est.trim_eps < 0.5)) {
      throw ConfigError("trim_eps must lie in (0, 0.5)");
    }
    if (cfg.est.bootstrap_b < 4) throw ConfigError("bootstrap B must be >= 4");
    if (!(cfg.est.band_level > 0.0 && cfg.est.band_level < 1.0)) {
      throw ConfigError("bootstrap level must lie in (0,1)");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  }
  return cfg;
}

inline SimConfig parse_sim_config(const nlohmann::json& j) {
  SimConfig cfg;
  try {
    cfg.n = j.value("n", cfg.n);
    cfg.p = j.value("p", cfg.p);
    if (j.contains("r2_d_grid")) cfg.r2_d_grid = j.at("r2_d_grid").get<std::vector<double>>();
    if (j.contains("r2_y_grid")) cfg.r2_y_grid = j.at("r2_y_grid").get<std::vector<double>>();
    cfg.replications = j.value("replications", cfg.replications);
    cfg.nominal_level = j.value("level", cfg.nominal_level);
    cfg.master_seed = j.value("seed", cfg.master_seed);
    cfg.toeplitz_base = j.value("toeplitz_base", cfg.toeplitz_base);
    cfg.trim_eps = j.value("trim_eps", cfg.trim_eps);
    cfg.ate_oracle_draws = j.value("ate_oracle_draws", cfg.ate_oracle_draws);
    if (j.contains("penalty")) cfg.penalty = parse_penalty(j.at("penalty"));
    cfg.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& ex) {
    throw ConfigError(std::string("simulation config: ") + ex.what());
  }
  return cfg;
}

inline nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& ex) {
    throw ConfigError(std::string("config parse error in ") + path + ": " + ex.what());
  }
  return j;
}

}  // namespace hdte
