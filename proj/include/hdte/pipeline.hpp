#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdte/bootstrap.hpp"
#include "hdte/data.hpp"
#include "hdte/dictionary.hpp"
#include "hdte/effects.hpp"
#include "hdte/lasso_linear.hpp"
#include "hdte/lasso_logistic.hpp"
#include "hdte/parallel.hpp"
#include "hdte/reduced_form.hpp"
#include "hdte/scaling.hpp"

namespace hdte {

/// Everything the estimation driver needs beyond the raw data.
struct EstimationConfig {
  std::vector<Estimand> estimands;

  DictionarySpec dictionary;  // empty transforms: identity on every covariate
  double prune_tol = 1e-9;
  bool add_intercept = true;  // prepend a constant dictionary column (penalized)

  PenaltyConfig penalty;
  double trim_eps = 1e-12;
  double denom_tol = kDefaultDenomTol;

  bool exogenous = false;             // treatment is its own instrument (d == z)
  bool one_sided_compliance = false;  // z = 0 forces d = 0

  double u_lo = 0.05, u_hi = 0.95, u_step = 0.01;  // threshold grid percentiles
  QuantileGrid taus = QuantileGrid::default_grid();

  int bootstrap_b = 500;
  MultiplierKind multiplier = MultiplierKind::Wild;
  WeightParam weight_param = WeightParam::Mean1;
  double band_level = 0.95;
  std::uint64_t seed = 1;

  bool keep_reduced_form = false;  // retain rho/psi stacks in the output
  bool keep_draws = false;         // retain per-estimand bootstrap draws

  bool needs_curves() const {
    for (Estimand e : estimands) {
      if (e == Estimand::LDTE || e == Estimand::LQTE || e == Estimand::LDTE_T ||
          e == Estimand::LQTE_T) {
        return true;
      }
    }
    return false;
  }
  bool needs_scalars() const {
    for (Estimand e : estimands) {
      if (e == Estimand::LATE || e == Estimand::LATE_T || e == Estimand::ATE ||
          e == Estimand::ATE_T || e == Estimand::LASF || e == Estimand::LASF_T) {
        return true;
      }
    }
    return false;
  }
};

/// Diagnostics for one nuisance fit, kept for the run manifest.
struct FitRecord {
  std::string name;
  std::string link;  // "linear" | "logistic" | "declared"
  double lambda = 0.0;
  int support_size = 0;
  int iterations = 0;
  double kkt_residual = 0.0;
  bool separation = false;
  std::vector<std::string> support_labels;
  Eigen::VectorXd loadings;  // final penalty loadings (diagnostic dump)
};

struct EffectResult {
  Estimand tag = Estimand::LATE;
  std::vector<double> grid;        // tau or u; {nan} for scalars
  Eigen::VectorXd estimates;
  Eigen::VectorXd se_analytic;     // NaN where undefined
  Eigen::VectorXd se_bootstrap;
  Eigen::VectorXd pointwise_lo, pointwise_hi;
  Eigen::VectorXd uniform_lo, uniform_hi;
  double critical_value = 0.0;
  double flagged_fraction = 0.0;
  bool warning = false;
  std::vector<InvertStatus> flags;  // per grid point, curve estimands only
  Eigen::MatrixXd draws;            // kept only when the config asks for them
  std::vector<char> draw_flags;
};

struct EstimationOutput {
  std::vector<EffectResult> effects;
  std::vector<std::pair<Estimand, std::string>> failures;
  std::vector<FitRecord> fits;
  int trimmed_count_scalar = 0;
  int trimmed_count_curves = 0;
  Eigen::Index dictionary_columns = 0;
  std::vector<std::string> pruned_columns;
  std::optional<ReducedForm> reduced_scalar;  // kept on request
  std::optional<ReducedForm> reduced_curves;
};

namespace pipeline_detail {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

inline Eigen::MatrixXd subsample_rows(const Eigen::MatrixXd& F, const std::vector<Eigen::Index>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), F.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = F.row(rows[i]);
  return out;
}

inline Eigen::VectorXd subsample(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[rows[i]];
  return out;
}

/// Post-selection linear regression of `response` on the dictionary restricted
/// to arm z; returns fitted values on the full sample. The fit runs on a
/// unit-RMS / unit-SD rescaling of the subsample (the solver is exactly scale
/// equivariant) so the certificates stay meaningful on raw-scale data.
inline Eigen::VectorXd fit_linear_arm(const Eigen::MatrixXd& F, const Eigen::VectorXd& response,
                                      const std::vector<Eigen::Index>& arm_rows,
                                      const PenaltyConfig& cfg, const std::string& name,
                                      const std::vector<std::string>& labels,
                                      std::vector<FitRecord>& records) {
  const ColumnScaling scaled = scale_columns(subsample_rows(F, arm_rows));
  Eigen::VectorXd yz = subsample(response, arm_rows);
  const double sd = std::sqrt((yz.array() - yz.mean()).square().sum() /
                              std::max<double>(1.0, static_cast<double>(yz.size() - 1)));
  const double y_scale = sd > 0.0 ? sd : 1.0;
  yz /= y_scale;

  const PenalizedFit fit = fit_with_iterated_loadings(scaled.F, yz, cfg);
  FitRecord rec;
  rec.name = name;
  rec.link = "linear";
  rec.lambda = fit.lambda;
  rec.support_size = static_cast<int>(fit.support.size());
  rec.iterations = fit.iterations_used;
  rec.kkt_residual = fit.kkt_residual;
  for (Eigen::Index j : fit.support) rec.support_labels.push_back(labels[static_cast<std::size_t>(j)]);
  rec.loadings = fit.loadings;
  records.push_back(std::move(rec));
  return F * unscale_coefficients(fit.theta_post, scaled.col_scale, y_scale);
}

/// Same for a binary response with the logistic link.
inline Eigen::VectorXd fit_logistic_arm(const Eigen::MatrixXd& F, const Eigen::VectorXd& response,
                                        const std::vector<Eigen::Index>& arm_rows,
                                        const PenaltyConfig& cfg, const std::string& name,
                                        const std::vector<std::string>& labels,
                                        std::vector<FitRecord>& records) {
  const ColumnScaling scaled = scale_columns(subsample_rows(F, arm_rows));
  const Eigen::VectorXd yz = subsample(response, arm_rows);
  const LogisticFit fit = fit_with_iterated_loadings_logistic(scaled.F, yz, cfg);
  FitRecord rec;
  rec.name = name;
  rec.link = "logistic";
  rec.lambda = fit.lambda;
  rec.support_size = static_cast<int>(fit.support.size());
  rec.iterations = fit.iterations_used;
  rec.kkt_residual = fit.kkt_residual;
  rec.separation = fit.separation_flag;
  for (Eigen::Index j : fit.support) rec.support_labels.push_back(labels[static_cast<std::size_t>(j)]);
  rec.loadings = fit.loadings;
  records.push_back(std::move(rec));
  const Eigen::VectorXd link = F * unscale_coefficients(fit.theta_post, scaled.col_scale);
  Eigen::VectorXd mu(link.size());
  for (Eigen::Index i = 0; i < link.size(); ++i) mu[i] = logistic(link[i]);
  return mu;
}

inline void record_declared(const std::string& name, std::vector<FitRecord>& records) {
  FitRecord rec;
  rec.name = name;
  rec.link = "declared";
  records.push_back(std::move(rec));
}

}  // namespace pipeline_detail

/// Dictionary for the estimation pipeline: optional constant column, the
/// configured transforms (identity on every covariate when none are given),
/// then collinearity pruning.
struct PipelineDesign {
  DesignMatrix F;
  std::vector<std::string> pruned;
};

inline PipelineDesign build_design(const RawData& raw, const EstimationConfig& cfg) {
  DictionarySpec spec = cfg.dictionary;
  if (spec.transforms.empty()) {
    for (const std::string& name : raw.x_names) {
      ColumnTransform t;
      t.column = name;
      t.kind = TransformKind::Identity;
      spec.transforms.push_back(std::move(t));
    }
  }
  DesignMatrix m = expand(raw, spec);
  if (cfg.add_intercept) {
    DesignMatrix with;
    with.values.resize(m.n(), m.p() + 1);
    with.values.col(0).setOnes();
    with.values.rightCols(m.p()) = m.values;
    with.labels.push_back("const");
    with.sources.push_back("");
    with.labels.insert(with.labels.end(), m.labels.begin(), m.labels.end());
    with.sources.insert(with.sources.end(), m.sources.begin(), m.sources.end());
    m = std::move(with);
  }
  PruneResult pruned = prune_collinear(m, cfg.prune_tol);
  if (pruned.all_dropped) throw std::runtime_error("build_design: dictionary collapsed to zero columns");
  PipelineDesign out;
  out.F = std::move(pruned.matrix);
  out.pruned = std::move(pruned.dropped);
  return out;
}

/// Fitted propensity (trimmed) plus the row indices of the two instrument arms.
struct PropensityFit {
  Eigen::VectorXd mhat1;
  int trimmed_count = 0;
  std::vector<Eigen::Index> rows_z1, rows_z0;
};

inline PropensityFit fit_propensity(const RawData& raw, const DesignMatrix& F,
                                    const EstimationConfig& cfg, int d_u,
                                    std::vector<FitRecord>& records) {
  PropensityFit out;
  for (Eigen::Index i = 0; i < raw.n(); ++i) {
    (raw.z[i] == 1.0 ? out.rows_z1 : out.rows_z0).push_back(i);
  }
  if (out.rows_z1.empty() || out.rows_z0.empty()) {
    throw std::runtime_error("fit_propensity: an instrument arm is empty");
  }
  PenaltyConfig pcfg = cfg.penalty;
  pcfg.d_u = d_u;
  const ColumnScaling scaled = scale_columns(F.values);
  const LogisticFit fit = fit_with_iterated_loadings_logistic(scaled.F, raw.z, pcfg);
  FitRecord rec;
  rec.name = "propensity";
  rec.link = "logistic";
  rec.lambda = fit.lambda;
  rec.support_size = static_cast<int>(fit.support.size());
  rec.iterations = fit.iterations_used;
  rec.kkt_residual = fit.kkt_residual;
  rec.separation = fit.separation_flag;
  for (Eigen::Index j : fit.support) rec.support_labels.push_back(F.labels[static_cast<std::size_t>(j)]);
  rec.loadings = fit.loadings;
  records.push_back(std::move(rec));

  const Eigen::VectorXd link = F.values * unscale_coefficients(fit.theta_post, scaled.col_scale);
  Eigen::VectorXd mhat(link.size());
  for (Eigen::Index i = 0; i < link.size(); ++i) mhat[i] = logistic(link[i]);
  const TrimResult trimmed = trim_propensity(mhat, cfg.trim_eps);
  out.mhat1 = trimmed.mhat;
  out.trimmed_count = trimmed.trimmed_count;
  return out;
}

/// Treatment cells E[1_1(D)|Z=z,X], shared across all thresholds.
/// Exogeneity declares both cells (1 and 0); one-sided compliance declares the
/// z=0 cell zero. Whatever is not declared is fitted by l1-logistic.
struct TreatmentCells {
  Eigen::VectorXd d1_z1;
  Eigen::VectorXd d1_z0;
};

inline TreatmentCells fit_treatment_cells(const RawData& raw, const DesignMatrix& F,
                                          const PropensityFit& prop, const EstimationConfig& cfg,
                                          int d_u, std::vector<FitRecord>& records) {
  using pipeline_detail::fit_logistic_arm;
  TreatmentCells out;
  const Eigen::Index n = raw.n();
  // Selection for an arm fit competes over both instrument arms at once, so the
  // penalty tail bound uses 2p columns.
  PenaltyConfig acfg = cfg.penalty;
  acfg.d_u = d_u;
  acfg.lambda_p = 2 * F.values.cols();

  if (cfg.exogenous) {
    out.d1_z1 = Eigen::VectorXd::Ones(n);
    out.d1_z0 = Eigen::VectorXd::Zero(n);
    pipeline_detail::record_declared("g[1_1(D)|z=1] (exogenous: 1)", records);
    pipeline_detail::record_declared("g[1_1(D)|z=0] (exogenous: 0)", records);
    return out;
  }
  out.d1_z1 =
      fit_logistic_arm(F.values, raw.d, prop.rows_z1, acfg, "g[1_1(D)|z=1]", F.labels, records);
  if (cfg.one_sided_compliance) {
    out.d1_z0 = Eigen::VectorXd::Zero(n);
    pipeline_detail::record_declared("g[1_1(D)|z=0] (one-sided: 0)", records);
  } else {
    out.d1_z0 =
        fit_logistic_arm(F.values, raw.d, prop.rows_z0, acfg, "g[1_1(D)|z=0]", F.labels, records);
  }
  return out;
}

/// Reduced form for the scalar (unthresholded) target family.
inline ReducedForm scalar_reduced_form(const RawData& raw, const DesignMatrix& F,
                                       const PropensityFit& prop, const TreatmentCells& treat,
                                       const EstimationConfig& cfg,
                                       std::vector<FitRecord>& records) {
  using pipeline_detail::fit_linear_arm;
  const Eigen::Index n = raw.n();
  NuisanceSet nu;
  nu.mhat1 = prop.mhat1;
  nu.trim_eps = cfg.trim_eps;
  nu.trimmed_count = prop.trimmed_count;

  PenaltyConfig acfg = cfg.penalty;
  acfg.d_u = 0;
  acfg.lambda_p = 2 * F.values.cols();

  nu.cell(TargetTag::D1, 1) = treat.d1_z1;
  nu.cell(TargetTag::D1, 0) = treat.d1_z0;
  nu.cell(TargetTag::D0, 1) = Eigen::VectorXd::Ones(n) - treat.d1_z1;
  nu.cell(TargetTag::D0, 0) = Eigen::VectorXd::Ones(n) - treat.d1_z0;

  const Eigen::VectorXd g_y_z1 =
      fit_linear_arm(F.values, raw.y, prop.rows_z1, acfg, "g[Y|z=1]", F.labels, records);
  const Eigen::VectorXd g_y_z0 =
      fit_linear_arm(F.values, raw.y, prop.rows_z0, acfg, "g[Y|z=0]", F.labels, records);
  nu.cell(TargetTag::Yu, 1) = g_y_z1;
  nu.cell(TargetTag::Yu, 0) = g_y_z0;

  const Eigen::VectorXd dy = raw.d.cwiseProduct(raw.y);
  const Eigen::VectorXd d0y = (1.0 - raw.d.array()).matrix().cwiseProduct(raw.y);

  if (cfg.exogenous) {
    // d == z: on the z=1 arm, 1_1(D)Y = Y; on z=0, 1_0(D)Y = Y.
    nu.cell(TargetTag::D1Yu, 1) = g_y_z1;
    nu.cell(TargetTag::D1Yu, 0) = Eigen::VectorXd::Zero(n);
    nu.cell(TargetTag::D0Yu, 1) = Eigen::VectorXd::Zero(n);
    nu.cell(TargetTag::D0Yu, 0) = g_y_z0;
    pipeline_detail::record_declared("g[1_d(D)Y|.] (exogenous reuse)", records);
  } else {
    nu.cell(TargetTag::D1Yu, 1) =
        fit_linear_arm(F.values, dy, prop.rows_z1, acfg, "g[1_1(D)Y|z=1]", F.labels, records);
    nu.cell(TargetTag::D0Yu, 1) =
        fit_linear_arm(F.values, d0y, prop.rows_z1, acfg, "g[1_0(D)Y|z=1]", F.labels, records);
    if (cfg.one_sided_compliance) {
      // z = 0 forces d = 0, so 1_1(D)Y vanishes and 1_0(D)Y reduces to Y.
      nu.cell(TargetTag::D1Yu, 0) = Eigen::VectorXd::Zero(n);
      nu.cell(TargetTag::D0Yu, 0) = g_y_z0;
      pipeline_detail::record_declared("g[1_1(D)Y|z=0] (one-sided: 0)", records);
    } else {
      nu.cell(TargetTag::D1Yu, 0) =
          fit_linear_arm(F.values, dy, prop.rows_z0, acfg, "g[1_1(D)Y|z=0]", F.labels, records);
      nu.cell(TargetTag::D0Yu, 0) =
          fit_linear_arm(F.values, d0y, prop.rows_z0, acfg, "g[1_0(D)Y|z=0]", F.labels, records);
    }
  }

  const std::vector<double> grid = {std::numeric_limits<double>::quiet_NaN()};
  return reduced_form_all(raw.y, raw.d, raw.z, grid, {nu});
}

/// Reduced form over the threshold grid for the distribution/quantile targets.
/// Indicator-valued cells use the logistic link; the raw-outcome cells are
/// derived as 1_1(D)Yu + 1_0(D)Yu, which keeps the stacked vector consistent.
inline ReducedForm curve_reduced_form(const RawData& raw, const DesignMatrix& F,
                                      const PropensityFit& prop, const TreatmentCells& treat,
                                      const EstimationConfig& cfg,
                                      const std::vector<double>& u_grid,
                                      std::vector<FitRecord>& records) {
  using pipeline_detail::fit_logistic_arm;
  const Eigen::Index n = raw.n();
  PenaltyConfig acfg = cfg.penalty;
  acfg.d_u = 1;  // simultaneous selection over the whole threshold continuum
  acfg.lambda_p = 2 * F.values.cols();

  std::vector<NuisanceSet> nuisances(u_grid.size());
  std::vector<std::vector<FitRecord>> per_u_records(u_grid.size());

  parallel_for(u_grid.size(), [&](std::size_t k) {
    const double u = u_grid[k];
    Eigen::VectorXd yu(n);
    for (Eigen::Index i = 0; i < n; ++i) yu[i] = (raw.y[i] <= u) ? 1.0 : 0.0;
    const Eigen::VectorXd d1yu = raw.d.cwiseProduct(yu);
    const Eigen::VectorXd d0yu = (1.0 - raw.d.array()).matrix().cwiseProduct(yu);
    const std::string su = std::to_string(u);

    NuisanceSet nu;
    nu.mhat1 = prop.mhat1;
    nu.trim_eps = cfg.trim_eps;
    nu.trimmed_count = (k == 0) ? prop.trimmed_count : 0;
    nu.cell(TargetTag::D1, 1) = treat.d1_z1;
    nu.cell(TargetTag::D1, 0) = treat.d1_z0;
    nu.cell(TargetTag::D0, 1) = Eigen::VectorXd::Ones(n) - treat.d1_z1;
    nu.cell(TargetTag::D0, 0) = Eigen::VectorXd::Ones(n) - treat.d1_z0;

    if (cfg.exogenous) {
      nu.cell(TargetTag::D1Yu, 1) = fit_logistic_arm(F.values, yu, prop.rows_z1, acfg,
                                                     "g[Yu|z=1] u=" + su, F.labels,
                                                     per_u_records[k]);
      nu.cell(TargetTag::D1Yu, 0) = Eigen::VectorXd::Zero(n);
      nu.cell(TargetTag::D0Yu, 1) = Eigen::VectorXd::Zero(n);
      nu.cell(TargetTag::D0Yu, 0) = fit_logistic_arm(F.values, yu, prop.rows_z0, acfg,
                                                     "g[Yu|z=0] u=" + su, F.labels,
                                                     per_u_records[k]);
    } else {
      nu.cell(TargetTag::D1Yu, 1) =
          fit_logistic_arm(F.values, d1yu, prop.rows_z1, acfg, "g[1_1(D)Yu|z=1] u=" + su,
                           F.labels, per_u_records[k]);
      nu.cell(TargetTag::D0Yu, 1) =
          fit_logistic_arm(F.values, d0yu, prop.rows_z1, acfg, "g[1_0(D)Yu|z=1] u=" + su,
                           F.labels, per_u_records[k]);
      if (cfg.one_sided_compliance) {
        nu.cell(TargetTag::D1Yu, 0) = Eigen::VectorXd::Zero(n);
        nu.cell(TargetTag::D0Yu, 0) =
            fit_logistic_arm(F.values, yu, prop.rows_z0, acfg, "g[Yu|z=0] u=" + su, F.labels,
                             per_u_records[k]);
      } else {
        nu.cell(TargetTag::D1Yu, 0) =
            fit_logistic_arm(F.values, d1yu, prop.rows_z0, acfg, "g[1_1(D)Yu|z=0] u=" + su,
                             F.labels, per_u_records[k]);
        nu.cell(TargetTag::D0Yu, 0) =
            fit_logistic_arm(F.values, d0yu, prop.rows_z0, acfg, "g[1_0(D)Yu|z=0] u=" + su,
                             F.labels, per_u_records[k]);
      }
    }
    nu.cell(TargetTag::Yu, 1) = nu.cell(TargetTag::D1Yu, 1) + nu.cell(TargetTag::D0Yu, 1);
    nu.cell(TargetTag::Yu, 0) = nu.cell(TargetTag::D1Yu, 0) + nu.cell(TargetTag::D0Yu, 0);
    nuisances[k] = std::move(nu);
  });

  for (auto& recs : per_u_records) {
    for (auto& r : recs) records.push_back(std::move(r));
  }
  return reduced_form_all(raw.y, raw.d, raw.z, u_grid, nuisances);
}

namespace pipeline_detail {

inline Eigen::VectorXd scalar_vec(double v) {
  Eigen::VectorXd out(1);
  out[0] = v;
  return out;
}

/// Functional evaluated on (possibly bootstrapped) reduced-form stacks.
inline EffectFunctional make_functional(Estimand tag, const std::vector<double>& u_grid,
                                        const QuantileGrid& taus, double denom_tol,
                                        const std::vector<char>* known_unreachable = nullptr) {
  switch (tag) {
    case Estimand::ATE:
    case Estimand::LATE:
      return [denom_tol](const std::vector<Eigen::VectorXd>& rho) {
        return scalar_vec(late(rho.front(), denom_tol));
      };
    case Estimand::ATE_T:
    case Estimand::LATE_T:
      return [denom_tol](const std::vector<Eigen::VectorXd>& rho) {
        return scalar_vec(late_t(rho.front(), denom_tol));
      };
    case Estimand::LASF:
      return [denom_tol](const std::vector<Eigen::VectorXd>& rho) {
        Eigen::VectorXd out(2);
        out[0] = lasf(rho.front(), 0, denom_tol);
        out[1] = lasf(rho.front(), 1, denom_tol);
        return out;
      };
    case Estimand::LASF_T:
      return [denom_tol](const std::vector<Eigen::VectorXd>& rho) {
        Eigen::VectorXd out(2);
        out[0] = lasf_t(rho.front(), 0, denom_tol);
        out[1] = lasf_t(rho.front(), 1, denom_tol);
        return out;
      };
    case Estimand::LDTE:
    case Estimand::LDTE_T: {
      const bool on_treated = (tag == Estimand::LDTE_T);
      return [denom_tol, on_treated](const std::vector<Eigen::VectorXd>& rho) {
        Eigen::VectorXd out(static_cast<Eigen::Index>(rho.size()));
        for (std::size_t k = 0; k < rho.size(); ++k) {
          out[static_cast<Eigen::Index>(k)] =
              on_treated ? lasf_t(rho[k], 1, denom_tol) - lasf_t(rho[k], 0, denom_tol)
                         : lasf(rho[k], 1, denom_tol) - lasf(rho[k], 0, denom_tol);
        }
        return out;
      };
    }
    case Estimand::LQTE:
    case Estimand::LQTE_T: {
      const bool on_treated = (tag == Estimand::LQTE_T);
      // taus unreachable already at the point estimate stay flagged per point
      // and do not invalidate bootstrap draws
      const std::vector<char> tolerate = known_unreachable
                                             ? *known_unreachable
                                             : std::vector<char>(taus.taus.size(), 0);
      return [u_grid, taus, denom_tol, on_treated,
              tolerate](const std::vector<Eigen::VectorXd>& rho) {
        EffectCurve c1, c0;
        c1.grid = u_grid;
        c0.grid = u_grid;
        c1.values.resize(static_cast<Eigen::Index>(rho.size()));
        c0.values.resize(static_cast<Eigen::Index>(rho.size()));
        for (std::size_t k = 0; k < rho.size(); ++k) {
          c1.values[static_cast<Eigen::Index>(k)] =
              on_treated ? lasf_t(rho[k], 1, denom_tol) : lasf(rho[k], 1, denom_tol);
          c0.values[static_cast<Eigen::Index>(k)] =
              on_treated ? lasf_t(rho[k], 0, denom_tol) : lasf(rho[k], 0, denom_tol);
        }
        const EffectCurve diff = lqte(c1, c0, taus, on_treated);
        for (std::size_t t = 0; t < diff.flags.size(); ++t) {
          if (diff.flags[t] == InvertStatus::NotReached && !tolerate[t]) {
            throw DrawFlagged("quantile level unreachable on a bootstrap curve");
          }
        }
        return diff.values;
      };
    }
    default:
      throw std::logic_error("make_functional: unsupported estimand");
  }
}

/// Analytic SE where the estimand is a single ratio (or a denominator-1
/// contrast): influence contrast over the fixed denominator.
inline Eigen::VectorXd analytic_se(Estimand tag, const ReducedForm& reduced, Eigen::Index dim) {
  Eigen::VectorXd out = Eigen::VectorXd::Constant(dim, kNaN);
  if (reduced.rho.empty()) return out;
  const Eigen::VectorXd& rho = reduced.rho.front();
  const Eigen::MatrixXd& psi = reduced.psi.front();
  switch (tag) {
    case Estimand::ATE:
    case Estimand::LATE: {
      const double den =
          rho[rho_index(TargetTag::D1, 1)] - rho[rho_index(TargetTag::D1, 0)];
      const Eigen::VectorXd contrast =
          psi.col(rho_index(TargetTag::Yu, 1)) - psi.col(rho_index(TargetTag::Yu, 0));
      out[0] = se_analytic(contrast, den);
      break;
    }
    case Estimand::LASF: {
      for (int d = 0; d <= 1; ++d) {
        const TargetTag num = d == 1 ? TargetTag::D1Yu : TargetTag::D0Yu;
        const TargetTag dent = d == 1 ? TargetTag::D1 : TargetTag::D0;
        const double den = rho[rho_index(dent, 1)] - rho[rho_index(dent, 0)];
        const Eigen::VectorXd contrast = psi.col(rho_index(num, 1)) - psi.col(rho_index(num, 0));
        out[d] = se_analytic(contrast, den);
      }
      break;
    }
    case Estimand::LASF_T: {
      for (int d = 0; d <= 1; ++d) {
        const TargetTag num = d == 1 ? TargetTag::D1Yu : TargetTag::D0Yu;
        const TargetTag dent = d == 1 ? TargetTag::D1 : TargetTag::D0;
        const double den = rho[rho_index(dent, 2)] - rho[rho_index(dent, 0)];
        const Eigen::VectorXd contrast = psi.col(rho_index(num, 2)) - psi.col(rho_index(num, 0));
        out[d] = se_analytic(contrast, den);
      }
      break;
    }
    default:
      break;  // difference-of-ratio and curve estimands: bootstrap SE only
  }
  return out;
}

}  // namespace pipeline_detail

/// Point estimates, bootstrap inference, and bands for one estimand.
inline EffectResult estimate_effect(Estimand tag, const ReducedForm& reduced,
                                    const EstimationConfig& cfg) {
  using namespace pipeline_detail;
  EffectResult out;
  out.tag = tag;

  switch (tag) {
    case Estimand::LQTE:
    case Estimand::LQTE_T:
      out.grid = cfg.taus.taus;
      break;
    case Estimand::LDTE:
    case Estimand::LDTE_T:
      out.grid = reduced.u_grid;
      break;
    case Estimand::LASF:
    case Estimand::LASF_T:
      out.grid = {0.0, 1.0};  // arm index
      break;
    default:
      out.grid = {kNaN};
      break;
  }

  std::vector<char> unreachable;
  if (tag == Estimand::LQTE || tag == Estimand::LQTE_T) {
    // invert the point curves directly so per-tau flags survive into the table
    const bool on_treated = (tag == Estimand::LQTE_T);
    EffectCurve c1, c0;
    c1.grid = reduced.u_grid;
    c0.grid = reduced.u_grid;
    c1.values.resize(static_cast<Eigen::Index>(reduced.rho.size()));
    c0.values.resize(static_cast<Eigen::Index>(reduced.rho.size()));
    for (std::size_t k = 0; k < reduced.rho.size(); ++k) {
      c1.values[static_cast<Eigen::Index>(k)] = on_treated
                                                    ? lasf_t(reduced.rho[k], 1, cfg.denom_tol)
                                                    : lasf(reduced.rho[k], 1, cfg.denom_tol);
      c0.values[static_cast<Eigen::Index>(k)] = on_treated
                                                    ? lasf_t(reduced.rho[k], 0, cfg.denom_tol)
                                                    : lasf(reduced.rho[k], 0, cfg.denom_tol);
    }
    const EffectCurve point = lqte(c1, c0, cfg.taus, on_treated);
    out.estimates = point.values;
    out.flags = point.flags;
    unreachable.assign(point.flags.size(), 0);
    for (std::size_t t = 0; t < point.flags.size(); ++t) {
      unreachable[t] = point.flags[t] == InvertStatus::NotReached;
    }
  }

  const EffectFunctional fn =
      make_functional(tag, reduced.u_grid, cfg.taus, cfg.denom_tol,
                      unreachable.empty() ? nullptr : &unreachable);
  if (out.estimates.size() == 0) out.estimates = fn(reduced.rho);

  const BootstrapResult boot = bootstrap_effects(reduced, fn, cfg.bootstrap_b, cfg.multiplier,
                                                 cfg.seed, cfg.weight_param);
  out.flagged_fraction = boot.flagged_fraction;
  out.warning = boot.warning;
  if (cfg.keep_draws) {
    out.draws = boot.draws;
    out.draw_flags = boot.flagged;
  }

  const BandResult bands = uniform_band(out.estimates, boot, cfg.band_level);
  out.se_bootstrap = bands.se;
  out.pointwise_lo = bands.pointwise_lo;
  out.pointwise_hi = bands.pointwise_hi;
  out.uniform_lo = bands.uniform_lo;
  out.uniform_hi = bands.uniform_hi;
  out.critical_value = bands.critical_value;
  out.se_analytic = analytic_se(tag, reduced, out.estimates.size());
  return out;
}

/// Full estimation driver: dictionary, nuisance fits, reduced forms, effects.
inline EstimationOutput run_estimation(const RawData& raw, const EstimationConfig& cfg) {
  if (cfg.estimands.empty()) throw std::invalid_argument("run_estimation: no estimands");
  for (Estimand e : cfg.estimands) {
    if ((e == Estimand::ATE || e == Estimand::ATE_T) && !cfg.exogenous) {
      throw std::invalid_argument(
          "run_estimation: ATE/ATE-T require the exogenous declaration (d == z)");
    }
  }
  if (cfg.exogenous) {
    for (Eigen::Index i = 0; i < raw.n(); ++i) {
      if (raw.d[i] != raw.z[i]) {
        throw std::invalid_argument("run_estimation: exogenous declared but d != z at row " +
                                    std::to_string(i));
      }
    }
  }
  if (cfg.one_sided_compliance) {
    for (Eigen::Index i = 0; i < raw.n(); ++i) {
      if (raw.z[i] == 0.0 && raw.d[i] != 0.0) {
        throw std::invalid_argument(
            "run_estimation: one-sided compliance declared but d=1, z=0 at row " +
            std::to_string(i));
      }
    }
  }

  EstimationOutput out;
  const PipelineDesign design = build_design(raw, cfg);
  out.dictionary_columns = design.F.p();
  out.pruned_columns = design.pruned;

  const auto is_scalar_estimand = [](Estimand e) {
    return e == Estimand::ATE || e == Estimand::ATE_T || e == Estimand::LATE ||
           e == Estimand::LATE_T || e == Estimand::LASF || e == Estimand::LASF_T;
  };

  if (cfg.needs_scalars()) {
    std::vector<FitRecord> records;
    try {
      const PropensityFit prop = fit_propensity(raw, design.F, cfg, /*d_u=*/0, records);
      const TreatmentCells treat = fit_treatment_cells(raw, design.F, prop, cfg, 0, records);
      const ReducedForm reduced = scalar_reduced_form(raw, design.F, prop, treat, cfg, records);
      out.trimmed_count_scalar = reduced.trimmed_count;
      if (cfg.keep_reduced_form) out.reduced_scalar = reduced;
      for (Estimand e : cfg.estimands) {
        if (!is_scalar_estimand(e)) continue;
        try {
          out.effects.push_back(estimate_effect(e, reduced, cfg));
        } catch (const std::exception& ex) {
          out.failures.emplace_back(e, ex.what());
        }
      }
    } catch (const std::exception& ex) {
      for (Estimand e : cfg.estimands) {
        if (is_scalar_estimand(e)) out.failures.emplace_back(e, ex.what());
      }
    }
    for (auto& r : records) out.fits.push_back(std::move(r));
  }

  if (cfg.needs_curves()) {
    std::vector<FitRecord> records;
    try {
      const PropensityFit prop = fit_propensity(raw, design.F, cfg, /*d_u=*/1, records);
      const TreatmentCells treat = fit_treatment_cells(raw, design.F, prop, cfg, 1, records);
      const std::vector<double> u_grid = percentile_grid(raw.y, cfg.u_lo, cfg.u_hi, cfg.u_step);
      const ReducedForm reduced =
          curve_reduced_form(raw, design.F, prop, treat, cfg, u_grid, records);
      out.trimmed_count_curves = reduced.trimmed_count;
      if (cfg.keep_reduced_form) out.reduced_curves = reduced;
      for (Estimand e : cfg.estimands) {
        if (is_scalar_estimand(e)) continue;
        try {
          out.effects.push_back(estimate_effect(e, reduced, cfg));
        } catch (const std::exception& ex) {
          out.failures.emplace_back(e, ex.what());
        }
      }
    } catch (const std::exception& ex) {
      for (Estimand e : cfg.estimands) {
        if (!is_scalar_estimand(e)) out.failures.emplace_back(e, ex.what());
      }
    }
    for (auto& r : records) out.fits.push_back(std::move(r));
  }
  return out;
}

}  // namespace hdte
