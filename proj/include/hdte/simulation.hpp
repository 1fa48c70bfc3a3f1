#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdte/bootstrap.hpp"
#include "hdte/dictionary.hpp"
#include "hdte/lasso_linear.hpp"
#include "hdte/lasso_logistic.hpp"
#include "hdte/math.hpp"
#include "hdte/parallel.hpp"
#include "hdte/reduced_form.hpp"
#include "hdte/rng.hpp"

namespace hdte {

/// Size-study configuration. The data model per cell (r2_d, r2_y):
///   x ~ N(0, Sigma), Sigma_jk = base^|j-k|
///   d = 1{ L(x'(c_d theta0)) > v },  v ~ U(0,1)
///   y = d * x'(c_y theta0) + zeta,   zeta ~ N(0,1)
/// with theta0_j = 1/j^2 and (c_d, c_y) chosen to hit the cell's R^2 targets.
struct SimConfig {
  int n = 200;
  int p = 250;
  std::vector<double> r2_d_grid = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<double> r2_y_grid = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  int replications = 500;
  double nominal_level = 0.05;
  std::uint64_t master_seed = 20240001;
  double toeplitz_base = 0.5;
  double trim_eps = 1e-12;
  PenaltyConfig penalty;  // shared tuning for the nuisance fits
  long ate_oracle_draws = 1000000;

  void validate() const {
    if (n < 10 || p < 1) throw std::invalid_argument("SimConfig: bad n or p");
    if (replications < 0) throw std::invalid_argument("SimConfig: bad replication count");
    for (double r : r2_d_grid) {
      if (!(r >= 0.0 && r < 1.0)) throw std::invalid_argument("SimConfig: R^2 must be in [0,1)");
    }
    for (double r : r2_y_grid) {
      if (!(r >= 0.0 && r < 1.0)) throw std::invalid_argument("SimConfig: R^2 must be in [0,1)");
    }
  }
};

inline Eigen::VectorXd theta0_vector(int p) {
  Eigen::VectorXd t(p);
  for (int j = 0; j < p; ++j) t[j] = 1.0 / ((j + 1.0) * (j + 1.0));
  return t;
}

/// theta' Sigma theta for the Toeplitz correlation Sigma_jk = base^|j-k|,
/// evaluated by the explicit double sum.
inline double toeplitz_quad_form(const Eigen::VectorXd& theta, double base) {
  const int p = static_cast<int>(theta.size());
  double acc = 0.0;
  for (int j = 0; j < p; ++j) {
    for (int k = 0; k < p; ++k) {
      acc += theta[j] * theta[k] * std::pow(base, std::abs(j - k));
    }
  }
  return acc;
}

struct CoefScales {
  double c_d = 0.0;
  double c_y = 0.0;
};

/// Signal strengths hitting the cell's R^2 targets:
///   c_d = sqrt( (pi^2/3) R2_d / ((1 - R2_d) theta'Sigma theta) )
///   c_y = sqrt(          R2_y / ((1 - R2_y) theta'Sigma theta) )
inline CoefScales coef_scales(double r2_d, double r2_y, const Eigen::VectorXd& theta0,
                              double toeplitz_base) {
  if (!(r2_d < 1.0 && r2_y < 1.0)) throw std::invalid_argument("coef_scales: R^2 must be < 1");
  const double quad = toeplitz_quad_form(theta0, toeplitz_base);
  const double pi = 3.14159265358979323846;
  const double pi2_3 = pi * pi / 3.0;
  CoefScales s;
  s.c_d = std::sqrt(pi2_3 * r2_d / ((1.0 - r2_d) * quad));
  s.c_y = std::sqrt(r2_y / ((1.0 - r2_y) * quad));
  return s;
}

/// One row of AR(1)-correlated standard normals; the recursion is exactly the
/// Cholesky factor of the Toeplitz correlation applied to iid normals.
inline void draw_ar1_row(Rng& rng, double base, Eigen::RowVectorXd& row) {
  const double carry = std::sqrt(1.0 - base * base);
  double prev = rng.normal();
  row[0] = prev;
  for (Eigen::Index j = 1; j < row.size(); ++j) {
    prev = base * prev + carry * rng.normal();
    row[j] = prev;
  }
}

struct SimDraw {
  Eigen::VectorXd y;
  Eigen::VectorXd d;
  Eigen::MatrixXd x;
};

/// One replication dataset; bit-identical regeneration for a fixed rep_seed.
/// Draw order: covariate rows, then the treatment uniforms, then outcome noise.
inline SimDraw gen_dgp(const SimConfig& cfg, const CoefScales& scales, std::uint64_t rep_seed) {
  Rng rng(rep_seed);
  SimDraw out;
  out.x.resize(cfg.n, cfg.p);
  Eigen::RowVectorXd row(cfg.p);
  for (int i = 0; i < cfg.n; ++i) {
    draw_ar1_row(rng, cfg.toeplitz_base, row);
    out.x.row(i) = row;
  }

  const Eigen::VectorXd theta0 = theta0_vector(cfg.p);
  const Eigen::VectorXd index_d = out.x * (scales.c_d * theta0);
  const Eigen::VectorXd index_y = out.x * (scales.c_y * theta0);

  out.d.resize(cfg.n);
  for (int i = 0; i < cfg.n; ++i) {
    out.d[i] = (logistic(index_d[i]) > rng.uniform()) ? 1.0 : 0.0;
  }
  out.y.resize(cfg.n);
  for (int i = 0; i < cfg.n; ++i) {
    out.y[i] = out.d[i] * index_y[i] + rng.normal();
  }
  return out;
}

struct AteEstimate {
  double estimate = 0.0;
  double se = 0.0;
  bool degenerate = false;  // naive fit selected nothing usable
};

/// Treatment-interacted dictionary ((1-d)[1 x]', d[1 x]')' used by both
/// estimators' outcome regressions. Arm intercepts sit at columns 0 and p+1.
inline Eigen::MatrixXd interacted_outcome_design(const Eigen::MatrixXd& x,
                                                 const Eigen::VectorXd& d) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p1 = x.cols() + 1;
  Eigen::MatrixXd design(n, 2 * p1);
  design.col(0) = (1.0 - d.array()).matrix();
  design.col(p1) = d;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    design.col(1 + j) = (1.0 - d.array()) * x.col(j).array();
    design.col(p1 + 1 + j) = d.array() * x.col(j).array();
  }
  return design;
}

struct OutcomeFit {
  Eigen::VectorXd ghat1;
  Eigen::VectorXd ghat0;
  PenalizedFit fit;
  std::vector<Eigen::Index> support;  // selected + forced columns, sorted
};

/// Post-selection regression of y on the treatment-interacted design, arm
/// intercepts kept unpenalized. Shared by the naive and orthogonal estimators.
inline OutcomeFit fit_outcome_regression(const SimDraw& data, const PenaltyConfig& base_cfg) {
  const Eigen::Index p1 = data.x.cols() + 1;
  const Eigen::MatrixXd design = interacted_outcome_design(data.x, data.d);
  PenaltyConfig cfg = base_cfg;
  cfg.unpenalized = {0, p1};
  OutcomeFit out;
  out.fit = fit_with_iterated_loadings(design, data.y, cfg);

  out.support = out.fit.support;
  for (Eigen::Index j : cfg.unpenalized) {
    if (std::find(out.support.begin(), out.support.end(), j) == out.support.end()) {
      out.support.push_back(j);
    }
  }
  std::sort(out.support.begin(), out.support.end());

  const Eigen::VectorXd& theta = out.fit.theta_post;
  Eigen::MatrixXd base(data.x.rows(), p1);
  base.col(0).setOnes();
  base.rightCols(data.x.cols()) = data.x;
  out.ghat0 = base * theta.head(p1);
  out.ghat1 = base * theta.tail(p1);
  return out;
}

/// Plug-in mean difference of the fitted arms with a fixed-design OLS sandwich
/// SE on the selected columns; selection and first-stage noise are deliberately
/// ignored, which is the point of the comparison.
inline AteEstimate naive_ate_from_fit(const SimDraw& data, const OutcomeFit& outcome) {
  const Eigen::Index n = data.x.rows();
  const Eigen::Index p1 = data.x.cols() + 1;
  AteEstimate out;
  out.estimate = (outcome.ghat1 - outcome.ghat0).mean();

  if (outcome.support.empty()) {
    out.degenerate = true;
    return out;
  }
  const Eigen::MatrixXd design = interacted_outcome_design(data.x, data.d);
  const Eigen::Index k = static_cast<Eigen::Index>(outcome.support.size());
  Eigen::MatrixXd W(n, k);
  Eigen::VectorXd contrast = Eigen::VectorXd::Zero(k);
  for (Eigen::Index c = 0; c < k; ++c) {
    const Eigen::Index j = outcome.support[c];
    W.col(c) = design.col(j);
    // mean over rows of (arm-1 row - arm-0 row) for this column
    if (j >= p1) {
      contrast[c] = (j == p1) ? 1.0 : data.x.col(j - p1 - 1).mean();
    } else {
      contrast[c] = (j == 0) ? -1.0 : -data.x.col(j - 1).mean();
    }
  }
  const Eigen::VectorXd resid = data.y - W * outcome.fit.theta_post(outcome.support);
  const Eigen::MatrixXd gram = W.transpose() * W;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success) {
    out.degenerate = true;
    return out;
  }
  const Eigen::MatrixXd meat = W.transpose() * resid.array().square().matrix().asDiagonal() * W;
  const Eigen::VectorXd ginv_c = ldlt.solve(contrast);
  const double var = ginv_c.dot(meat * ginv_c);
  out.se = std::sqrt(std::max(var, 0.0));
  return out;
}

inline AteEstimate naive_ate(const SimDraw& data, const PenaltyConfig& cfg) {
  return naive_ate_from_fit(data, fit_outcome_regression(data, cfg));
}

/// Doubly-robust estimate from explicit nuisance values:
///   Delta = En[ d(y - g1)/m + g1 ] - En[ (1-d)(y - g0)/(1 - m) + g0 ]
/// with the analytic influence-function SE.
inline AteEstimate orthogonal_ate_from_nuisances(const Eigen::VectorXd& y,
                                                 const Eigen::VectorXd& d,
                                                 const Eigen::VectorXd& ghat1,
                                                 const Eigen::VectorXd& ghat0,
                                                 const Eigen::VectorXd& mhat) {
  const MomentEstimate a1 = estimate_alpha(y, 1, d, ghat1, mhat);
  const MomentEstimate a0 = estimate_alpha(y, 0, d, ghat0, mhat);
  AteEstimate out;
  out.estimate = a1.value - a0.value;
  out.se = se_analytic(a1.psi - a0.psi, 1.0);
  return out;
}

/// Orthogonal-moment ATE: outcome arms from the shared post-selection
/// regression, propensity from an iterated-loadings l1-logistic fit (intercept
/// unpenalized), trimming applied before the moment evaluation.
inline AteEstimate orthogonal_ate(const SimDraw& data, const PenaltyConfig& base_cfg,
                                  double trim_eps, const OutcomeFit* shared_outcome = nullptr) {
  OutcomeFit local;
  if (!shared_outcome) local = fit_outcome_regression(data, base_cfg);
  const OutcomeFit& outcome = shared_outcome ? *shared_outcome : local;

  Eigen::MatrixXd pdesign(data.x.rows(), data.x.cols() + 1);
  pdesign.col(0).setOnes();
  pdesign.rightCols(data.x.cols()) = data.x;
  PenaltyConfig pcfg = base_cfg;
  pcfg.unpenalized = {0};
  const LogisticFit pfit = fit_with_iterated_loadings_logistic(pdesign, data.d, pcfg);
  Eigen::VectorXd mhat(data.x.rows());
  const Eigen::VectorXd link = pdesign * pfit.theta_post;
  for (Eigen::Index i = 0; i < mhat.size(); ++i) mhat[i] = logistic(link[i]);
  mhat = trim_propensity(mhat, trim_eps).mhat;

  return orthogonal_ate_from_nuisances(data.y, data.d, outcome.ghat1, outcome.ghat0, mhat);
}

struct SizeCell {
  double r2_d = 0.0;
  double r2_y = 0.0;
  double true_ate = 0.0;
  double reject_orthogonal = 0.0;
  double reject_naive = 0.0;
  double mcse_orthogonal = 0.0;
  double mcse_naive = 0.0;
  int replications = 0;
  int failures_orthogonal = 0;
  int failures_naive = 0;
};

struct SizeTable {
  std::vector<SizeCell> cells;
  SimConfig config;
};

/// Mean treatment-arm lift E[x'(c_y theta0)] by Monte Carlo; multiplied by c_y
/// this is the population average treatment effect of the data model.
inline double ate_oracle_base(const SimConfig& cfg, std::uint64_t seed) {
  const Eigen::VectorXd theta0 = theta0_vector(cfg.p);
  Rng rng(seed);
  Eigen::RowVectorXd row(cfg.p);
  double acc = 0.0;
  for (long r = 0; r < cfg.ate_oracle_draws; ++r) {
    draw_ar1_row(rng, cfg.toeplitz_base, row);
    acc += row * theta0;
  }
  return acc / static_cast<double>(cfg.ate_oracle_draws);
}

/// Rejection frequencies of the 5%-level t-tests for both estimators over the
/// R^2 grid. Replications are independent tasks; a fixed master seed makes the
/// whole table reproducible regardless of thread count.
inline SizeTable run_size_experiment(const SimConfig& cfg) {
  cfg.validate();
  if (cfg.replications == 0) throw std::invalid_argument("run_size_experiment: 0 replications");
  SizeTable table;
  table.config = cfg;

  const double crit = normal_quantile(1.0 - cfg.nominal_level / 2.0);
  const double oracle_base = ate_oracle_base(cfg, derive_seed(cfg.master_seed, 0xa7e0));

  struct RepOutcome {
    int reject_orth = 0, reject_naive = 0;
    int fail_orth = 0, fail_naive = 0;
  };

  std::size_t cell_index = 0;
  for (double r2d : cfg.r2_d_grid) {
    for (double r2y : cfg.r2_y_grid) {
      const CoefScales scales =
          coef_scales(r2d, r2y, theta0_vector(cfg.p), cfg.toeplitz_base);
      const double true_ate = scales.c_y * oracle_base;

      std::vector<RepOutcome> reps(static_cast<std::size_t>(cfg.replications));
      const std::uint64_t cell_seed = derive_seed(cfg.master_seed, cell_index + 1);
      parallel_for(reps.size(), [&](std::size_t r) {
        const std::uint64_t rep_seed = derive_seed(cell_seed, r);
        const SimDraw data = gen_dgp(cfg, scales, rep_seed);
        OutcomeFit outcome;
        bool outcome_ok = true;
        try {
          outcome = fit_outcome_regression(data, cfg.penalty);
        } catch (const std::exception&) {
          outcome_ok = false;
        }
        try {
          if (!outcome_ok) throw std::runtime_error("outcome fit failed");
          const AteEstimate nv = naive_ate_from_fit(data, outcome);
          if (nv.degenerate || !(nv.se > 0.0)) throw std::runtime_error("degenerate naive fit");
          reps[r].reject_naive = std::fabs(nv.estimate - true_ate) / nv.se > crit;
        } catch (const std::exception&) {
          reps[r].fail_naive = 1;
        }
        try {
          if (!outcome_ok) throw std::runtime_error("outcome fit failed");
          const AteEstimate orth =
              orthogonal_ate(data, cfg.penalty, cfg.trim_eps, &outcome);
          if (!(orth.se > 0.0)) throw std::runtime_error("degenerate orthogonal fit");
          reps[r].reject_orth = std::fabs(orth.estimate - true_ate) / orth.se > crit;
        } catch (const std::exception&) {
          reps[r].fail_orth = 1;
        }
      });

      SizeCell cell;
      cell.r2_d = r2d;
      cell.r2_y = r2y;
      cell.true_ate = true_ate;
      cell.replications = cfg.replications;
      int ok_orth = 0, ok_naive = 0, rej_orth = 0, rej_naive = 0;
      for (const RepOutcome& r : reps) {
        cell.failures_orthogonal += r.fail_orth;
        cell.failures_naive += r.fail_naive;
        if (!r.fail_orth) {
          ++ok_orth;
          rej_orth += r.reject_orth;
        }
        if (!r.fail_naive) {
          ++ok_naive;
          rej_naive += r.reject_naive;
        }
      }
      cell.reject_orthogonal = ok_orth > 0 ? static_cast<double>(rej_orth) / ok_orth : 0.0;
      cell.reject_naive = ok_naive > 0 ? static_cast<double>(rej_naive) / ok_naive : 0.0;
      cell.mcse_orthogonal =
          ok_orth > 0 ? std::sqrt(cell.reject_orthogonal * (1.0 - cell.reject_orthogonal) /
                                  static_cast<double>(ok_orth))
                      : 0.0;
      cell.mcse_naive = ok_naive > 0
                            ? std::sqrt(cell.reject_naive * (1.0 - cell.reject_naive) /
                                        static_cast<double>(ok_naive))
                            : 0.0;
      table.cells.push_back(cell);
      ++cell_index;
    }
  }
  return table;
}

}  // namespace hdte
