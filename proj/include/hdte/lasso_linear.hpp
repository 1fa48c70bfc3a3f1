#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdte/math.hpp"

namespace hdte {

/// Thrown when an l1 solver exhausts its sweep budget; carries the stationarity
/// residual at the point of failure.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double kkt_residual)
      : std::runtime_error(what), kkt_residual_(kkt_residual) {}
  double kkt_residual() const { return kkt_residual_; }

 private:
  double kkt_residual_;
};

/// Penalty tuning shared by the linear and logistic l1 fits.
///   lambda = c * sqrt(n) * Phi^{-1}(1 - gamma / (2 p n^{d_u}))
/// gamma <= 0 requests the default 0.1/log(n), resolved at fit time.
struct PenaltyConfig {
  double c = 1.1;
  double gamma = 0.0;
  int d_u = 0;
  int max_loading_iterations = 15;
  double loading_stop_tol = 1e-6;
  double loading_floor = 1e-6;  // relative to column RMS
  double kkt_tol = 1e-7;
  std::vector<Eigen::Index> unpenalized;  // columns exempted from the penalty
  Eigen::Index lambda_p = 0;  // dictionary size in the penalty tail bound;
                              // 0 means the fitted column count. Set larger when
                              // selection runs jointly across several designs.

  double resolved_gamma(Eigen::Index n) const {
    if (gamma > 0.0) return gamma;
    return 0.1 / std::log(static_cast<double>(n));
  }

  void validate() const {
    if (!(c > 1.0)) throw std::invalid_argument("PenaltyConfig: c must be > 1");
    if (gamma > 0.0 && !(gamma < 1.0)) {
      throw std::invalid_argument("PenaltyConfig: gamma must lie in (0,1)");
    }
    if (max_loading_iterations < 1) {
      throw std::invalid_argument("PenaltyConfig: need at least one loading iteration");
    }
  }
};

struct PenalizedFit {
  Eigen::VectorXd theta_lasso;
  std::vector<Eigen::Index> support;
  Eigen::VectorXd theta_post;
  Eigen::VectorXd loadings;
  double lambda = 0.0;
  int iterations_used = 0;
  double objective_value = 0.0;

  double kkt_residual = 0.0;
  std::vector<double> sweep_objectives;
  bool refit_dropped_columns = false;
  bool loadings_from_lasso_residuals = false;
};

inline double penalty_level(Eigen::Index n, Eigen::Index p, int d_u, double gamma, double c) {
  if (n < 1 || p < 1) throw std::invalid_argument("penalty_level: n and p must be >= 1");
  if (d_u < 0) throw std::invalid_argument("penalty_level: d_u must be >= 0");
  const double tail = gamma / (2.0 * static_cast<double>(p) *
                               std::pow(static_cast<double>(n), static_cast<double>(d_u)));
  if (!(tail > 0.0 && tail < 1.0)) {
    throw std::domain_error("penalty_level: quantile argument " + std::to_string(1.0 - tail) +
                            " outside (0,1); gamma too large for given p, n, d_u");
  }
  // Phi^{-1}(1 - tail) = -Phi^{-1}(tail); the lower-tail form stays accurate
  // when tail is far below machine epsilon relative to 1.
  return c * std::sqrt(static_cast<double>(n)) * -normal_quantile(tail);
}

namespace detail {

inline Eigen::VectorXd column_rms(const Eigen::MatrixXd& F) {
  const double n = static_cast<double>(F.rows());
  return (F.colwise().squaredNorm() / n).cwiseSqrt().transpose();
}

/// Applies the loading floor (relative to column RMS) and zeroes exempted columns.
inline Eigen::VectorXd floor_loadings(Eigen::VectorXd raw, const Eigen::MatrixXd& F,
                                      const PenaltyConfig& cfg) {
  const Eigen::VectorXd rms = column_rms(F);
  for (Eigen::Index j = 0; j < raw.size(); ++j) {
    const double fl = cfg.loading_floor * (rms[j] > 0.0 ? rms[j] : 1.0);
    raw[j] = std::max(raw[j], fl);
  }
  for (Eigen::Index j : cfg.unpenalized) raw[j] = 0.0;
  return raw;
}

}  // namespace detail

/// Loadings for the linear link: l_j = sqrt(En[f_j^2 (y - ybar)^2]), floored.
inline Eigen::VectorXd initial_loadings_linear(const Eigen::VectorXd& y, const Eigen::MatrixXd& F,
                                               const PenaltyConfig& cfg = {}) {
  if (F.rows() != y.size()) throw std::invalid_argument("initial_loadings_linear: size mismatch");
  const double n = static_cast<double>(F.rows());
  const Eigen::ArrayXd centered = y.array() - y.mean();
  Eigen::VectorXd raw(F.cols());
  for (Eigen::Index j = 0; j < F.cols(); ++j) {
    raw[j] = std::sqrt((F.col(j).array().square() * centered.square()).sum() / n);
  }
  return detail::floor_loadings(std::move(raw), F, cfg);
}

/// Loadings refreshed from fitted residuals: l_j = sqrt(En[f_j^2 r^2]), floored.
inline Eigen::VectorXd residual_loadings(const Eigen::VectorXd& resid, const Eigen::MatrixXd& F,
                                         const PenaltyConfig& cfg) {
  const double n = static_cast<double>(F.rows());
  Eigen::VectorXd raw(F.cols());
  for (Eigen::Index j = 0; j < F.cols(); ++j) {
    raw[j] = std::sqrt((F.col(j).array().square() * resid.array().square()).sum() / n);
  }
  return detail::floor_loadings(std::move(raw), F, cfg);
}

inline double lasso_linear_objective(const Eigen::MatrixXd& F, const Eigen::VectorXd& y,
                                     const Eigen::VectorXd& theta, double lambda,
                                     const Eigen::VectorXd& loadings) {
  const double n = static_cast<double>(F.rows());
  const double fit = 0.5 * (y - F * theta).squaredNorm() / n;
  const double pen = (lambda / n) * loadings.cwiseProduct(theta.cwiseAbs()).sum();
  return fit + pen;
}

/// Weighted-l1 linear Lasso by cyclic coordinate descent with active-set sweeps.
/// Exits once the stationarity certificate holds at kkt_tol:
///   |En[f_j (y - f'theta)]| <= (lambda/n) l_j + tol for every j, with equality
///   (up to tol) in the gradient direction on the active set.
inline PenalizedFit fit_lasso_linear(const Eigen::MatrixXd& F, const Eigen::VectorXd& y,
                                     double lambda, const Eigen::VectorXd& loadings,
                                     double kkt_tol = 1e-7,
                                     const Eigen::VectorXd* warm_start = nullptr) {
  const Eigen::Index n = F.rows();
  const Eigen::Index p = F.cols();
  if (y.size() != n) throw std::invalid_argument("fit_lasso_linear: size mismatch");
  if (loadings.size() != p) throw std::invalid_argument("fit_lasso_linear: loadings size");
  if ((loadings.array() < 0.0).any()) {
    throw std::invalid_argument("fit_lasso_linear: negative loading");
  }
  const double dn = static_cast<double>(n);

  Eigen::VectorXd theta = warm_start ? *warm_start : Eigen::VectorXd::Zero(p);
  Eigen::VectorXd ss = F.colwise().squaredNorm() / dn;  // En[f_j^2]
  Eigen::VectorXd thr = (lambda / dn) * loadings;
  Eigen::VectorXd r = y - F * theta;

  PenalizedFit fit;
  fit.lambda = lambda;
  fit.loadings = loadings;

  // 10p sweeps with early exit; floored so small, ill-conditioned dictionaries
  // still get a workable budget (inner active-set sweeps count too)
  const long max_sweeps = std::max<long>(10 * static_cast<long>(p), 1000);
  std::vector<char> active(p, 0);
  for (Eigen::Index j = 0; j < p; ++j) active[j] = theta[j] != 0.0;

  auto update_coordinate = [&](Eigen::Index j) -> double {
    if (ss[j] <= 0.0) return 0.0;
    const double old = theta[j];
    const double zj = F.col(j).dot(r) / dn + ss[j] * old;
    double next;
    if (zj > thr[j]) {
      next = (zj - thr[j]) / ss[j];
    } else if (zj < -thr[j]) {
      next = (zj + thr[j]) / ss[j];
    } else {
      next = 0.0;
    }
    if (next != old) {
      theta[j] = next;
      r += F.col(j) * (old - next);
      active[j] = next != 0.0;
    }
    return std::fabs(next - old) * std::sqrt(ss[j]);
  };

  auto kkt_residual = [&]() -> double {
    r = y - F * theta;  // refresh: incremental updates drift over many sweeps
    double worst = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      const double gj = F.col(j).dot(r) / dn;
      if (theta[j] != 0.0) {
        worst = std::max(worst, std::fabs(gj - thr[j] * (theta[j] > 0.0 ? 1.0 : -1.0)));
      } else {
        worst = std::max(worst, std::fabs(gj) - thr[j]);
      }
    }
    return worst;
  };

  const double inner_tol =
      std::max(1e-13 * std::max(1.0, std::sqrt(y.squaredNorm() / dn)), 0.02 * kkt_tol);
  long sweeps = 0;
  double last_kkt = 0.0;
  while (true) {
    double delta = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) delta = std::max(delta, update_coordinate(j));
    ++sweeps;
    fit.sweep_objectives.push_back(lasso_linear_objective(F, y, theta, lambda, loadings));

    while (delta > inner_tol && sweeps < max_sweeps) {
      delta = 0.0;
      for (Eigen::Index j = 0; j < p; ++j) {
        if (active[j]) delta = std::max(delta, update_coordinate(j));
      }
      ++sweeps;
    }

    last_kkt = kkt_residual();
    if (last_kkt <= kkt_tol) break;
    if (sweeps >= max_sweeps) {
      throw ConvergenceError("fit_lasso_linear: sweep budget exhausted, KKT residual " +
                                 std::to_string(last_kkt),
                             last_kkt);
    }
  }

  fit.theta_lasso = theta;
  fit.kkt_residual = last_kkt;
  fit.objective_value = lasso_linear_objective(F, y, theta, lambda, loadings);
  for (Eigen::Index j = 0; j < p; ++j) {
    if (theta[j] != 0.0) fit.support.push_back(j);
  }
  return fit;
}

struct RefitResult {
  Eigen::VectorXd theta;
  bool dropped_columns = false;
};

/// Exact least squares restricted to `support`; rank-deficient subsets are
/// repaired by dropping later columns that are numerically in the span of
/// earlier ones, mirroring the dictionary pruning rule.
inline RefitResult refit_post_lasso(const Eigen::MatrixXd& F, const Eigen::VectorXd& y,
                                    const std::vector<Eigen::Index>& support) {
  const Eigen::Index n = F.rows();
  RefitResult out;
  out.theta = Eigen::VectorXd::Zero(F.cols());
  if (support.empty()) return out;
  if (static_cast<Eigen::Index>(support.size()) > n) {
    throw std::invalid_argument("refit_post_lasso: support larger than the sample");
  }

  std::vector<Eigen::Index> kept;
  Eigen::MatrixXd basis(n, 0);
  for (Eigen::Index j : support) {
    if (j < 0 || j >= F.cols()) throw std::invalid_argument("refit_post_lasso: bad column index");
    Eigen::VectorXd col = F.col(j);
    Eigen::VectorXd resid = col;
    if (basis.cols() > 0) {
      resid -= basis * (basis.transpose() * col);
      resid -= basis * (basis.transpose() * resid);
    }
    if (resid.norm() <= 1e-10 * col.norm() || col.norm() == 0.0) {
      out.dropped_columns = true;
      continue;
    }
    basis.conservativeResize(Eigen::NoChange, basis.cols() + 1);
    basis.col(basis.cols() - 1) = resid / resid.norm();
    kept.push_back(j);
  }
  if (kept.empty()) {
    out.dropped_columns = true;
    return out;
  }

  Eigen::MatrixXd sub(n, static_cast<Eigen::Index>(kept.size()));
  for (std::size_t k = 0; k < kept.size(); ++k) sub.col(static_cast<Eigen::Index>(k)) = F.col(kept[k]);
  const Eigen::VectorXd beta = sub.colPivHouseholderQr().solve(y);
  for (std::size_t k = 0; k < kept.size(); ++k) out.theta[kept[k]] = beta[static_cast<Eigen::Index>(k)];
  return out;
}

/// Lasso -> Post-Lasso -> loading refresh, iterated to a loading fixed point or
/// the iteration cap. The returned fit carries the coefficients of the last
/// Lasso/refit pass and the loadings that produced them.
inline PenalizedFit fit_with_iterated_loadings(const Eigen::MatrixXd& F, const Eigen::VectorXd& y,
                                               const PenaltyConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = F.rows();
  const Eigen::Index pen_p = cfg.lambda_p > 0 ? cfg.lambda_p : F.cols();
  const double lambda = penalty_level(n, pen_p, cfg.d_u, cfg.resolved_gamma(n), cfg.c);

  Eigen::VectorXd loadings = initial_loadings_linear(y, F, cfg);
  PenalizedFit fit;
  for (int k = 1; k <= cfg.max_loading_iterations; ++k) {
    fit = fit_lasso_linear(F, y, lambda, loadings, cfg.kkt_tol,
                           k > 1 ? &fit.theta_lasso : nullptr);
    fit.iterations_used = k;

    std::vector<Eigen::Index> support = fit.support;
    for (Eigen::Index j : cfg.unpenalized) {
      if (std::find(support.begin(), support.end(), j) == support.end()) support.push_back(j);
    }
    std::sort(support.begin(), support.end());

    Eigen::VectorXd resid;
    try {
      RefitResult refit = refit_post_lasso(F, y, support);
      fit.theta_post = refit.theta;
      fit.refit_dropped_columns = refit.dropped_columns;
      resid = y - F * fit.theta_post;
    } catch (const std::exception&) {
      fit.theta_post = fit.theta_lasso;
      fit.loadings_from_lasso_residuals = true;
      resid = y - F * fit.theta_lasso;
    }

    const Eigen::VectorXd next = residual_loadings(resid, F, cfg);
    const double change = (next - loadings).norm();
    loadings = next;
    if (change < cfg.loading_stop_tol) break;
  }
  return fit;
}

}  // namespace hdte
