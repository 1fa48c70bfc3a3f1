#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "hdte/lasso_linear.hpp"
#include "hdte/math.hpp"

namespace hdte {

struct LogisticFit {
  Eigen::VectorXd theta_lasso;
  std::vector<Eigen::Index> support;
  Eigen::VectorXd theta_post;
  Eigen::VectorXd loadings;
  double lambda = 0.0;
  int iterations_used = 0;
  double objective_value = 0.0;

  double kkt_residual = 0.0;
  bool separation_flag = false;
  bool ridge_jittered = false;
  bool loadings_from_lasso_residuals = false;
};

/// Loadings for the logistic link: l_j = 0.5 sqrt(En[f_j^2]), floored.
inline Eigen::VectorXd initial_loadings_logistic(const Eigen::MatrixXd& F,
                                                 const PenaltyConfig& cfg = {}) {
  const double n = static_cast<double>(F.rows());
  Eigen::VectorXd raw(F.cols());
  for (Eigen::Index j = 0; j < F.cols(); ++j) {
    raw[j] = 0.5 * std::sqrt(F.col(j).squaredNorm() / n);
  }
  return detail::floor_loadings(std::move(raw), F, cfg);
}

inline double logistic_objective(const Eigen::MatrixXd& F, const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& theta, double lambda,
                                 const Eigen::VectorXd& loadings) {
  const double n = static_cast<double>(F.rows());
  const Eigen::VectorXd t = F * theta;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < t.size(); ++i) loss += logistic_loss(y[i], t[i]);
  return loss / n + (lambda / n) * loadings.cwiseProduct(theta.cwiseAbs()).sum();
}

/// l1-penalized logistic regression by proximal Newton: IRLS quadratic model,
/// weighted coordinate descent inner loop, backtracking on the true objective.
/// Certificate at exit: |En[f_j (L(f'theta) - y)]| <= (lambda/n) l_j + tol for
/// all j, with gradient/sign consistency on the active set.
inline LogisticFit fit_l1_logistic(const Eigen::MatrixXd& F, const Eigen::VectorXd& y,
                                   double lambda, const Eigen::VectorXd& loadings,
                                   double kkt_tol = 1e-7,
                                   const Eigen::VectorXd* warm_start = nullptr) {
  const Eigen::Index n = F.rows();
  const Eigen::Index p = F.cols();
  if (y.size() != n) throw std::invalid_argument("fit_l1_logistic: size mismatch");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) {
      throw std::invalid_argument("fit_l1_logistic: response must be 0/1");
    }
  }
  const bool constant_response = (y.minCoeff() == y.maxCoeff());
  if (constant_response && (loadings.array() == 0.0).any()) {
    throw std::invalid_argument(
        "fit_l1_logistic: unbounded direction (constant response with unpenalized column)");
  }
  const double dn = static_cast<double>(n);

  Eigen::VectorXd theta = warm_start ? *warm_start : Eigen::VectorXd::Zero(p);
  const Eigen::VectorXd thr = (lambda / dn) * loadings;

  LogisticFit fit;
  fit.lambda = lambda;
  fit.loadings = loadings;

  auto kkt_residual = [&](const Eigen::VectorXd& grad, const Eigen::VectorXd& th) -> double {
    double worst = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (th[j] != 0.0) {
        worst = std::max(worst, std::fabs(grad[j] + thr[j] * (th[j] > 0.0 ? 1.0 : -1.0)));
      } else {
        worst = std::max(worst, std::fabs(grad[j]) - thr[j]);
      }
    }
    return worst;
  };

  double objective = logistic_objective(F, y, theta, lambda, loadings);
  const int max_outer = 300;
  double last_kkt = 0.0;
  for (int outer = 0; outer < max_outer; ++outer) {
    const Eigen::VectorXd t = F * theta;
    Eigen::VectorXd mu(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      mu[i] = logistic(t[i]);
      w[i] = std::max(mu[i] * (1.0 - mu[i]), 1e-6);
    }
    const Eigen::VectorXd grad = F.transpose() * (mu - y) / dn;
    last_kkt = kkt_residual(grad, theta);
    if (last_kkt <= kkt_tol) break;
    if (theta.lpNorm<Eigen::Infinity>() > 1e4) {
      throw std::runtime_error("fit_l1_logistic: unbounded direction detected");
    }

    // Working response for the quadratic model around theta.
    Eigen::VectorXd ytilde = t + (y - mu).cwiseQuotient(w);
    Eigen::VectorXd cand = theta;
    Eigen::VectorXd rw = ytilde - F * cand;
    Eigen::VectorXd sw(p);
    for (Eigen::Index j = 0; j < p; ++j) {
      sw[j] = (w.array() * F.col(j).array().square()).sum() / dn;
    }
    for (int sweep = 0; sweep < 50; ++sweep) {
      double delta = 0.0;
      for (Eigen::Index j = 0; j < p; ++j) {
        if (sw[j] <= 0.0) continue;
        const double old = cand[j];
        const double zj = (w.array() * F.col(j).array() * rw.array()).sum() / dn + sw[j] * old;
        double next;
        if (zj > thr[j]) {
          next = (zj - thr[j]) / sw[j];
        } else if (zj < -thr[j]) {
          next = (zj + thr[j]) / sw[j];
        } else {
          next = 0.0;
        }
        if (next != old) {
          cand[j] = next;
          rw += F.col(j) * (old - next);
          delta = std::max(delta, std::fabs(next - old) * std::sqrt(sw[j]));
        }
      }
      if (delta < 1e-12) break;
    }

    // Backtrack along the proximal Newton direction on the true objective.
    const Eigen::VectorXd dir = cand - theta;
    if (dir.lpNorm<Eigen::Infinity>() == 0.0) break;
    double alpha = 1.0;
    bool accepted = false;
    for (int h = 0; h < 60; ++h) {
      const Eigen::VectorXd trial = theta + alpha * dir;
      const double obj = logistic_objective(F, y, trial, lambda, loadings);
      if (obj <= objective) {
        theta = trial;
        objective = obj;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) break;  // no descent left at machine precision
  }

  {
    const Eigen::VectorXd t = F * theta;
    Eigen::VectorXd mu(n);
    for (Eigen::Index i = 0; i < n; ++i) mu[i] = logistic(t[i]);
    const Eigen::VectorXd grad = F.transpose() * (mu - y) / dn;
    last_kkt = kkt_residual(grad, theta);
  }
  if (last_kkt > kkt_tol) {
    throw ConvergenceError("fit_l1_logistic: stationarity certificate not met, residual " +
                               std::to_string(last_kkt),
                           last_kkt);
  }

  fit.theta_lasso = theta;
  fit.kkt_residual = last_kkt;
  fit.objective_value = objective;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (theta[j] != 0.0) fit.support.push_back(j);
  }
  return fit;
}

struct LogisticRefitResult {
  Eigen::VectorXd theta;
  bool separation_flag = false;
  bool ridge_jittered = false;
};

/// Unpenalized logistic MLE on the support by damped Newton. Quasi-separation is
/// contained by capping coefficients at +-cap; singular Hessians get a ridge
/// jitter of 1e-8 * trace.
inline LogisticRefitResult refit_logistic(const Eigen::MatrixXd& F, const Eigen::VectorXd& y,
                                          const std::vector<Eigen::Index>& support,
                                          double cap = 30.0) {
  const Eigen::Index n = F.rows();
  LogisticRefitResult out;
  out.theta = Eigen::VectorXd::Zero(F.cols());
  if (support.empty()) return out;
  if (static_cast<Eigen::Index>(support.size()) > n) {
    throw std::invalid_argument("refit_logistic: support larger than the sample");
  }
  const Eigen::Index k = static_cast<Eigen::Index>(support.size());
  Eigen::MatrixXd sub(n, k);
  for (Eigen::Index c = 0; c < k; ++c) sub.col(c) = F.col(support[c]);
  const double dn = static_cast<double>(n);

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
  auto loss_at = [&](const Eigen::VectorXd& b) {
    const Eigen::VectorXd t = sub * b;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) loss += logistic_loss(y[i], t[i]);
    return loss / dn;
  };

  double loss = loss_at(beta);
  for (int step = 0; step < 100; ++step) {
    const Eigen::VectorXd t = sub * beta;
    Eigen::VectorXd mu(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      mu[i] = logistic(t[i]);
      w[i] = mu[i] * (1.0 - mu[i]);
    }
    const Eigen::VectorXd grad = sub.transpose() * (mu - y) / dn;
    Eigen::MatrixXd hess = sub.transpose() * w.asDiagonal() * sub / dn;

    Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
    Eigen::VectorXd dir = -ldlt.solve(grad);
    if (ldlt.info() != Eigen::Success || !dir.allFinite() ||
        ldlt.vectorD().minCoeff() <= 1e-14 * hess.trace()) {
      const double jitter = 1e-8 * hess.trace();
      hess.diagonal().array() += jitter;
      dir = -hess.ldlt().solve(grad);
      out.ridge_jittered = true;
      if (!dir.allFinite()) break;
    }

    double alpha = 1.0;
    bool moved = false;
    for (int h = 0; h < 60; ++h) {
      Eigen::VectorXd trial = beta + alpha * dir;
      bool capped = false;
      for (Eigen::Index c = 0; c < k; ++c) {
        if (trial[c] > cap) {
          trial[c] = cap;
          capped = true;
        } else if (trial[c] < -cap) {
          trial[c] = -cap;
          capped = true;
        }
      }
      const double trial_loss = loss_at(trial);
      if (trial_loss <= loss) {
        const double rel_change = std::fabs(loss - trial_loss) / std::max(1e-30, std::fabs(loss));
        beta = trial;
        loss = trial_loss;
        moved = true;
        if (capped) out.separation_flag = true;
        if (rel_change < 1e-10) step = 100;  // converged
        break;
      }
      alpha *= 0.5;
    }
    if (!moved) break;
  }

  for (Eigen::Index c = 0; c < k; ++c) out.theta[support[c]] = beta[c];
  return out;
}

/// Logistic analogue of the iterated-loadings pipeline; loading refreshes use
/// Post-Lasso residuals y - L(f'theta_post).
inline LogisticFit fit_with_iterated_loadings_logistic(const Eigen::MatrixXd& F,
                                                       const Eigen::VectorXd& y,
                                                       const PenaltyConfig& cfg,
                                                       double separation_cap = 30.0) {
  cfg.validate();
  const Eigen::Index n = F.rows();
  const Eigen::Index pen_p = cfg.lambda_p > 0 ? cfg.lambda_p : F.cols();
  const double lambda = penalty_level(n, pen_p, cfg.d_u, cfg.resolved_gamma(n), cfg.c);

  Eigen::VectorXd loadings = initial_loadings_logistic(F, cfg);
  LogisticFit fit;
  for (int k = 1; k <= cfg.max_loading_iterations; ++k) {
    LogisticFit lasso = fit_l1_logistic(F, y, lambda, loadings, cfg.kkt_tol,
                                        k > 1 ? &fit.theta_lasso : nullptr);
    fit.theta_lasso = lasso.theta_lasso;
    fit.support = lasso.support;
    fit.lambda = lasso.lambda;
    fit.loadings = loadings;
    fit.kkt_residual = lasso.kkt_residual;
    fit.objective_value = lasso.objective_value;
    fit.iterations_used = k;

    std::vector<Eigen::Index> support = fit.support;
    for (Eigen::Index j : cfg.unpenalized) {
      if (std::find(support.begin(), support.end(), j) == support.end()) support.push_back(j);
    }
    std::sort(support.begin(), support.end());

    Eigen::VectorXd fitted_link;
    try {
      LogisticRefitResult refit = refit_logistic(F, y, support, separation_cap);
      fit.theta_post = refit.theta;
      fit.separation_flag = fit.separation_flag || refit.separation_flag;
      fit.ridge_jittered = fit.ridge_jittered || refit.ridge_jittered;
      fitted_link = F * fit.theta_post;
    } catch (const std::exception&) {
      fit.theta_post = fit.theta_lasso;
      fit.loadings_from_lasso_residuals = true;
      fitted_link = F * fit.theta_lasso;
    }

    Eigen::VectorXd resid(n);
    for (Eigen::Index i = 0; i < n; ++i) resid[i] = y[i] - logistic(fitted_link[i]);
    const Eigen::VectorXd next = residual_loadings(resid, F, cfg);
    const double change = (next - loadings).norm();
    loadings = next;
    if (change < cfg.loading_stop_tol) break;
  }
  return fit;
}

}  // namespace hdte
