#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace hdte {

/// The five target variables estimated per threshold, in storage order.
/// Yu is the raw outcome when no threshold applies and 1(Y <= u) otherwise.
enum class TargetTag : int { Yu = 0, D0Yu = 1, D0 = 2, D1Yu = 3, D1 = 4 };

constexpr int kNumTargets = 5;
constexpr int kRhoDim = 3 * kNumTargets;  // (alpha(0), alpha(1), gamma) per target

/// Index of a component inside the stacked rho vector.
/// kind: 0 -> alpha(0), 1 -> alpha(1), 2 -> gamma.
inline int rho_index(TargetTag tag, int kind) { return 3 * static_cast<int>(tag) + kind; }

struct TargetVariable {
  TargetTag tag = TargetTag::Yu;
  double threshold = std::numeric_limits<double>::quiet_NaN();  // NaN: no threshold

  bool thresholded() const { return std::isfinite(threshold); }
};

/// Realized values of a target variable on the sample.
inline Eigen::VectorXd target_values(const TargetVariable& v, const Eigen::VectorXd& y,
                                     const Eigen::VectorXd& d) {
  const Eigen::Index n = y.size();
  Eigen::VectorXd yu(n);
  if (v.thresholded()) {
    for (Eigen::Index i = 0; i < n; ++i) yu[i] = (y[i] <= v.threshold) ? 1.0 : 0.0;
  } else {
    yu = y;
  }
  switch (v.tag) {
    case TargetTag::Yu:
      return yu;
    case TargetTag::D0Yu:
      return (1.0 - d.array()).matrix().cwiseProduct(yu);
    case TargetTag::D0:
      return (1.0 - d.array()).matrix();
    case TargetTag::D1Yu:
      return d.cwiseProduct(yu);
    case TargetTag::D1:
      return d;
  }
  throw std::logic_error("target_values: bad tag");
}

struct TrimResult {
  Eigen::VectorXd mhat;
  int trimmed_count = 0;
};

/// Clamps propensities into [eps, 1-eps] and reports how many moved.
inline TrimResult trim_propensity(const Eigen::VectorXd& mhat, double eps) {
  if (!(eps > 0.0 && eps < 0.5)) {
    throw std::invalid_argument("trim_propensity: eps must lie in (0, 0.5)");
  }
  TrimResult out;
  out.mhat = mhat;
  for (Eigen::Index i = 0; i < mhat.size(); ++i) {
    if (out.mhat[i] < eps) {
      out.mhat[i] = eps;
      ++out.trimmed_count;
    } else if (out.mhat[i] > 1.0 - eps) {
      out.mhat[i] = 1.0 - eps;
      ++out.trimmed_count;
    }
  }
  return out;
}

/// Fitted nuisances for one threshold: ghat[v][z] holds E[V|Z=z,X=x_i] values
/// (empty when the cell was neither fitted nor declared), mhat1 the trimmed
/// propensity P(Z=1|X=x_i).
struct NuisanceSet {
  std::array<std::array<Eigen::VectorXd, 2>, kNumTargets> ghat;
  Eigen::VectorXd mhat1;
  double trim_eps = 1e-12;
  int trimmed_count = 0;

  Eigen::VectorXd& cell(TargetTag tag, int z) { return ghat[static_cast<int>(tag)][z]; }
  const Eigen::VectorXd& cell(TargetTag tag, int z) const {
    return ghat[static_cast<int>(tag)][z];
  }
};

struct MomentEstimate {
  double value = 0.0;
  Eigen::VectorXd psi;
};

/// Orthogonal-moment estimate of alpha_V(z):
///   alpha = En[ 1(Z=z)(V - g(z,X))/m(z,X) + g(z,X) ]
/// psi holds the centered per-observation integrand.
inline MomentEstimate estimate_alpha(const Eigen::VectorXd& v, int z, const Eigen::VectorXd& zvar,
                                     const Eigen::VectorXd& ghat_z,
                                     const Eigen::VectorXd& mhat1) {
  const Eigen::Index n = v.size();
  if (zvar.size() != n || ghat_z.size() != n || mhat1.size() != n) {
    throw std::invalid_argument("estimate_alpha: size mismatch");
  }
  MomentEstimate out;
  out.psi.resize(n);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mz = (z == 1) ? mhat1[i] : 1.0 - mhat1[i];
    const double ind = (zvar[i] == static_cast<double>(z)) ? 1.0 : 0.0;
    const double val = ind * (v[i] - ghat_z[i]) / mz + ghat_z[i];
    if (!std::isfinite(val)) {
      throw std::runtime_error("estimate_alpha: non-finite moment contribution at row " +
                               std::to_string(i));
    }
    out.psi[i] = val;
    acc += val;
  }
  out.value = acc / static_cast<double>(n);
  out.psi.array() -= out.value;
  out.psi.array() -= out.psi.mean();  // second pass keeps the column mean at zero
                                      // even when the integrand scale is large
  return out;
}

/// gamma_V is the raw sample mean; psi = V - gamma.
inline MomentEstimate estimate_gamma(const Eigen::VectorXd& v) {
  MomentEstimate out;
  out.value = v.mean();
  out.psi = v.array() - out.value;
  out.psi.array() -= out.psi.mean();
  return out;
}

/// Stacked reduced-form estimates over the threshold grid. For scalar targets
/// (no thresholding) the grid holds a single NaN entry.
struct ReducedForm {
  std::vector<double> u_grid;
  std::vector<Eigen::VectorXd> rho;   // per u: kRhoDim vector
  std::vector<Eigen::MatrixXd> psi;   // per u: n x kRhoDim
  int trimmed_count = 0;

  Eigen::Index n() const { return psi.empty() ? 0 : psi.front().rows(); }
  std::size_t num_thresholds() const { return u_grid.size(); }
};

/// Computes rho_u and the influence matrix for every threshold from fitted
/// nuisances. `nuisances` must be aligned with `u_grid`; missing cells throw.
inline ReducedForm reduced_form_all(const Eigen::VectorXd& y, const Eigen::VectorXd& d,
                                    const Eigen::VectorXd& z, const std::vector<double>& u_grid,
                                    const std::vector<NuisanceSet>& nuisances) {
  if (u_grid.empty()) throw std::invalid_argument("reduced_form_all: empty threshold grid");
  if (nuisances.size() != u_grid.size()) {
    throw std::invalid_argument("reduced_form_all: nuisance/grid misalignment");
  }
  const Eigen::Index n = y.size();
  ReducedForm out;
  out.u_grid = u_grid;
  out.rho.resize(u_grid.size());
  out.psi.resize(u_grid.size());

  for (std::size_t k = 0; k < u_grid.size(); ++k) {
    const NuisanceSet& nu = nuisances[k];
    out.trimmed_count += nu.trimmed_count;
    Eigen::VectorXd rho(kRhoDim);
    Eigen::MatrixXd psi(n, kRhoDim);
    for (int t = 0; t < kNumTargets; ++t) {
      TargetVariable tv;
      tv.tag = static_cast<TargetTag>(t);
      tv.threshold = u_grid[k];
      const Eigen::VectorXd v = target_values(tv, y, d);
      for (int zz = 0; zz < 2; ++zz) {
        const Eigen::VectorXd& g = nu.ghat[t][zz];
        if (g.size() != n) {
          throw std::invalid_argument("reduced_form_all: missing nuisance for target " +
                                      std::to_string(t) + ", z=" + std::to_string(zz));
        }
        const MomentEstimate est = estimate_alpha(v, zz, z, g, nu.mhat1);
        rho[rho_index(tv.tag, zz)] = est.value;
        psi.col(rho_index(tv.tag, zz)) = est.psi;
      }
      const MomentEstimate gam = estimate_gamma(v);
      rho[rho_index(tv.tag, 2)] = gam.value;
      psi.col(rho_index(tv.tag, 2)) = gam.psi;
    }
    out.rho[k] = std::move(rho);
    out.psi[k] = std::move(psi);
  }
  return out;
}

}  // namespace hdte
