#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdte/reduced_form.hpp"

namespace hdte {

enum class Estimand {
  LASF,
  LASF_T,
  LDTE,
  LQTE,
  LDTE_T,
  LQTE_T,
  LATE,
  LATE_T,
  ATE,
  ATE_T,
};

inline const char* estimand_name(Estimand e) {
  switch (e) {
    case Estimand::LASF: return "LASF";
    case Estimand::LASF_T: return "LASF-T";
    case Estimand::LDTE: return "LDTE";
    case Estimand::LQTE: return "LQTE";
    case Estimand::LDTE_T: return "LDTE-T";
    case Estimand::LQTE_T: return "LQTE-T";
    case Estimand::LATE: return "LATE";
    case Estimand::LATE_T: return "LATE-T";
    case Estimand::ATE: return "ATE";
    case Estimand::ATE_T: return "ATE-T";
  }
  return "?";
}

/// Raised when a ratio estimand has a first stage too close to zero.
class DenominatorError : public std::runtime_error {
 public:
  explicit DenominatorError(double value)
      : std::runtime_error("denominator magnitude " + std::to_string(value) +
                           " below tolerance (weak first stage)"),
        value_(value) {}
  double value() const { return value_; }

 private:
  double value_;
};

/// Per-point status of a quantile inversion.
enum class InvertStatus : int { Ok = 0, ExtrapolatedLeft = 1, NotReached = 2 };

struct EffectCurve {
  std::vector<double> grid;  // thresholds u, or quantile indices tau
  Eigen::VectorXd values;
  Estimand tag = Estimand::LATE;
  int arm = -1;
  std::vector<InvertStatus> flags;  // populated by quantile inversion

  void check_grid() const {
    for (std::size_t k = 1; k < grid.size(); ++k) {
      if (!(grid[k] > grid[k - 1])) {
        throw std::invalid_argument("EffectCurve: grid must be strictly increasing");
      }
    }
  }
};

struct QuantileGrid {
  std::vector<double> taus;

  /// 0.10, 0.11, ..., 0.90.
  static QuantileGrid default_grid() {
    QuantileGrid g;
    for (int k = 10; k <= 90; ++k) g.taus.push_back(k / 100.0);
    return g;
  }

  void validate() const {
    for (std::size_t k = 0; k < taus.size(); ++k) {
      if (!(taus[k] > 0.0 && taus[k] < 1.0)) {
        throw std::invalid_argument("QuantileGrid: tau must lie in (0,1)");
      }
      if (k > 0 && !(taus[k] > taus[k - 1])) {
        throw std::invalid_argument("QuantileGrid: taus must be increasing");
      }
    }
  }
};

constexpr double kDefaultDenomTol = 1e-8;

namespace detail {
inline double checked_ratio(double num, double den, double tol) {
  if (std::fabs(den) <= tol) throw DenominatorError(den);
  return num / den;
}
}  // namespace detail

/// Average structural function for compliers in arm d:
///   (alpha_{1d(D)Yu}(1) - alpha_{1d(D)Yu}(0)) / (alpha_{1d(D)}(1) - alpha_{1d(D)}(0)).
inline double lasf(const Eigen::VectorXd& rho, int d, double denom_tol = kDefaultDenomTol) {
  const TargetTag num_tag = (d == 1) ? TargetTag::D1Yu : TargetTag::D0Yu;
  const TargetTag den_tag = (d == 1) ? TargetTag::D1 : TargetTag::D0;
  const double num = rho[rho_index(num_tag, 1)] - rho[rho_index(num_tag, 0)];
  const double den = rho[rho_index(den_tag, 1)] - rho[rho_index(den_tag, 0)];
  return detail::checked_ratio(num, den, denom_tol);
}

/// Complier average treatment effect, simplified ratio form
///   (alpha_Y(1) - alpha_Y(0)) / (alpha_{1_1(D)}(1) - alpha_{1_1(D)}(0)).
inline double late(const Eigen::VectorXd& rho, double denom_tol = kDefaultDenomTol) {
  const double num = rho[rho_index(TargetTag::Yu, 1)] - rho[rho_index(TargetTag::Yu, 0)];
  const double den = rho[rho_index(TargetTag::D1, 1)] - rho[rho_index(TargetTag::D1, 0)];
  return detail::checked_ratio(num, den, denom_tol);
}

/// Average structural function for treated compliers in arm d:
///   (gamma_{1d(D)Yu} - alpha_{1d(D)Yu}(0)) / (gamma_{1d(D)} - alpha_{1d(D)}(0)).
inline double lasf_t(const Eigen::VectorXd& rho, int d, double denom_tol = kDefaultDenomTol) {
  const TargetTag num_tag = (d == 1) ? TargetTag::D1Yu : TargetTag::D0Yu;
  const TargetTag den_tag = (d == 1) ? TargetTag::D1 : TargetTag::D0;
  const double num = rho[rho_index(num_tag, 2)] - rho[rho_index(num_tag, 0)];
  const double den = rho[rho_index(den_tag, 2)] - rho[rho_index(den_tag, 0)];
  return detail::checked_ratio(num, den, denom_tol);
}

inline double late_t(const Eigen::VectorXd& rho, double denom_tol = kDefaultDenomTol) {
  return lasf_t(rho, 1, denom_tol) - lasf_t(rho, 0, denom_tol);
}

/// Structural distribution curve over the threshold grid: pointwise LASF
/// (estimand = LDTE arm curve) or LASF-T (LDTE-T arm curve).
inline EffectCurve distribution_curve(const ReducedForm& reduced, int d, bool on_treated,
                                      double denom_tol = kDefaultDenomTol) {
  EffectCurve out;
  out.grid = reduced.u_grid;
  out.tag = on_treated ? Estimand::LASF_T : Estimand::LASF;
  out.arm = d;
  out.values.resize(static_cast<Eigen::Index>(reduced.u_grid.size()));
  for (std::size_t k = 0; k < reduced.u_grid.size(); ++k) {
    out.values[static_cast<Eigen::Index>(k)] =
        on_treated ? lasf_t(reduced.rho[k], d, denom_tol) : lasf(reduced.rho[k], d, denom_tol);
  }
  out.check_grid();
  return out;
}

/// Left-inverse of the piecewise-linear interpolant through the curve points:
/// for each tau, the smallest u with interpolant value >= tau. A tau below the
/// left endpoint value returns the left endpoint flagged ExtrapolatedLeft; a tau
/// the interpolant never reaches returns the right endpoint flagged NotReached.
inline EffectCurve quantile_invert(const EffectCurve& curve, const QuantileGrid& taus) {
  curve.check_grid();
  taus.validate();
  if (curve.grid.empty()) throw std::invalid_argument("quantile_invert: empty curve");
  const std::size_t m = curve.grid.size();
  EffectCurve out;
  out.grid = taus.taus;
  out.tag = curve.tag;
  out.arm = curve.arm;
  out.values.resize(static_cast<Eigen::Index>(taus.taus.size()));
  out.flags.assign(taus.taus.size(), InvertStatus::Ok);

  for (std::size_t t = 0; t < taus.taus.size(); ++t) {
    const double tau = taus.taus[t];
    double u = curve.grid.back();
    InvertStatus status = InvertStatus::NotReached;
    if (curve.values[0] >= tau) {
      u = curve.grid.front();
      // literal infimum: the left endpoint already satisfies the inequality;
      // flag taus strictly below the endpoint value as extrapolated
      status = (curve.values[0] > tau) ? InvertStatus::ExtrapolatedLeft : InvertStatus::Ok;
    } else {
      for (std::size_t k = 0; k + 1 < m; ++k) {
        const double v0 = curve.values[static_cast<Eigen::Index>(k)];
        const double v1 = curve.values[static_cast<Eigen::Index>(k + 1)];
        if (v0 >= tau) {
          u = curve.grid[k];
          status = InvertStatus::Ok;
          break;
        }
        if (v1 >= tau) {
          const double w = (tau - v0) / (v1 - v0);
          u = curve.grid[k] + w * (curve.grid[k + 1] - curve.grid[k]);
          status = InvertStatus::Ok;
          break;
        }
      }
      if (status == InvertStatus::NotReached && m == 1) u = curve.grid.front();
    }
    out.values[static_cast<Eigen::Index>(t)] = u;
    out.flags[t] = status;
  }
  return out;
}

/// Quantile treatment-effect curve: difference of the two arms' inversions on a
/// shared tau grid. Flags propagate pointwise (worst of the two arms).
inline EffectCurve lqte(const EffectCurve& arm1, const EffectCurve& arm0,
                        const QuantileGrid& taus, bool on_treated = false) {
  const EffectCurve inv1 = quantile_invert(arm1, taus);
  const EffectCurve inv0 = quantile_invert(arm0, taus);
  EffectCurve out;
  out.grid = taus.taus;
  out.tag = on_treated ? Estimand::LQTE_T : Estimand::LQTE;
  out.values = inv1.values - inv0.values;
  out.flags.resize(taus.taus.size());
  for (std::size_t t = 0; t < taus.taus.size(); ++t) {
    out.flags[t] = static_cast<InvertStatus>(
        std::max(static_cast<int>(inv1.flags[t]), static_cast<int>(inv0.flags[t])));
  }
  return out;
}

/// Sample quantile, type-7 convention (linear interpolation of order statistics).
inline double quantile_type7(std::vector<double> v, double q) {
  if (v.empty()) throw std::invalid_argument("quantile_type7: empty sample");
  std::sort(v.begin(), v.end());
  if (v.size() == 1) return v[0];
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

/// Threshold grid at outcome percentiles lo..hi in steps of `step`, de-duplicated
/// so the grid is strictly increasing (a degenerate outcome collapses to one point).
inline std::vector<double> percentile_grid(const Eigen::VectorXd& y, double lo = 0.05,
                                           double hi = 0.95, double step = 0.01) {
  std::vector<double> sample(y.data(), y.data() + y.size());
  std::vector<double> grid;
  const int steps = static_cast<int>(std::round((hi - lo) / step));
  for (int k = 0; k <= steps; ++k) {
    const double q = lo + step * k;
    const double val = quantile_type7(sample, q);
    if (grid.empty() || val > grid.back()) grid.push_back(val);
  }
  return grid;
}

}  // namespace hdte
