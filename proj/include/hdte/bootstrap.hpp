#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "hdte/effects.hpp"
#include "hdte/math.hpp"
#include "hdte/parallel.hpp"
#include "hdte/reduced_form.hpp"
#include "hdte/rng.hpp"

namespace hdte {

/// Multiplier law, mean-zero unit-variance parameterization:
///   Bayesian: Exp(1) - 1;  Gaussian: N(0,1);  Wild: N1/sqrt(2) + (N2^2 - 1)/2.
enum class MultiplierKind { Bayesian, Gaussian, Wild };

/// Mean0 perturbs estimates additively via centered influence values; Mean1
/// reweights the uncentered influence contributions with w = 1 + xi.
enum class WeightParam { Mean0, Mean1 };

/// n iid multiplier draws, fully determined by the seed. Mean1 returns 1 + xi.
inline Eigen::VectorXd draw_weights(MultiplierKind kind, Eigen::Index n, std::uint64_t seed,
                                    WeightParam param = WeightParam::Mean0) {
  if (n < 1) throw std::invalid_argument("draw_weights: n must be >= 1");
  Rng rng(seed);
  Eigen::VectorXd xi(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    switch (kind) {
      case MultiplierKind::Bayesian:
        xi[i] = rng.exponential() - 1.0;
        break;
      case MultiplierKind::Gaussian:
        xi[i] = rng.normal();
        break;
      case MultiplierKind::Wild: {
        const double r1 = rng.normal();
        const double r2 = rng.normal();
        xi[i] = r1 / std::sqrt(2.0) + (r2 * r2 - 1.0) / 2.0;
        break;
      }
    }
  }
  if (param == WeightParam::Mean1) xi.array() += 1.0;
  return xi;
}

struct BootstrapResult {
  int B = 0;
  Eigen::MatrixXd draws;  // B x output dimension; flagged rows hold NaN
  std::uint64_t master_seed = 0;
  std::vector<std::uint64_t> draw_seeds;
  std::vector<char> flagged;
  double flagged_fraction = 0.0;
  bool warning = false;  // more than 5% of draws flagged

  std::vector<double> column(Eigen::Index q) const {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(B));
    for (int b = 0; b < B; ++b) {
      if (!flagged[static_cast<std::size_t>(b)]) out.push_back(draws(b, q));
    }
    return out;
  }
};

/// Draws of the stacked reduced-form vector: rho* = rho + n^{-1} sum_i xi_i psi_i.
inline BootstrapResult bootstrap_reduced_form(const Eigen::VectorXd& rho,
                                              const Eigen::MatrixXd& psi, int B,
                                              MultiplierKind kind, std::uint64_t seed) {
  if (psi.cols() != rho.size()) throw std::invalid_argument("bootstrap_reduced_form: shape");
  const Eigen::Index n = psi.rows();
  BootstrapResult out;
  out.B = B;
  out.master_seed = seed;
  out.draws.resize(B, rho.size());
  out.draw_seeds.resize(static_cast<std::size_t>(B));
  out.flagged.assign(static_cast<std::size_t>(B), 0);
  parallel_for(static_cast<std::size_t>(B), [&](std::size_t b) {
    const std::uint64_t ds = derive_seed(seed, static_cast<std::uint64_t>(b));
    out.draw_seeds[b] = ds;
    const Eigen::VectorXd xi = draw_weights(kind, n, ds, WeightParam::Mean0);
    out.draws.row(static_cast<Eigen::Index>(b)) =
        (rho + psi.transpose() * xi / static_cast<double>(n)).transpose();
  });
  return out;
}

/// Thrown by effect functionals to flag (not abort) a bootstrap draw.
class DrawFlagged : public std::runtime_error {
 public:
  explicit DrawFlagged(const std::string& why) : std::runtime_error(why) {}
};

/// A plug-in functional of the full reduced-form stack, evaluated per draw.
/// Throwing DenominatorError or DrawFlagged marks the draw as failed.
using EffectFunctional = std::function<Eigen::VectorXd(const std::vector<Eigen::VectorXd>&)>;

/// Applies `functional` to B bootstrapped reduced-form stacks. Mean0 uses the
/// additive draw; Mean1 reweights the uncentered contributions psi + rho with
/// w = 1 + xi in every component (the weighted-ratio construction). Failed
/// draws are flagged and excluded from downstream quantiles, never fatal.
inline BootstrapResult bootstrap_effects(const ReducedForm& reduced,
                                         const EffectFunctional& functional, int B,
                                         MultiplierKind kind, std::uint64_t seed,
                                         WeightParam param = WeightParam::Mean1) {
  if (B < 1) throw std::invalid_argument("bootstrap_effects: B must be >= 1");
  const Eigen::Index n = reduced.n();
  const double dn = static_cast<double>(n);

  // Dimension probe on the point estimate.
  const Eigen::VectorXd point = functional(reduced.rho);

  BootstrapResult out;
  out.B = B;
  out.master_seed = seed;
  out.draws.resize(B, point.size());
  out.draw_seeds.resize(static_cast<std::size_t>(B));
  out.flagged.assign(static_cast<std::size_t>(B), 0);

  parallel_for(static_cast<std::size_t>(B), [&](std::size_t b) {
    const std::uint64_t ds = derive_seed(seed, static_cast<std::uint64_t>(b));
    out.draw_seeds[b] = ds;
    const Eigen::VectorXd xi = draw_weights(kind, n, ds, WeightParam::Mean0);

    std::vector<Eigen::VectorXd> rho_draw(reduced.rho.size());
    if (param == WeightParam::Mean0) {
      for (std::size_t k = 0; k < reduced.rho.size(); ++k) {
        rho_draw[k] = reduced.rho[k] + reduced.psi[k].transpose() * xi / dn;
      }
    } else {
      const Eigen::VectorXd w = xi.array() + 1.0;
      const double wbar = w.mean();
      for (std::size_t k = 0; k < reduced.rho.size(); ++k) {
        rho_draw[k] = reduced.rho[k] * wbar + reduced.psi[k].transpose() * w / dn;
      }
    }
    try {
      const Eigen::VectorXd val = functional(rho_draw);
      out.draws.row(static_cast<Eigen::Index>(b)) = val.transpose();
    } catch (const std::exception&) {
      out.flagged[b] = 1;
      out.draws.row(static_cast<Eigen::Index>(b))
          .setConstant(std::numeric_limits<double>::quiet_NaN());
    }
  });

  int bad = 0;
  for (char f : out.flagged) bad += f;
  out.flagged_fraction = static_cast<double>(bad) / static_cast<double>(B);
  out.warning = out.flagged_fraction > 0.05;
  return out;
}

/// Analytic SE for a ratio-type estimate with influence contrast c_i and a fixed
/// denominator: sqrt( (n-1)^{-1} sum_i (c_i/denom - mean(c)/denom)^2 / n ).
inline double se_analytic(const Eigen::VectorXd& psi_contrast, double denom) {
  const Eigen::Index n = psi_contrast.size();
  if (n < 2) throw std::invalid_argument("se_analytic: need n >= 2");
  const double delta = psi_contrast.mean() / denom;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double dev = psi_contrast[i] / denom - delta;
    acc += dev * dev;
  }
  return std::sqrt(acc / static_cast<double>(n - 1) / static_cast<double>(n));
}

/// Bootstrap SE as the interquartile range rescaled by the normal IQR.
inline double se_iqr(const std::vector<double>& draws) {
  if (draws.size() < 4) throw std::invalid_argument("se_iqr: need at least 4 draws");
  const double q75 = quantile_type7(draws, 0.75);
  const double q25 = quantile_type7(draws, 0.25);
  return (q75 - q25) / (2.0 * normal_quantile(0.75));
}

struct BandResult {
  Eigen::VectorXd se;            // IQR-rescaled bootstrap SE per grid point
  Eigen::VectorXd pointwise_lo;
  Eigen::VectorXd pointwise_hi;
  Eigen::VectorXd uniform_lo;
  Eigen::VectorXd uniform_hi;
  double critical_value = 0.0;   // max-|t| bootstrap quantile
  double pointwise_z = 0.0;
  std::vector<char> excluded;    // grid points with degenerate, inconsistent draws
};

/// Simultaneous sup-t band from bootstrap draws plus normal pointwise bands.
///   t_b(q) = (draw_b(q) - estimate(q)) / s(q),  cv = level-quantile of max_q |t_b(q)|.
/// A point with s(q) = 0 is kept with t = 0 when all its draws equal the
/// estimate (fully degenerate) and excluded otherwise.
inline BandResult uniform_band(const Eigen::VectorXd& estimates, const BootstrapResult& boot,
                               double level) {
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("uniform_band: bad level");
  const Eigen::Index q_count = estimates.size();
  if (boot.draws.cols() != q_count) throw std::invalid_argument("uniform_band: shape mismatch");

  BandResult out;
  out.se.resize(q_count);
  out.excluded.assign(static_cast<std::size_t>(q_count), 0);
  std::vector<char> degenerate(static_cast<std::size_t>(q_count), 0);

  for (Eigen::Index q = 0; q < q_count; ++q) {
    const std::vector<double> col = boot.column(q);
    if (col.size() < 4) throw std::runtime_error("uniform_band: too few usable draws");
    const double s = se_iqr(col);
    out.se[q] = s;
    if (s == 0.0) {
      bool all_equal = true;
      for (double v : col) {
        if (v != estimates[q]) {
          all_equal = false;
          break;
        }
      }
      if (all_equal) {
        degenerate[static_cast<std::size_t>(q)] = 1;
      } else {
        out.excluded[static_cast<std::size_t>(q)] = 1;
      }
    }
  }
  bool any_usable = false;
  for (Eigen::Index q = 0; q < q_count; ++q) {
    if (!out.excluded[static_cast<std::size_t>(q)]) any_usable = true;
  }
  if (!any_usable) throw std::runtime_error("uniform_band: all grid points degenerate");

  std::vector<double> max_t;
  max_t.reserve(static_cast<std::size_t>(boot.B));
  for (int b = 0; b < boot.B; ++b) {
    if (boot.flagged[static_cast<std::size_t>(b)]) continue;
    double worst = 0.0;
    for (Eigen::Index q = 0; q < q_count; ++q) {
      if (out.excluded[static_cast<std::size_t>(q)]) continue;
      if (degenerate[static_cast<std::size_t>(q)]) continue;  // t identically 0
      const double t = std::fabs(boot.draws(b, q) - estimates[q]) / out.se[q];
      worst = std::max(worst, t);
    }
    max_t.push_back(worst);
  }
  if (max_t.empty()) throw std::runtime_error("uniform_band: no usable draws");

  out.critical_value = quantile_type7(max_t, level);
  out.pointwise_z = normal_quantile(1.0 - (1.0 - level) / 2.0);
  out.pointwise_lo = estimates - out.pointwise_z * out.se;
  out.pointwise_hi = estimates + out.pointwise_z * out.se;
  out.uniform_lo = estimates - out.critical_value * out.se;
  out.uniform_hi = estimates + out.critical_value * out.se;
  return out;
}

}  // namespace hdte
