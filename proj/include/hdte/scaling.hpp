#pragma once

#include <Eigen/Dense>
#include <cmath>

namespace hdte {

/// Unit-RMS column rescaling. The weighted-l1 fits are exactly scale
/// equivariant, so solving on the rescaled problem and mapping coefficients
/// back changes nothing mathematically while keeping the stationarity
/// certificate meaningful on badly scaled data.
struct ColumnScaling {
  Eigen::MatrixXd F;          // rescaled copy
  Eigen::VectorXd col_scale;  // original column RMS (1 where a column is zero)
};

inline ColumnScaling scale_columns(const Eigen::MatrixXd& F) {
  ColumnScaling out;
  out.F = F;
  out.col_scale.resize(F.cols());
  const double n = static_cast<double>(F.rows());
  for (Eigen::Index j = 0; j < F.cols(); ++j) {
    const double rms = std::sqrt(F.col(j).squaredNorm() / n);
    out.col_scale[j] = rms > 0.0 ? rms : 1.0;
    if (rms > 0.0) out.F.col(j) /= rms;
  }
  return out;
}

/// Maps coefficients of the rescaled problem back to the raw scale.
inline Eigen::VectorXd unscale_coefficients(const Eigen::VectorXd& theta,
                                            const Eigen::VectorXd& col_scale,
                                            double y_scale = 1.0) {
  return (theta.array() * y_scale / col_scale.array()).matrix();
}

}  // namespace hdte
