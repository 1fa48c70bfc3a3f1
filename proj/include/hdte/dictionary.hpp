#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdte/data.hpp"

namespace hdte {

enum class TransformKind { Identity, Power, CategoricalIndicators, QuadraticSpline };

/// One dictionary-building rule applied to a named raw column.
///   Identity              -> x
///   Power(k)              -> x^k
///   CategoricalIndicators -> one 0/1 column per region cut out by the cut points
///   QuadraticSpline       -> x, x^2, the region dummies, and x/x^2 interacted
///                            with every region dummy (piecewise quadratic basis)
struct ColumnTransform {
  std::string column;
  TransformKind kind = TransformKind::Identity;
  int power = 1;
  std::vector<double> cuts;  // strictly increasing break/cut points
};

/// Groups of raw-column names whose generated terms are fully interacted pairwise.
struct InteractionDirective {
  std::vector<std::vector<std::string>> groups;
};

struct DictionarySpec {
  std::vector<ColumnTransform> transforms;
  std::vector<InteractionDirective> interactions;
  bool standardize = false;  // unit-RMS column scaling; off by default, penalty
                             // loadings carry the scale downstream

  void validate() const {
    for (const auto& t : transforms) {
      if (t.kind == TransformKind::Power && t.power < 1) {
        throw std::invalid_argument("DictionarySpec: power must be >= 1 for column '" +
                                    t.column + "'");
      }
      if (t.kind == TransformKind::CategoricalIndicators ||
          t.kind == TransformKind::QuadraticSpline) {
        if (t.cuts.empty()) {
          throw std::invalid_argument("DictionarySpec: cut points required for column '" +
                                      t.column + "'");
        }
        for (std::size_t k = 1; k < t.cuts.size(); ++k) {
          if (!(t.cuts[k] > t.cuts[k - 1])) {
            throw std::invalid_argument(
                "DictionarySpec: cut points must be strictly increasing for column '" +
                t.column + "'");
          }
        }
      }
    }
    for (const auto& dir : interactions) {
      if (dir.groups.size() < 2) {
        throw std::invalid_argument("DictionarySpec: interaction needs at least two groups");
      }
      for (const auto& g : dir.groups) {
        if (g.empty()) throw std::invalid_argument("DictionarySpec: empty interaction group");
      }
    }
  }
};

/// Expanded control dictionary. Each column keeps a label describing the
/// transform that generated it and the raw column it came from (interaction
/// columns record both parents in the label and carry an empty source).
struct DesignMatrix {
  Eigen::MatrixXd values;
  std::vector<std::string> labels;
  std::vector<std::string> sources;

  Eigen::Index n() const { return values.rows(); }
  Eigen::Index p() const { return values.cols(); }
};

namespace detail {

/// Region index of x among cut points: number of cuts <= x, in 0..cuts.size().
inline int region_index(double x, const std::vector<double>& cuts) {
  int r = 0;
  for (double c : cuts) {
    if (x >= c) ++r;
  }
  return r;
}

inline void append_column(DesignMatrix& m, const Eigen::VectorXd& col, const std::string& label,
                          const std::string& source) {
  m.values.conservativeResize(Eigen::NoChange, m.values.cols() + 1);
  m.values.col(m.values.cols() - 1) = col;
  m.labels.push_back(label);
  m.sources.push_back(source);
}

inline Eigen::Index find_raw_column(const RawData& raw, const std::string& name) {
  for (std::size_t j = 0; j < raw.x_names.size(); ++j) {
    if (raw.x_names[j] == name) return static_cast<Eigen::Index>(j);
  }
  throw std::invalid_argument("dictionary: unknown raw column '" + name + "'");
}

inline void check_finite(const Eigen::VectorXd& col, const std::string& label) {
  if (!col.allFinite()) {
    throw std::runtime_error("dictionary: non-finite value produced by term '" + label + "'");
  }
}

}  // namespace detail

/// Appends all pairwise products between distinct groups of existing columns.
/// Products within a group are never formed; squares come from Power terms.
inline DesignMatrix interact_groups(const DesignMatrix& m,
                                    const std::vector<std::vector<Eigen::Index>>& groups) {
  for (const auto& g : groups) {
    if (g.empty()) throw std::invalid_argument("interact_groups: empty group");
    for (Eigen::Index idx : g) {
      if (idx < 0 || idx >= m.p()) {
        throw std::invalid_argument("interact_groups: column index out of range");
      }
    }
  }
  DesignMatrix out = m;
  for (std::size_t a = 0; a < groups.size(); ++a) {
    for (std::size_t b = a + 1; b < groups.size(); ++b) {
      for (Eigen::Index ia : groups[a]) {
        for (Eigen::Index ib : groups[b]) {
          const Eigen::VectorXd prod = m.values.col(ia).cwiseProduct(m.values.col(ib));
          detail::append_column(out, prod, m.labels[ia] + "*" + m.labels[ib], "");
        }
      }
    }
  }
  return out;
}

/// Builds the dictionary realized by `spec`: transform terms in spec order, then
/// interaction products in directive order. Deterministic for fixed inputs.
inline DesignMatrix expand(const RawData& raw, const DictionarySpec& spec) {
  spec.validate();
  if (raw.n() < 2) throw std::invalid_argument("expand: need at least 2 observations");

  DesignMatrix m;
  m.values.resize(raw.n(), 0);

  for (const auto& t : spec.transforms) {
    const Eigen::Index j = detail::find_raw_column(raw, t.column);
    const Eigen::VectorXd x = raw.x.col(j);
    switch (t.kind) {
      case TransformKind::Identity: {
        detail::append_column(m, x, t.column, t.column);
        break;
      }
      case TransformKind::Power: {
        Eigen::VectorXd col = x.array().pow(static_cast<double>(t.power));
        const std::string label = t.column + "^" + std::to_string(t.power);
        detail::check_finite(col, label);
        detail::append_column(m, col, label, t.column);
        break;
      }
      case TransformKind::CategoricalIndicators: {
        const int regions = static_cast<int>(t.cuts.size()) + 1;
        for (int r = 0; r < regions; ++r) {
          Eigen::VectorXd col(raw.n());
          for (Eigen::Index i = 0; i < raw.n(); ++i) {
            col[i] = (detail::region_index(x[i], t.cuts) == r) ? 1.0 : 0.0;
          }
          detail::append_column(m, col, t.column + "[cat" + std::to_string(r) + "]", t.column);
        }
        break;
      }
      case TransformKind::QuadraticSpline: {
        const int regions = static_cast<int>(t.cuts.size()) + 1;
        Eigen::VectorXd x2 = x.array().square();
        detail::check_finite(x2, t.column + "^2");
        detail::append_column(m, x, t.column, t.column);
        detail::append_column(m, x2, t.column + "^2", t.column);
        std::vector<Eigen::VectorXd> dummies(regions);
        for (int r = 0; r < regions; ++r) {
          dummies[r].resize(raw.n());
          for (Eigen::Index i = 0; i < raw.n(); ++i) {
            dummies[r][i] = (detail::region_index(x[i], t.cuts) == r) ? 1.0 : 0.0;
          }
          detail::append_column(m, dummies[r], t.column + "[cat" + std::to_string(r) + "]",
                                t.column);
        }
        for (int r = 0; r < regions; ++r) {
          detail::append_column(m, x.cwiseProduct(dummies[r]),
                                t.column + "*" + t.column + "[cat" + std::to_string(r) + "]",
                                t.column);
        }
        for (int r = 0; r < regions; ++r) {
          detail::append_column(m, x2.cwiseProduct(dummies[r]),
                                t.column + "^2*" + t.column + "[cat" + std::to_string(r) + "]",
                                t.column);
        }
        break;
      }
    }
  }

  for (const auto& dir : spec.interactions) {
    std::vector<std::vector<Eigen::Index>> groups;
    for (const auto& names : dir.groups) {
      std::vector<Eigen::Index> g;
      for (Eigen::Index c = 0; c < m.p(); ++c) {
        if (std::find(names.begin(), names.end(), m.sources[c]) != names.end()) {
          g.push_back(c);
        }
      }
      if (g.empty()) {
        throw std::invalid_argument("dictionary: interaction group matched no generated terms");
      }
      groups.push_back(std::move(g));
    }
    const Eigen::Index before = m.p();
    DesignMatrix with = interact_groups(m, groups);
    for (Eigen::Index c = before; c < with.p(); ++c) {
      detail::append_column(m, with.values.col(c), with.labels[c], "");
    }
  }

  if (spec.standardize) {
    for (Eigen::Index c = 0; c < m.p(); ++c) {
      const double rms = std::sqrt(m.values.col(c).squaredNorm() / static_cast<double>(m.n()));
      if (rms > 0.0) m.values.col(c) /= rms;
    }
  }
  return m;
}

struct PruneResult {
  DesignMatrix matrix;
  std::vector<std::string> dropped;
  bool all_dropped = false;
};

/// Greedy left-to-right collinearity scan. A column is dropped iff its residual
/// after projection on the already-retained columns has norm <= tol * ||column||.
inline PruneResult prune_collinear(const DesignMatrix& m, double tol = 1e-9) {
  if (!(tol > 0.0)) throw std::invalid_argument("prune_collinear: tol must be > 0");
  PruneResult out;
  out.matrix.values.resize(m.n(), 0);

  Eigen::MatrixXd basis(m.n(), 0);  // orthonormal basis of the retained span
  for (Eigen::Index c = 0; c < m.p(); ++c) {
    const Eigen::VectorXd col = m.values.col(c);
    const double norm = col.norm();
    Eigen::VectorXd resid = col;
    if (basis.cols() > 0) {
      resid -= basis * (basis.transpose() * col);
      // second Gram-Schmidt pass for numerical orthogonality
      resid -= basis * (basis.transpose() * resid);
    }
    const double rnorm = resid.norm();
    if (rnorm <= tol * norm || norm == 0.0) {
      out.dropped.push_back(m.labels[c]);
      continue;
    }
    basis.conservativeResize(Eigen::NoChange, basis.cols() + 1);
    basis.col(basis.cols() - 1) = resid / rnorm;
    detail::append_column(out.matrix, col, m.labels[c], m.sources[c]);
  }
  out.all_dropped = (out.matrix.p() == 0);
  return out;
}

/// Instrument-interacted design ((1-z) f(x)', z f(x)')' with 2p columns.
inline DesignMatrix build_z_design(const DesignMatrix& m, const Eigen::VectorXd& z) {
  if (z.size() != m.n()) throw std::invalid_argument("build_z_design: z length mismatch");
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (z[i] != 0.0 && z[i] != 1.0) {
      throw std::invalid_argument("build_z_design: z must be 0/1, row " + std::to_string(i));
    }
  }
  DesignMatrix out;
  out.values.resize(m.n(), 2 * m.p());
  for (Eigen::Index c = 0; c < m.p(); ++c) {
    out.values.col(c) = (1.0 - z.array()) * m.values.col(c).array();
    out.values.col(m.p() + c) = z.array() * m.values.col(c).array();
  }
  out.labels.reserve(2 * m.p());
  out.sources.reserve(2 * m.p());
  for (Eigen::Index c = 0; c < m.p(); ++c) {
    out.labels.push_back("z0:" + m.labels[c]);
    out.sources.push_back(m.sources[c]);
  }
  for (Eigen::Index c = 0; c < m.p(); ++c) {
    out.labels.push_back("z1:" + m.labels[c]);
    out.sources.push_back(m.sources[c]);
  }
  return out;
}

}  // namespace hdte
