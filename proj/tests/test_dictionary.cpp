#include <catch2/catch_amalgamated.hpp>

#include <cstring>

#include "hdte/dictionary.hpp"
#include "hdte/rng.hpp"
#include "oracles.hpp"

using namespace hdte;

namespace {

RawData make_raw(const Eigen::MatrixXd& x, const std::vector<std::string>& names) {
  RawData raw;
  raw.x = x;
  raw.x_names = names;
  raw.y = Eigen::VectorXd::Zero(x.rows());
  raw.d = Eigen::VectorXd::Zero(x.rows());
  raw.z = Eigen::VectorXd::Zero(x.rows());
  return raw;
}

ColumnTransform transform(const std::string& col, TransformKind kind) {
  ColumnTransform t;
  t.column = col;
  t.kind = kind;
  return t;
}

/// Direct evaluation of the piecewise-quadratic basis from its definition:
/// region dummy per cut interval, then (1, x, x^2) within the active region.
std::vector<double> spline_basis_oracle(double x, const std::vector<double>& cuts) {
  const int regions = static_cast<int>(cuts.size()) + 1;
  int r = 0;
  for (double c : cuts) {
    if (x >= c) ++r;
  }
  std::vector<double> out;
  out.push_back(x);
  out.push_back(x * x);
  for (int k = 0; k < regions; ++k) out.push_back(k == r ? 1.0 : 0.0);
  for (int k = 0; k < regions; ++k) out.push_back(k == r ? x : 0.0);
  for (int k = 0; k < regions; ++k) out.push_back(k == r ? x * x : 0.0);
  return out;
}

}  // namespace

TEST_CASE("identity spec reproduces the raw columns", "[dictionary]") {
  Eigen::MatrixXd x(4, 3);
  x << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12;
  RawData raw = make_raw(x, {"a", "b", "c"});
  DictionarySpec spec;
  for (const auto& name : raw.x_names) spec.transforms.push_back(transform(name, TransformKind::Identity));

  const DesignMatrix m = expand(raw, spec);
  REQUIRE(m.p() == 3);
  REQUIRE(m.values == x);
  REQUIRE(m.labels == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("power transform appends the exact powers", "[dictionary]") {
  Eigen::MatrixXd x(3, 1);
  x << 1, 2, 3;
  RawData raw = make_raw(x, {"v"});
  DictionarySpec spec;
  ColumnTransform t = transform("v", TransformKind::Power);
  t.power = 2;
  spec.transforms.push_back(t);

  const DesignMatrix m = expand(raw, spec);
  REQUIRE(m.p() == 1);
  REQUIRE(m.values(0, 0) == 1.0);
  REQUIRE(m.values(1, 0) == 4.0);
  REQUIRE(m.values(2, 0) == 9.0);
  REQUIRE(m.labels[0] == "v^2");
}

TEST_CASE("quadratic spline matches the direct basis evaluation", "[dictionary]") {
  Eigen::MatrixXd x(3, 1);
  x << 1.5, -0.5, 0.25;
  RawData raw = make_raw(x, {"inc"});
  DictionarySpec spec;
  ColumnTransform t = transform("inc", TransformKind::QuadraticSpline);
  t.cuts = {0.0, 1.0};
  spec.transforms.push_back(t);

  const DesignMatrix m = expand(raw, spec);
  REQUIRE(m.p() == 2 + 3 * 3);  // x, x^2, then 3 regions of (dummy, x*dummy, x^2*dummy)
  for (Eigen::Index i = 0; i < 3; ++i) {
    const std::vector<double> ref = spline_basis_oracle(x(i, 0), t.cuts);
    for (Eigen::Index c = 0; c < m.p(); ++c) {
      REQUIRE(m.values(i, c) == Catch::Approx(ref[static_cast<std::size_t>(c)]).margin(0.0));
    }
  }
}

TEST_CASE("categorical indicators partition the sample", "[dictionary]") {
  Eigen::MatrixXd x(5, 1);
  x << -2.0, 0.0, 0.7, 3.0, 5.0;
  RawData raw = make_raw(x, {"v"});
  DictionarySpec spec;
  ColumnTransform t = transform("v", TransformKind::CategoricalIndicators);
  t.cuts = {0.0, 1.0, 4.0};
  spec.transforms.push_back(t);

  const DesignMatrix m = expand(raw, spec);
  REQUIRE(m.p() == 4);
  for (Eigen::Index i = 0; i < 5; ++i) REQUIRE(m.values.row(i).sum() == 1.0);
  REQUIRE(m.values(0, 0) == 1.0);  // below every cut
  REQUIRE(m.values(1, 1) == 1.0);  // cut boundary belongs to the upper region
  REQUIRE(m.values(4, 3) == 1.0);
}

TEST_CASE("interact_groups forms exactly the cross products", "[dictionary]") {
  DesignMatrix m;
  m.values.resize(2, 2);
  m.values << 1, 3, 2, 4;
  m.labels = {"a", "b"};
  m.sources = {"a", "b"};

  const DesignMatrix out = interact_groups(m, {{0}, {1}});
  REQUIRE(out.p() == 3);
  REQUIRE(out.values(0, 2) == 3.0);
  REQUIRE(out.values(1, 2) == 8.0);
  REQUIRE(out.labels[2] == "a*b");

  REQUIRE_THROWS_AS(interact_groups(m, {{0}, {}}), std::invalid_argument);
}

TEST_CASE("group interaction count is the product of sizes", "[dictionary]") {
  const int n = 6;
  Rng rng(99);
  Eigen::MatrixXd x(n, 12);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < 12; ++j) x(i, j) = rng.normal();
  }
  DesignMatrix m;
  m.values = x;
  for (int j = 0; j < 12; ++j) {
    m.labels.push_back("c" + std::to_string(j));
    m.sources.push_back("c" + std::to_string(j));
  }
  std::vector<Eigen::Index> g1, g2;
  for (Eigen::Index j = 0; j < 5; ++j) g1.push_back(j);
  for (Eigen::Index j = 5; j < 12; ++j) g2.push_back(j);
  const DesignMatrix out = interact_groups(m, {g1, g2});
  REQUIRE(out.p() == 12 + 5 * 7);
}

TEST_CASE("within-group products appear only across groups", "[dictionary]") {
  // group with itself is never interacted: {a, b} x {c} has no a*b column
  DesignMatrix m;
  m.values.resize(2, 3);
  m.values << 1, 2, 3, 4, 5, 6;
  m.labels = {"a", "b", "c"};
  m.sources = {"a", "b", "c"};
  const DesignMatrix out = interact_groups(m, {{0, 1}, {2}});
  REQUIRE(out.p() == 5);
  for (const auto& label : out.labels) REQUIRE(label != "a*b");
}

TEST_CASE("expand is deterministic", "[dictionary]") {
  Rng rng(7);
  Eigen::MatrixXd x(20, 2);
  for (Eigen::Index i = 0; i < 20; ++i) {
    x(i, 0) = rng.normal();
    x(i, 1) = rng.normal();
  }
  RawData raw = make_raw(x, {"a", "b"});
  DictionarySpec spec;
  ColumnTransform t = transform("a", TransformKind::QuadraticSpline);
  t.cuts = {-0.5, 0.5};
  spec.transforms.push_back(t);
  spec.transforms.push_back(transform("b", TransformKind::Identity));
  InteractionDirective dir;
  dir.groups = {{"a"}, {"b"}};
  spec.interactions.push_back(dir);

  const DesignMatrix m1 = expand(raw, spec);
  const DesignMatrix m2 = expand(raw, spec);
  REQUIRE(m1.p() == m2.p());
  REQUIRE(std::memcmp(m1.values.data(), m2.values.data(),
                      sizeof(double) * static_cast<std::size_t>(m1.values.size())) == 0);
  REQUIRE(m1.labels == m2.labels);
}

TEST_CASE("expand rejects unknown columns and non-finite results", "[dictionary]") {
  Eigen::MatrixXd x(3, 1);
  x << 1e200, 2.0, 3.0;
  RawData raw = make_raw(x, {"v"});

  DictionarySpec bad_col;
  bad_col.transforms.push_back(transform("nope", TransformKind::Identity));
  REQUIRE_THROWS_WITH(expand(raw, bad_col), Catch::Matchers::ContainsSubstring("nope"));

  DictionarySpec overflow;
  ColumnTransform t = transform("v", TransformKind::Power);
  t.power = 3;
  overflow.transforms.push_back(t);
  REQUIRE_THROWS_WITH(expand(raw, overflow), Catch::Matchers::ContainsSubstring("v^3"));
}

TEST_CASE("prune drops duplicates and exact linear combinations", "[dictionary]") {
  Rng rng(11);
  Eigen::MatrixXd x(10, 4);
  for (Eigen::Index i = 0; i < 10; ++i) {
    x(i, 0) = rng.normal();
    x(i, 1) = rng.normal();
  }
  x.col(2) = x.col(0);             // duplicate
  x.col(3) = x.col(0) + x.col(1);  // sum of two retained columns
  DesignMatrix m;
  m.values = x;
  m.labels = {"a", "b", "a_dup", "a_plus_b"};
  m.sources = {"a", "b", "a", ""};

  const PruneResult pruned = prune_collinear(m, 1e-9);
  REQUIRE(pruned.matrix.p() == 2);
  REQUIRE(pruned.dropped == std::vector<std::string>{"a_dup", "a_plus_b"});
  REQUIRE_FALSE(pruned.all_dropped);
}

TEST_CASE("prune keeps a random full-rank matrix intact", "[dictionary]") {
  Rng rng(13);
  Eigen::MatrixXd x(10, 5);
  for (Eigen::Index i = 0; i < 10; ++i) {
    for (Eigen::Index j = 0; j < 5; ++j) x(i, j) = rng.normal();
  }
  REQUIRE(oracle::gram_full_rank(x));  // rank certified independently
  DesignMatrix m;
  m.values = x;
  for (int j = 0; j < 5; ++j) {
    m.labels.push_back("c" + std::to_string(j));
    m.sources.push_back("");
  }
  const PruneResult pruned = prune_collinear(m, 1e-9);
  REQUIRE(pruned.matrix.p() == 5);
  REQUIRE(pruned.dropped.empty());
}

TEST_CASE("prune flags an all-zero matrix", "[dictionary]") {
  DesignMatrix m;
  m.values = Eigen::MatrixXd::Zero(4, 2);
  m.labels = {"z1", "z2"};
  m.sources = {"", ""};
  const PruneResult pruned = prune_collinear(m, 1e-9);
  REQUIRE(pruned.matrix.p() == 0);
  REQUIRE(pruned.all_dropped);
  REQUIRE(pruned.dropped.size() == 2);
}

TEST_CASE("retained columns stay independent under the gram oracle", "[dictionary]") {
  Rng rng(17);
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::Index n = 12, p = 8;
    Eigen::MatrixXd x(n, p);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < p; ++j) x(i, j) = rng.normal();
    }
    // inject collinearity
    x.col(3) = 2.0 * x.col(1) - x.col(0);
    x.col(6) = x.col(5);
    DesignMatrix m;
    m.values = x;
    for (Eigen::Index j = 0; j < p; ++j) {
      m.labels.push_back("c" + std::to_string(j));
      m.sources.push_back("");
    }
    const PruneResult pruned = prune_collinear(m, 1e-9);
    REQUIRE(pruned.matrix.p() == p - 2);

    // every retained column has a residual above tol on the others (gram route)
    for (Eigen::Index j = 0; j < pruned.matrix.p(); ++j) {
      std::vector<Eigen::Index> others;
      for (Eigen::Index k = 0; k < pruned.matrix.p(); ++k) {
        if (k != j) others.push_back(k);
      }
      const double resid_sq = oracle::gram_residual_sq(pruned.matrix.values, j, others);
      const double norm_sq = pruned.matrix.values.col(j).squaredNorm();
      REQUIRE(std::sqrt(std::max(resid_sq, 0.0)) > 1e-9 * std::sqrt(norm_sq));
    }
  }
}

TEST_CASE("instrument-interacted design zeroes the opposite arm", "[dictionary]") {
  Rng rng(19);
  const Eigen::Index n = 8, p = 3;
  DesignMatrix m;
  m.values.resize(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) m.values(i, j) = rng.normal();
  }
  m.labels = {"a", "b", "c"};
  m.sources = {"a", "b", "c"};
  Eigen::VectorXd z(n);
  z << 1, 0, 1, 1, 0, 0, 1, 0;

  const DesignMatrix out = build_z_design(m, z);
  REQUIRE(out.p() == 2 * p);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (z[i] == 1.0) {
      REQUIRE(out.values.row(i).head(p).cwiseAbs().maxCoeff() == 0.0);
      REQUIRE(out.values.row(i).tail(p) == m.values.row(i));
    } else {
      REQUIRE(out.values.row(i).tail(p).cwiseAbs().maxCoeff() == 0.0);
      REQUIRE(out.values.row(i).head(p) == m.values.row(i));
    }
  }

  Eigen::VectorXd bad(n - 1);
  bad.setZero();
  REQUIRE_THROWS_AS(build_z_design(m, bad), std::invalid_argument);
}

TEST_CASE("z-design splits the linear predictor by arm", "[dictionary]") {
  Rng rng(23);
  const Eigen::Index n = 30, p = 4;
  DesignMatrix m;
  m.values.resize(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) m.values(i, j) = rng.normal();
  }
  for (Eigen::Index j = 0; j < p; ++j) {
    m.labels.push_back("c" + std::to_string(j));
    m.sources.push_back("");
  }
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
  Eigen::VectorXd beta0(p), beta1(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    beta0[j] = rng.normal();
    beta1[j] = rng.normal();
  }

  const DesignMatrix out = build_z_design(m, z);
  Eigen::VectorXd stacked(2 * p);
  stacked << beta0, beta1;
  const Eigen::VectorXd lhs = out.values * stacked;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double rhs = (1.0 - z[i]) * m.values.row(i).dot(beta0) +
                       z[i] * m.values.row(i).dot(beta1);
    REQUIRE(lhs[i] == Catch::Approx(rhs).margin(1e-12));
  }
}

TEST_CASE("standardized dictionary columns have unit RMS", "[dictionary]") {
  Rng rng(829);
  Eigen::MatrixXd x(25, 2);
  for (Eigen::Index i = 0; i < 25; ++i) {
    x(i, 0) = 100.0 * rng.normal();
    x(i, 1) = 0.01 * rng.normal();
  }
  RawData raw;
  raw.x = x;
  raw.x_names = {"big", "small"};
  raw.y = Eigen::VectorXd::Zero(25);
  raw.d = Eigen::VectorXd::Zero(25);
  raw.z = Eigen::VectorXd::Zero(25);
  DictionarySpec spec;
  for (const auto& name : raw.x_names) {
    ColumnTransform t;
    t.column = name;
    spec.transforms.push_back(t);
  }
  spec.standardize = true;
  const DesignMatrix m = expand(raw, spec);
  for (Eigen::Index c = 0; c < m.p(); ++c) {
    REQUIRE(std::sqrt(m.values.col(c).squaredNorm() / 25.0) == Catch::Approx(1.0).margin(1e-12));
  }
}
