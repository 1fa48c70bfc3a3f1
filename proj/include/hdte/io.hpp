#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hdte/errors.hpp"
#include "hdte/dictionary.hpp"
#include "hdte/pipeline.hpp"
#include "hdte/simulation.hpp"
#include "hdte/version.hpp"

namespace hdte {

/// 17 significant digits: enough to round-trip any double, so byte-identical
/// outputs certify byte-identical numerics.
inline std::string fmt17(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// FNV-1a, used to stamp the run manifest with a config fingerprint.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open output file: " + path);
  out << content;
  if (!out) throw IoError("write failed: " + path);
}

inline std::string effect_table_csv(const EffectResult& result) {
  std::ostringstream out;
  out << "index,estimate,se_analytic,se_bootstrap,pointwise_lo,pointwise_hi,uniform_lo,"
         "uniform_hi,flag\n";
  for (Eigen::Index i = 0; i < result.estimates.size(); ++i) {
    const int flag =
        result.flags.empty() ? 0 : static_cast<int>(result.flags[static_cast<std::size_t>(i)]);
    out << fmt17(result.grid[static_cast<std::size_t>(i)]) << ',' << fmt17(result.estimates[i])
        << ',' << fmt17(result.se_analytic[i]) << ',' << fmt17(result.se_bootstrap[i]) << ','
        << fmt17(result.pointwise_lo[i]) << ',' << fmt17(result.pointwise_hi[i]) << ','
        << fmt17(result.uniform_lo[i]) << ',' << fmt17(result.uniform_hi[i]) << ',' << flag
        << '\n';
  }
  return out.str();
}

inline nlohmann::json effect_result_json(const EffectResult& r) {
  nlohmann::json j;
  j["estimand"] = estimand_name(r.tag);
  j["critical_value"] = r.critical_value;
  j["flagged_draw_fraction"] = r.flagged_fraction;
  j["warning"] = r.warning;
  j["points"] = nlohmann::json::array();
  for (Eigen::Index i = 0; i < r.estimates.size(); ++i) {
    nlohmann::json p;
    p["index"] = fmt17(r.grid[static_cast<std::size_t>(i)]);
    p["estimate"] = fmt17(r.estimates[i]);
    p["se_analytic"] = fmt17(r.se_analytic[i]);
    p["se_bootstrap"] = fmt17(r.se_bootstrap[i]);
    p["uniform_lo"] = fmt17(r.uniform_lo[i]);
    p["uniform_hi"] = fmt17(r.uniform_hi[i]);
    j["points"].push_back(std::move(p));
  }
  return j;
}

inline nlohmann::json fit_record_json(const FitRecord& f, bool include_loadings) {
  nlohmann::json j;
  j["name"] = f.name;
  j["link"] = f.link;
  j["lambda"] = fmt17(f.lambda);
  j["support_size"] = f.support_size;
  j["iterations"] = f.iterations;
  j["kkt_residual"] = fmt17(f.kkt_residual);
  if (f.separation) j["separation"] = true;
  j["support"] = f.support_labels;
  if (include_loadings && f.loadings.size() > 0) {
    nlohmann::json l = nlohmann::json::array();
    for (Eigen::Index i = 0; i < f.loadings.size(); ++i) l.push_back(fmt17(f.loadings[i]));
    j["loadings"] = std::move(l);
  }
  return j;
}

/// Run manifest: everything needed to reproduce the run plus fit diagnostics.
inline nlohmann::json estimation_manifest(const EstimationOutput& out,
                                          const nlohmann::json& config_echo,
                                          std::uint64_t seed, bool dump_loadings = false) {
  nlohmann::json j;
  j["artifact_version"] = kVersion;
  j["config"] = config_echo;
  j["config_hash"] = fnv1a(config_echo.dump());
  j["seed"] = seed;
  j["dictionary_columns"] = static_cast<long>(out.dictionary_columns);
  j["pruned_columns"] = out.pruned_columns;
  j["trimmed_count_scalar"] = out.trimmed_count_scalar;
  j["trimmed_count_curves"] = out.trimmed_count_curves;
  j["fits"] = nlohmann::json::array();
  for (const FitRecord& f : out.fits) j["fits"].push_back(fit_record_json(f, dump_loadings));
  j["effects"] = nlohmann::json::array();
  for (const EffectResult& r : out.effects) j["effects"].push_back(effect_result_json(r));
  j["failures"] = nlohmann::json::array();
  for (const auto& f : out.failures) {
    j["failures"].push_back({{"estimand", estimand_name(f.first)}, {"error", f.second}});
  }
  return j;
}

/// rho stack, one row per threshold: (alpha(0), alpha(1), gamma) per target.
inline std::string reduced_form_csv(const ReducedForm& rf) {
  static const char* tags[] = {"yu", "d0yu", "d0", "d1yu", "d1"};
  std::ostringstream out;
  out << "u";
  for (const char* t : tags) {
    out << ',' << t << "_alpha0," << t << "_alpha1," << t << "_gamma";
  }
  out << ",trimmed_count\n";
  for (std::size_t k = 0; k < rf.u_grid.size(); ++k) {
    out << fmt17(rf.u_grid[k]);
    for (int c = 0; c < kRhoDim; ++c) out << ',' << fmt17(rf.rho[k][c]);
    out << ',' << (k == 0 ? rf.trimmed_count : 0) << '\n';
  }
  return out.str();
}

/// Bootstrap draws, one row per replication; flagged draws carry flag=1.
inline std::string draws_csv(const EffectResult& r) {
  std::ostringstream out;
  out << "draw,flagged";
  for (std::size_t q = 0; q < r.grid.size(); ++q) out << ",q" << fmt17(r.grid[q]);
  out << '\n';
  for (Eigen::Index b = 0; b < r.draws.rows(); ++b) {
    out << b << ',' << static_cast<int>(r.draw_flags[static_cast<std::size_t>(b)]);
    for (Eigen::Index q = 0; q < r.draws.cols(); ++q) out << ',' << fmt17(r.draws(b, q));
    out << '\n';
  }
  return out.str();
}

inline std::string design_matrix_csv(const DesignMatrix& m) {
  std::ostringstream out;
  for (Eigen::Index c = 0; c < m.p(); ++c) {
    if (c) out << ',';
    out << m.labels[static_cast<std::size_t>(c)];
  }
  out << '\n';
  for (Eigen::Index i = 0; i < m.n(); ++i) {
    for (Eigen::Index c = 0; c < m.p(); ++c) {
      if (c) out << ',';
      out << fmt17(m.values(i, c));
    }
    out << '\n';
  }
  return out.str();
}

inline std::string size_table_csv(const SizeTable& table) {
  std::ostringstream out;
  out << "r2_d,r2_y,true_ate,reject_orthogonal,mcse_orthogonal,reject_naive,mcse_naive,"
         "failures_orthogonal,failures_naive,replications\n";
  for (const SizeCell& c : table.cells) {
    out << fmt17(c.r2_d) << ',' << fmt17(c.r2_y) << ',' << fmt17(c.true_ate) << ','
        << fmt17(c.reject_orthogonal) << ',' << fmt17(c.mcse_orthogonal) << ','
        << fmt17(c.reject_naive) << ',' << fmt17(c.mcse_naive) << ',' << c.failures_orthogonal
        << ',' << c.failures_naive << ',' << c.replications << '\n';
  }
  return out.str();
}

/// Heatmap-ready layout: grid axes plus one rejection matrix per estimator.
inline nlohmann::json size_table_json(const SizeTable& table) {
  nlohmann::json j;
  j["r2_d_grid"] = table.config.r2_d_grid;
  j["r2_y_grid"] = table.config.r2_y_grid;
  j["nominal_level"] = table.config.nominal_level;
  j["replications"] = table.config.replications;
  j["seed"] = table.config.master_seed;
  const std::size_t ny = table.config.r2_y_grid.size();
  nlohmann::json orth = nlohmann::json::array();
  nlohmann::json naive = nlohmann::json::array();
  for (std::size_t i = 0; i < table.config.r2_d_grid.size(); ++i) {
    nlohmann::json row_o = nlohmann::json::array();
    nlohmann::json row_n = nlohmann::json::array();
    for (std::size_t k = 0; k < ny; ++k) {
      const SizeCell& c = table.cells[i * ny + k];
      row_o.push_back(c.reject_orthogonal);
      row_n.push_back(c.reject_naive);
    }
    orth.push_back(std::move(row_o));
    naive.push_back(std::move(row_n));
  }
  j["orthogonal"] = std::move(orth);
  j["naive"] = std::move(naive);
  return j;
}

}  // namespace hdte
