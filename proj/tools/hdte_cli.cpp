// Command-line driver: expand | estimate | simulate | version.
// Exit codes: 0 success, 2 config error, 3 estimation failure, 4 I/O error.

#include <CLI11.hpp>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>

#include "hdte/config.hpp"
#include "hdte/data.hpp"
#include "hdte/errors.hpp"
#include "hdte/io.hpp"
#include "hdte/pipeline.hpp"
#include "hdte/simulation.hpp"
#include "hdte/version.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitEstimation = 3;
constexpr int kExitIo = 4;

struct Overrides {
  std::string config_path;
  std::string input;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool has_seed = false;
  int bootstrap_b = 0;
  int replications = 0;
  bool dump_fits = false;
  bool dump_reduced_form = false;
  bool dump_draws = false;
};

std::string estimand_file_stem(hdte::Estimand e) {
  std::string name = hdte::estimand_name(e);
  for (char& c : name) {
    if (c == '-') c = '_';
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return name;
}

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw hdte::IoError("cannot create output directory '" + dir + "': " + ec.message());
}

int cmd_expand(const Overrides& ov) {
  const nlohmann::json config = hdte::load_json_file(ov.config_path);
  hdte::RunConfig run = hdte::parse_run_config(config);
  if (!ov.input.empty()) run.input_path = ov.input;
  if (!ov.out_dir.empty()) run.out_dir = ov.out_dir;
  if (run.input_path.empty()) throw hdte::ConfigError("no input file given");

  const hdte::RawData raw =
      hdte::load_csv_file(run.input_path, run.y_col, run.d_col, run.z_col);
  hdte::PipelineDesign design;
  try {
    design = hdte::build_design(raw, run.est);
  } catch (const std::invalid_argument& ex) {
    throw hdte::ConfigError(ex.what());  // e.g. a transform names a missing column
  }

  ensure_out_dir(run.out_dir);
  hdte::write_text_file(run.out_dir + "/design.csv", hdte::design_matrix_csv(design.F));
  nlohmann::json manifest;
  manifest["artifact_version"] = hdte::kVersion;
  manifest["config"] = run.echo;
  manifest["config_hash"] = hdte::fnv1a(run.echo.dump());
  manifest["columns"] = design.F.labels;
  manifest["sources"] = design.F.sources;
  manifest["pruned_columns"] = design.pruned;
  manifest["n"] = static_cast<long>(design.F.n());
  manifest["p"] = static_cast<long>(design.F.p());
  hdte::write_text_file(run.out_dir + "/design_manifest.json", manifest.dump(2) + "\n");
  std::cout << "expanded dictionary: " << design.F.n() << " x " << design.F.p() << " ("
            << design.pruned.size() << " pruned)\n";
  return kExitOk;
}

int cmd_estimate(const Overrides& ov) {
  const nlohmann::json config = hdte::load_json_file(ov.config_path);
  hdte::RunConfig run = hdte::parse_run_config(config);
  if (!ov.input.empty()) run.input_path = ov.input;
  if (!ov.out_dir.empty()) run.out_dir = ov.out_dir;
  if (ov.has_seed) run.est.seed = ov.seed;
  if (ov.bootstrap_b > 0) run.est.bootstrap_b = ov.bootstrap_b;
  run.est.keep_reduced_form = ov.dump_reduced_form;
  run.est.keep_draws = ov.dump_draws;
  if (run.input_path.empty()) throw hdte::ConfigError("no input file given");
  if (run.est.estimands.empty()) throw hdte::ConfigError("no estimands requested");

  const hdte::RawData raw =
      hdte::load_csv_file(run.input_path, run.y_col, run.d_col, run.z_col);

  hdte::EstimationOutput out;
  try {
    out = hdte::run_estimation(raw, run.est);
  } catch (const std::invalid_argument& ex) {
    throw hdte::ConfigError(ex.what());
  }

  ensure_out_dir(run.out_dir);
  for (const hdte::EffectResult& r : out.effects) {
    hdte::write_text_file(run.out_dir + "/" + estimand_file_stem(r.tag) + ".csv",
                          hdte::effect_table_csv(r));
    if (ov.dump_draws && r.draws.rows() > 0) {
      hdte::write_text_file(run.out_dir + "/" + estimand_file_stem(r.tag) + "_draws.csv",
                            hdte::draws_csv(r));
    }
  }
  if (ov.dump_reduced_form) {
    if (out.reduced_scalar) {
      hdte::write_text_file(run.out_dir + "/reduced_form_scalar.csv",
                            hdte::reduced_form_csv(*out.reduced_scalar));
    }
    if (out.reduced_curves) {
      hdte::write_text_file(run.out_dir + "/reduced_form_curves.csv",
                            hdte::reduced_form_csv(*out.reduced_curves));
    }
  }
  nlohmann::json manifest =
      hdte::estimation_manifest(out, run.echo, run.est.seed, ov.dump_fits);
  hdte::write_text_file(run.out_dir + "/manifest.json", manifest.dump(2) + "\n");

  for (const auto& f : out.failures) {
    std::cerr << "estimation failed for " << hdte::estimand_name(f.first) << ": " << f.second
              << "\n";
  }
  if (out.effects.empty()) {
    std::cerr << "all estimands failed\n";
    return kExitEstimation;
  }
  std::cout << "wrote " << out.effects.size() << " effect table(s) to " << run.out_dir << "\n";
  return kExitOk;
}

int cmd_simulate(const Overrides& ov) {
  const nlohmann::json config = hdte::load_json_file(ov.config_path);
  hdte::SimConfig cfg = hdte::parse_sim_config(config);
  if (ov.has_seed) cfg.master_seed = ov.seed;
  if (ov.replications > 0) cfg.replications = ov.replications;
  const std::string out_dir = ov.out_dir.empty() ? config.value("out_dir", std::string(".")) : ov.out_dir;

  hdte::SizeTable table;
  try {
    table = hdte::run_size_experiment(cfg);
  } catch (const std::invalid_argument& ex) {
    throw hdte::ConfigError(ex.what());
  }

  ensure_out_dir(out_dir);
  hdte::write_text_file(out_dir + "/size_table.csv", hdte::size_table_csv(table));
  nlohmann::json j = hdte::size_table_json(table);
  j["artifact_version"] = hdte::kVersion;
  j["config"] = config;
  j["config_hash"] = hdte::fnv1a(config.dump());
  hdte::write_text_file(out_dir + "/size_table.json", j.dump(2) + "\n");
  std::cout << "wrote size table (" << table.cells.size() << " cells) to " << out_dir << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Treatment-effect estimation with very many controls"};
  app.require_subcommand(1);

  Overrides ov;
  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", ov.config_path, "JSON run configuration");
    if (needs_config) opt->required();
    sub->add_option("--out", ov.out_dir, "output directory (overrides config)");
    sub->add_option("--seed", ov.seed, "master seed (overrides config)")
        ->each([&](const std::string&) { ov.has_seed = true; });
  };

  CLI::App* expand = app.add_subcommand("expand", "write the expanded design matrix");
  add_common(expand, true);
  expand->add_option("--input", ov.input, "input CSV (overrides config)");

  CLI::App* estimate = app.add_subcommand("estimate", "estimate the configured effects");
  add_common(estimate, true);
  estimate->add_option("--input", ov.input, "input CSV (overrides config)");
  estimate->add_option("--bootstrap", ov.bootstrap_b, "bootstrap replications (overrides config)");
  estimate->add_flag("--dump-fits", ov.dump_fits, "include penalty loadings in the manifest");
  estimate->add_flag("--dump-reduced-form", ov.dump_reduced_form,
                     "write the reduced-form vectors per threshold as CSV");
  estimate->add_flag("--dump-draws", ov.dump_draws, "write bootstrap draws per estimand as CSV");

  CLI::App* simulate = app.add_subcommand("simulate", "run the size experiment");
  add_common(simulate, true);
  simulate->add_option("--replications", ov.replications,
                       "replications per cell (overrides config)");

  CLI::App* version = app.add_subcommand("version", "print the artifact version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (version->parsed()) {
      std::cout << hdte::kVersion << "\n";
      return kExitOk;
    }
    if (expand->parsed()) return cmd_expand(ov);
    if (estimate->parsed()) return cmd_estimate(ov);
    if (simulate->parsed()) return cmd_simulate(ov);
  } catch (const hdte::ConfigError& ex) {
    std::cerr << "config error: " << ex.what() << "\n";
    return kExitConfig;
  } catch (const hdte::IoError& ex) {
    std::cerr << "i/o error: " << ex.what() << "\n";
    return kExitIo;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitEstimation;
  }
  return kExitOk;
}
