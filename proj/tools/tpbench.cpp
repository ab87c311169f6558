#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "targetprop/experiment.hpp"
#include "targetprop/gradcheck.hpp"

namespace {

using namespace targetprop;

void log_line(const std::string& msg) { std::cout << msg << '\n' << std::flush; }

/// Loads the config and applies CLI overrides common to run/search/autoencode.
ExperimentConfig load_config(const std::string& path, long long seed, long long epochs,
                             const std::string& out) {
  ExperimentConfig cfg = load_experiment_config(path);
  if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
  if (epochs >= 0) cfg.epochs = static_cast<std::size_t>(epochs);
  if (!out.empty()) cfg.output_dir = out;
  if (cfg.data_dir.empty()) {
    const char* env = std::getenv("TPBENCH_DATA_DIR");
    if (env) cfg.data_dir = env;
  }
  cfg.validate();
  return cfg;
}

int run_gradcheck(const std::string& rule, std::uint64_t seed) {
  GradCheckReport report;
  if (rule == "bp")
    report = gradcheck_bp(seed);
  else if (rule == "forward_loss")
    report = gradcheck_forward_loss(seed);
  else if (rule == "inverse_loss") {
    GradCheckReport denoise = gradcheck_inverse_loss(seed, InverseLossMode::Denoising);
    report = gradcheck_inverse_loss(seed, InverseLossMode::NoisePreserving);
    for (auto& b : denoise.blocks) report.blocks.push_back(b);
    report.max_rel_err = std::max(report.max_rel_err, denoise.max_rel_err);
  } else if (rule == "dtp_penultimate")
    report = gradcheck_dtp_penultimate(seed);
  else if (rule == "hybrid")
    report = gradcheck_hybrid(seed);
  else {
    std::cerr << "E_GRADCHECK_RULE unknown rule '" << rule
              << "' (want bp|forward_loss|inverse_loss|dtp_penultimate|hybrid)\n";
    return 2;
  }
  for (const auto& [name, err] : report.blocks)
    std::cout << name << " max_rel_err " << format_double(err) << '\n';
  std::cout << "worst " << format_double(report.max_rel_err) << '\n';
  const double threshold = rule == "hybrid" ? 1e-9 : 1e-6;
  if (report.max_rel_err > threshold) {
    std::cerr << "E_GRADCHECK_FAIL worst relative error " << format_double(report.max_rel_err)
              << " exceeds " << format_double(threshold) << '\n';
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Training toolkit for gradient-free and gradient-based credit assignment"};
  app.require_subcommand(1);

  std::string config_path, out_dir, gradcheck_rule = "bp", plot_out = "curves.svg";
  std::vector<std::string> plot_inputs;
  long long seed = -1, epochs = -1;
  std::size_t n_configs = 60, jobs = 1;
  std::uint64_t gradcheck_seed = 1;

  CLI::App* run = app.add_subcommand("run", "Train one experiment from a JSON config");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required();
  run->add_option("--seed", seed, "Override the config seed");
  run->add_option("--epochs", epochs, "Override the config epoch count");
  run->add_option("--out", out_dir, "Override the config output directory");

  CLI::App* gc = app.add_subcommand("gradcheck", "Compare analytic gradients to finite differences");
  gc->add_option("rule", gradcheck_rule,
                 "bp | forward_loss | inverse_loss | dtp_penultimate | hybrid");
  gc->add_option("--seed", gradcheck_seed, "Fixture seed");

  CLI::App* search = app.add_subcommand("search", "Random hyperparameter search");
  search->add_option("--config", config_path, "Base experiment config (JSON)")->required();
  search->add_option("--n", n_configs, "Number of sampled configurations");
  search->add_option("--epochs", epochs, "Override epochs per trial");
  search->add_option("--seed", seed, "Override the config seed");
  search->add_option("--jobs", jobs, "Concurrent trials (results are scheduling-independent)");
  search->add_option("--out", out_dir, "Override the config output directory");

  CLI::App* ae = app.add_subcommand("autoencode", "Train the MNIST autoencoder preset");
  ae->add_option("--config", config_path, "Experiment config (JSON)")->required();
  ae->add_option("--seed", seed, "Override the config seed");
  ae->add_option("--epochs", epochs, "Override the config epoch count");
  ae->add_option("--out", out_dir, "Override the config output directory");

  CLI::App* plot = app.add_subcommand("plot", "Render learning curves from metrics CSVs");
  plot->add_option("inputs", plot_inputs, "metrics.csv files")->required();
  plot->add_option("--out", plot_out, "Output SVG path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      ExperimentConfig cfg = load_config(config_path, seed, epochs, out_dir);
      RunResult result = run_experiment(cfg, log_line);
      std::cout << "best_test_err " << format_double(result.best_test_err) << " at epoch "
                << result.best_epoch << '\n';
      return 0;
    }
    if (gc->parsed()) return run_gradcheck(gradcheck_rule, gradcheck_seed);
    if (search->parsed()) {
      ExperimentConfig cfg = load_config(config_path, seed, epochs, out_dir);
      std::vector<TrialResult> results = run_search(cfg, n_configs, jobs, log_line);
      std::cout << "best trial " << results.front().trial << " best_test_err "
                << format_double(results.front().best_test_err) << '\n';
      return 0;
    }
    if (ae->parsed()) {
      ExperimentConfig cfg = load_config(config_path, seed, epochs, out_dir);
      RunResult result = run_autoencoder(cfg, log_line);
      std::cout << "best_test_recon " << format_double(result.best_test_err) << " at epoch "
                << result.best_epoch << '\n';
      return 0;
    }
    if (plot->parsed()) {
      plot_curves(plot_inputs, plot_out);
      std::cout << "wrote " << plot_out << '\n';
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "E_CONFIG " << e.what() << '\n';
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "E_FORMAT " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "E_RUNTIME " << e.what() << '\n';
    return 4;
  }
  return 0;
}
