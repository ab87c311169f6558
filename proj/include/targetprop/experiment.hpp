#pragma once

#include <nlohmann/json.hpp>

#include "targetprop/optim.hpp"

namespace targetprop {

/// Everything needed to reproduce one training run. Parsed from JSON with
/// exact field names; unknown fields are hard errors.
struct ExperimentConfig {
  std::string dataset;              // "mnist" or "cifar10"
  std::string architecture;         // preset name (see preset_arch)
  RuleConfig rule;
  Schedule schedule = Schedule::Parallel;
  AdamConfig forward_adam;
  AdamConfig inverse_adam;
  std::size_t epochs = 50;
  std::size_t batch_size = 128;
  std::uint64_t seed = 1;
  AugmentConfig augment;
  std::string data_dir;             // directory holding the dataset files
  std::string output_dir = ".";
  std::size_t train_subset = 0;     // 0 = full training set

  void validate() const;
};

ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);
nlohmann::json to_json(const ExperimentConfig& cfg);

/// Loads the training or test split named by the config.
Dataset load_split(const ExperimentConfig& cfg, bool train);

struct MetricsRow {
  std::size_t epoch = 0;
  double train_err = -1.0;   // percent; < 0 means not applicable
  double test_err = -1.0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double inv_loss = -1.0;    // < 0 means not applicable
  double wall_s = 0.0;
};

/// Header `epoch,train_err,test_err,train_loss,test_loss,inv_loss,wall_s`;
/// inapplicable columns are written as empty strings. Floats use shortest
/// round-trip formatting, so identical values give identical bytes.
void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);

struct RunResult {
  std::vector<MetricsRow> rows;
  double best_test_err = 100.0;
  std::size_t best_epoch = 0;
  double final_test_err = 100.0;
};

/// Trains per config; writes metrics.csv, final_summary.json and
/// checkpoint.bin under cfg.output_dir. `log` (optional) receives one line
/// per epoch.
RunResult run_experiment(const ExperimentConfig& cfg,
                         const std::function<void(const std::string&)>& log = nullptr);

/// Autoencoder study: loss columns carry squared L2 reconstruction error,
/// error columns stay empty. Also dumps a grid of sample reconstructions as
/// PGM files under cfg.output_dir.
RunResult run_autoencoder(const ExperimentConfig& cfg,
                          const std::function<void(const std::string&)>& log = nullptr);

/// Random hyperparameter search around a base config. Writes trials.csv
/// (per-trial sampled values and best errors, sorted by test error) and
/// histogram.csv (binned best test accuracy) under cfg.output_dir. Trials
/// use derived child seeds, so results do not depend on `jobs`.
std::vector<TrialResult> run_search(const ExperimentConfig& cfg, std::size_t n_configs,
                                    std::size_t jobs,
                                    const std::function<void(const std::string&)>& log = nullptr);

/// Flat binary container: magic "TPCKPT1\n", little-endian u64 JSON index
/// length, JSON index [{name, shape, offset}], then f64 blocks.
void write_checkpoint(const std::string& path, Network& net);
/// Restores parameter blocks by name into an identically-shaped network.
void read_checkpoint(const std::string& path, Network& net);

/// Learning-curve SVG: one color per input file, train curves dashed, test
/// curves solid, legend from file stems. Falls back to the loss columns when
/// the error columns are empty (autoencoder runs).
void plot_curves(const std::vector<std::string>& metrics_csv_paths, const std::string& out_svg);

/// Binary PGM (P5, maxval 255) from values in [0, 1], clamped.
void write_pgm(const std::string& path, const std::vector<double>& image, std::size_t h,
               std::size_t w);

/// Shortest decimal form that round-trips the double exactly.
std::string format_double(double v);

}  // namespace targetprop
