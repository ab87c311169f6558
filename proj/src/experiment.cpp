#include "targetprop/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace targetprop {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::string& where,
                    const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!allowed.count(key)) throw ConfigError(where + ": unknown field '" + key + "'");
  }
}

AdamConfig parse_adam(const json& j, const std::string& where) {
  reject_unknown(j, where, {"lr", "beta1", "beta2", "eps"});
  AdamConfig cfg;
  if (j.contains("lr")) cfg.lr = j.at("lr").get<double>();
  if (j.contains("beta1")) cfg.beta1 = j.at("beta1").get<double>();
  if (j.contains("beta2")) cfg.beta2 = j.at("beta2").get<double>();
  if (j.contains("eps")) cfg.eps = j.at("eps").get<double>();
  return cfg;
}

json adam_to_json(const AdamConfig& cfg) {
  return json{{"lr", cfg.lr}, {"beta1", cfg.beta1}, {"beta2", cfg.beta2}, {"eps", cfg.eps}};
}

RuleConfig parse_rule(const json& j) {
  reject_unknown(j, "rule", {"kind", "alpha", "sigma", "alpha_mix", "z_size",
                             "inverse_loss_mode"});
  RuleConfig rule;
  if (!j.contains("kind")) throw ConfigError("rule: missing field 'kind'");
  rule.kind = rule_kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("alpha")) rule.alpha = j.at("alpha").get<double>();
  if (j.contains("sigma")) rule.sigma = j.at("sigma").get<double>();
  if (j.contains("alpha_mix")) rule.alpha_mix = j.at("alpha_mix").get<double>();
  if (j.contains("z_size")) rule.z_size = j.at("z_size").get<std::size_t>();
  if (j.contains("inverse_loss_mode")) {
    const std::string mode = j.at("inverse_loss_mode").get<std::string>();
    if (mode == "denoising")
      rule.inverse_loss_mode = InverseLossMode::Denoising;
    else if (mode == "noise_preserving")
      rule.inverse_loss_mode = InverseLossMode::NoisePreserving;
    else
      throw ConfigError("rule: unknown inverse_loss_mode '" + mode + "'");
  }
  return rule;
}

json rule_to_json(const RuleConfig& rule) {
  return json{{"kind", to_string(rule.kind)},
              {"alpha", rule.alpha},
              {"sigma", rule.sigma},
              {"alpha_mix", rule.alpha_mix},
              {"z_size", rule.z_size},
              {"inverse_loss_mode", rule.inverse_loss_mode == InverseLossMode::Denoising
                                        ? "denoising"
                                        : "noise_preserving"}};
}

AugmentConfig parse_augment(const json& j) {
  reject_unknown(j, "augment", {"enabled", "flip_prob", "crop_pad", "flip_vertical"});
  AugmentConfig cfg;
  if (j.contains("enabled")) cfg.enabled = j.at("enabled").get<bool>();
  if (j.contains("flip_prob")) cfg.flip_prob = j.at("flip_prob").get<double>();
  if (j.contains("crop_pad")) cfg.crop_pad = j.at("crop_pad").get<std::size_t>();
  if (j.contains("flip_vertical")) cfg.flip_vertical = j.at("flip_vertical").get<bool>();
  return cfg;
}

std::string csv_field(double v) { return v < 0.0 ? std::string() : format_double(v); }

std::string metrics_line(const MetricsRow& r) {
  std::ostringstream line;
  line << r.epoch << ',' << csv_field(r.train_err) << ',' << csv_field(r.test_err) << ','
       << format_double(r.train_loss) << ',' << format_double(r.test_loss) << ','
       << csv_field(r.inv_loss) << ',' << format_double(r.wall_s) << '\n';
  return line.str();
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(path + ": cannot open for writing");
  return out;
}

FeedbackInit feedback_for(RuleKind kind) {
  if (kind == RuleKind::Fa) return FeedbackInit::Fa;
  if (kind == RuleKind::Dfa) return FeedbackInit::Dfa;
  return FeedbackInit::None;
}

Network build_from_config(const ExperimentConfig& cfg, SeededRng& rng) {
  const std::size_t aux = cfg.rule.kind == RuleKind::AoSdtp ? cfg.rule.z_size : 0;
  return build_network(cfg.architecture, rng, aux, feedback_for(cfg.rule.kind));
}

/// Core training loop shared by run/search/autoencode. When `reconstruction`
/// the error columns stay empty and losses carry reconstruction error.
RunResult train_loop(const ExperimentConfig& cfg, Network& net, SeededRng& rng,
                     const Dataset& train, const Dataset& test, bool reconstruction,
                     const std::function<void(const std::string&)>& log) {
  Adam opt_forward(cfg.forward_adam);
  Adam opt_inverse(cfg.inverse_adam);
  RunResult result;
  const AugmentConfig* aug = cfg.augment.enabled ? &cfg.augment : nullptr;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochMetrics em = train_epoch(net, train, cfg.rule, cfg.schedule, opt_forward,
                                  opt_inverse, rng, cfg.batch_size, aug);
    MetricsRow row;
    row.epoch = epoch;
    if (reconstruction) {
      row.train_loss = evaluate_reconstruction(net, train);
      row.test_loss = evaluate_reconstruction(net, test);
      row.test_err = -1.0;
      if (row.test_loss < result.best_test_err || result.rows.empty()) {
        result.best_test_err = row.test_loss;
        result.best_epoch = epoch;
      }
      result.final_test_err = row.test_loss;
    } else {
      EvalResult tr = evaluate(net, train);
      EvalResult te = evaluate(net, test);
      row.train_err = tr.error_pct;
      row.test_err = te.error_pct;
      row.train_loss = tr.loss;
      row.test_loss = te.loss;
      if (te.error_pct < result.best_test_err) {
        result.best_test_err = te.error_pct;
        result.best_epoch = epoch;
      }
      result.final_test_err = te.error_pct;
    }
    row.inv_loss = em.has_inverse ? em.inverse_loss : -1.0;
    row.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.rows.push_back(row);
    if (log) {
      std::ostringstream msg;
      msg << "epoch " << epoch << "/" << cfg.epochs;
      if (reconstruction)
        msg << " train_recon " << row.train_loss << " test_recon " << row.test_loss;
      else
        msg << " train_err " << row.train_err << "% test_err " << row.test_err << "%";
      if (row.inv_loss >= 0.0) msg << " inv_loss " << row.inv_loss;
      log(msg.str());
    }
  }
  return result;
}

void write_summary(const std::string& path, const ExperimentConfig& cfg,
                   const RunResult& result, double initial_metric) {
  json summary{{"dataset", cfg.dataset},
               {"architecture", cfg.architecture},
               {"rule", to_string(cfg.rule.kind)},
               {"epochs", cfg.epochs},
               {"seed", cfg.seed},
               {"initial_test_metric", initial_metric},
               {"best_test_err", result.best_test_err},
               {"best_epoch", result.best_epoch},
               {"final_test_err", result.final_test_err}};
  open_out(path) << summary.dump(2) << '\n';
}

/// Stable parameter-block names used by the checkpoint index.
std::vector<std::pair<std::string, Tensor*>> named_params(Network& net) {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (std::size_t l = 0; l < net.depth(); ++l) {
    std::size_t k = 0;
    for (Tensor* p : net.layers[l]->params())
      out.emplace_back("layer" + std::to_string(l) + ".p" + std::to_string(k++), p);
  }
  for (std::size_t l = 0; l < net.inverses.size(); ++l) {
    if (!net.inverses[l]) continue;
    std::size_t k = 0;
    for (Tensor* p : net.inverses[l]->params())
      out.emplace_back("inverse" + std::to_string(l) + ".p" + std::to_string(k++), p);
  }
  return out;
}

constexpr char kCheckpointMagic[] = "TPCKPT1\n";

}  // namespace

std::string format_double(double v) {
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

void ExperimentConfig::validate() const {
  if (dataset != "mnist" && dataset != "cifar10")
    throw ConfigError("dataset: expected 'mnist' or 'cifar10', got '" + dataset + "'");
  const ArchSpec arch = preset_arch(architecture);  // throws on unknown preset
  const std::size_t in_dim = arch.in_h * arch.in_w * arch.in_c;
  const std::size_t want = dataset == "mnist" ? 784 : 3072;
  if (in_dim != want)
    throw ConfigError("architecture '" + architecture + "' expects input dim " +
                      std::to_string(in_dim) + " but dataset '" + dataset + "' provides " +
                      std::to_string(want));
  if (rule.kind == RuleKind::AoSdtp && rule.z_size == 0)
    throw ConfigError("rule: ao_sdtp requires z_size > 0");
  if (rule.kind != RuleKind::AoSdtp && rule.z_size != 0)
    throw ConfigError("rule: z_size is only meaningful for ao_sdtp");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (rule.sigma < 0.0) throw ConfigError("rule: sigma must be >= 0");
  if (rule.alpha_mix < 0.0 || rule.alpha_mix > 1.0)
    throw ConfigError("rule: alpha_mix must lie in [0, 1]");
  forward_adam.validate();
  if (rule.is_tp_family()) inverse_adam.validate();
  if (data_dir.empty()) throw ConfigError("data_dir must be set");
}

ExperimentConfig parse_experiment_config(const json& j) {
  reject_unknown(j, "config",
                 {"dataset", "architecture", "rule", "schedule", "forward_adam",
                  "inverse_adam", "epochs", "batch_size", "seed", "augment", "data_dir",
                  "output_dir", "train_subset"});
  ExperimentConfig cfg;
  for (const char* field : {"dataset", "architecture", "rule"})
    if (!j.contains(field)) throw ConfigError(std::string("config: missing field '") + field + "'");
  cfg.dataset = j.at("dataset").get<std::string>();
  cfg.architecture = j.at("architecture").get<std::string>();
  cfg.rule = parse_rule(j.at("rule"));
  if (j.contains("schedule")) cfg.schedule = schedule_from_string(j.at("schedule").get<std::string>());
  if (j.contains("forward_adam")) cfg.forward_adam = parse_adam(j.at("forward_adam"), "forward_adam");
  if (j.contains("inverse_adam")) cfg.inverse_adam = parse_adam(j.at("inverse_adam"), "inverse_adam");
  if (j.contains("epochs")) cfg.epochs = j.at("epochs").get<std::size_t>();
  if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<std::size_t>();
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("augment")) cfg.augment = parse_augment(j.at("augment"));
  if (j.contains("data_dir")) cfg.data_dir = j.at("data_dir").get<std::string>();
  if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
  if (j.contains("train_subset")) cfg.train_subset = j.at("train_subset").get<std::size_t>();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_experiment_config(j);
}

json to_json(const ExperimentConfig& cfg) {
  return json{{"dataset", cfg.dataset},
              {"architecture", cfg.architecture},
              {"rule", rule_to_json(cfg.rule)},
              {"schedule", cfg.schedule == Schedule::Parallel ? "parallel" : "alternating"},
              {"forward_adam", adam_to_json(cfg.forward_adam)},
              {"inverse_adam", adam_to_json(cfg.inverse_adam)},
              {"epochs", cfg.epochs},
              {"batch_size", cfg.batch_size},
              {"seed", cfg.seed},
              {"augment", json{{"enabled", cfg.augment.enabled},
                               {"flip_prob", cfg.augment.flip_prob},
                               {"crop_pad", cfg.augment.crop_pad},
                               {"flip_vertical", cfg.augment.flip_vertical}}},
              {"data_dir", cfg.data_dir},
              {"output_dir", cfg.output_dir},
              {"train_subset", cfg.train_subset}};
}

Dataset load_split(const ExperimentConfig& cfg, bool train) {
  const std::string& dir = cfg.data_dir;
  Dataset d;
  if (cfg.dataset == "mnist") {
    d = train ? load_mnist(dir + "/train-images-idx3-ubyte", dir + "/train-labels-idx1-ubyte")
              : load_mnist(dir + "/t10k-images-idx3-ubyte", dir + "/t10k-labels-idx1-ubyte");
  } else {
    std::vector<std::string> paths;
    if (train)
      for (int b = 1; b <= 5; ++b) paths.push_back(dir + "/data_batch_" + std::to_string(b) + ".bin");
    else
      paths.push_back(dir + "/test_batch.bin");
    d = load_cifar10(paths);
  }
  if (train && cfg.train_subset > 0) d = d.subset(cfg.train_subset);
  return d;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out = open_out(path);
  out << "epoch,train_err,test_err,train_loss,test_loss,inv_loss,wall_s\n";
  for (const MetricsRow& r : rows) out << metrics_line(r);
}

RunResult run_experiment(const ExperimentConfig& cfg,
                         const std::function<void(const std::string&)>& log) {
  cfg.validate();
  std::filesystem::create_directories(cfg.output_dir);
  const Dataset train = load_split(cfg, true);
  const Dataset test = load_split(cfg, false);
  SeededRng rng(cfg.seed);
  Network net = build_from_config(cfg, rng);
  const double initial = evaluate(net, test).error_pct;
  RunResult result = train_loop(cfg, net, rng, train, test, false, log);
  if (result.rows.empty()) {
    result.best_test_err = result.final_test_err = initial;
  }
  write_metrics_csv(cfg.output_dir + "/metrics.csv", result.rows);
  write_summary(cfg.output_dir + "/final_summary.json", cfg, result, initial);
  write_checkpoint(cfg.output_dir + "/checkpoint.bin", net);
  return result;
}

RunResult run_autoencoder(const ExperimentConfig& cfg,
                          const std::function<void(const std::string&)>& log) {
  cfg.validate();
  if (cfg.dataset != "mnist") throw ConfigError("autoencode: dataset must be mnist");
  std::filesystem::create_directories(cfg.output_dir);
  const Dataset train = load_split(cfg, true);
  const Dataset test = load_split(cfg, false);
  SeededRng rng(cfg.seed);
  Network net = build_from_config(cfg, rng);
  const double initial = evaluate_reconstruction(net, test);
  RunResult result = train_loop(cfg, net, rng, train, test, true, log);
  if (result.rows.empty()) {
    result.best_test_err = result.final_test_err = initial;
  }
  write_metrics_csv(cfg.output_dir + "/metrics.csv", result.rows);
  write_summary(cfg.output_dir + "/final_summary.json", cfg, result, initial);
  write_checkpoint(cfg.output_dir + "/checkpoint.bin", net);

  // Dump the first few test digits next to their reconstructions.
  const std::size_t n_show = std::min<std::size_t>(8, test.n);
  std::vector<std::size_t> idx(n_show);
  for (std::size_t i = 0; i < n_show; ++i) idx[i] = i;
  Batch batch = make_batch(test, idx);
  ActivationTape tape = forward_pass(net, batch.x);
  for (std::size_t s = 0; s < n_show; ++s) {
    std::vector<double> orig(test.sample_dim()), recon(test.sample_dim());
    for (std::size_t r = 0; r < orig.size(); ++r) {
      orig[r] = batch.x.at(r, s);
      recon[r] = tape.h.back().at(r, s);
    }
    write_pgm(cfg.output_dir + "/sample" + std::to_string(s) + "_input.pgm", orig, test.h, test.w);
    write_pgm(cfg.output_dir + "/sample" + std::to_string(s) + "_recon.pgm", recon, test.h, test.w);
  }
  return result;
}

std::vector<TrialResult> run_search(const ExperimentConfig& cfg, std::size_t n_configs,
                                    std::size_t jobs,
                                    const std::function<void(const std::string&)>& log) {
  cfg.validate();
  std::filesystem::create_directories(cfg.output_dir);
  const Dataset train = load_split(cfg, true);
  const Dataset test = load_split(cfg, false);
  HyperparamSpace space;
  SeededRng base(cfg.seed);

  auto run_trial = [&](std::size_t trial, const SampledConfig& sampled,
                       std::uint64_t trial_seed) {
    ExperimentConfig trial_cfg = cfg;
    trial_cfg.forward_adam = sampled.forward_adam;
    trial_cfg.inverse_adam = sampled.inverse_adam;
    trial_cfg.rule.alpha = sampled.alpha;
    trial_cfg.rule.sigma = sampled.sigma;
    trial_cfg.seed = trial_seed;
    SeededRng rng(trial_seed);
    Network net = build_from_config(trial_cfg, rng);
    RunResult run = train_loop(trial_cfg, net, rng, train, test, false, nullptr);
    TrialResult result;
    result.trial = trial;
    result.config = sampled;
    result.best_test_err = run.best_test_err;
    result.best_epoch = run.best_epoch;
    result.best_train_err = 100.0;
    for (const MetricsRow& row : run.rows)
      result.best_train_err = std::min(result.best_train_err, row.train_err);
    if (log) log("trial " + std::to_string(trial) + " best_test_err " +
                 format_double(run.best_test_err));
    return result;
  };

  std::vector<TrialResult> results = random_search(n_configs, space, base, run_trial, jobs);

  std::ofstream trials = open_out(cfg.output_dir + "/trials.csv");
  trials << "trial,lr,beta2,eps,inv_lr,inv_beta2,inv_eps,alpha,sigma,"
            "best_test_err,best_train_err,best_epoch\n";
  for (const TrialResult& r : results) {
    trials << r.trial << ',' << format_double(r.config.forward_adam.lr) << ','
           << format_double(r.config.forward_adam.beta2) << ','
           << format_double(r.config.forward_adam.eps) << ','
           << format_double(r.config.inverse_adam.lr) << ','
           << format_double(r.config.inverse_adam.beta2) << ','
           << format_double(r.config.inverse_adam.eps) << ','
           << format_double(r.config.alpha) << ',' << format_double(r.config.sigma) << ','
           << format_double(r.best_test_err) << ',' << format_double(r.best_train_err) << ','
           << r.best_epoch << '\n';
  }

  // Best test accuracy binned over [0, 100] in 5-point bins.
  constexpr std::size_t kBins = 20;
  std::vector<std::size_t> counts(kBins, 0);
  for (const TrialResult& r : results) {
    const double acc = 100.0 - r.best_test_err;
    std::size_t bin = static_cast<std::size_t>(acc / (100.0 / kBins));
    if (bin >= kBins) bin = kBins - 1;
    ++counts[bin];
  }
  std::ofstream hist = open_out(cfg.output_dir + "/histogram.csv");
  hist << "acc_lo,acc_hi,count\n";
  for (std::size_t b = 0; b < kBins; ++b)
    hist << format_double(b * 5.0) << ',' << format_double((b + 1) * 5.0) << ',' << counts[b]
         << '\n';
  return results;
}

void write_checkpoint(const std::string& path, Network& net) {
  auto params = named_params(net);
  nlohmann::json index = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (auto& [name, tensor] : params) {
    index.push_back({{"name", name}, {"shape", tensor->shape()}, {"offset", offset}});
    offset += tensor->size() * sizeof(double);
  }
  const std::string header = index.dump();
  std::ofstream out = open_out(path);
  out.write(kCheckpointMagic, 8);
  const std::uint64_t len = header.size();
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (auto& [name, tensor] : params)
    out.write(reinterpret_cast<const char*>(tensor->data()),
              static_cast<std::streamsize>(tensor->size() * sizeof(double)));
}

void read_checkpoint(const std::string& path, Network& net) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path + ": cannot open");
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw FormatError(path + ": bad magic");
  std::uint64_t len = 0;
  if (!in.read(reinterpret_cast<char*>(&len), 8)) throw FormatError(path + ": truncated header");
  std::string header(len, '\0');
  if (!in.read(header.data(), static_cast<std::streamsize>(len)))
    throw FormatError(path + ": truncated index");
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(header);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path + ": corrupt index: " + e.what());
  }
  auto params = named_params(net);
  if (index.size() != params.size())
    throw FormatError(path + ": index has " + std::to_string(index.size()) +
                      " blocks, network has " + std::to_string(params.size()));
  const std::streampos data_start = in.tellg();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& entry = index.at(i);
    if (entry.at("name").get<std::string>() != params[i].first)
      throw FormatError(path + ": block " + std::to_string(i) + " is '" +
                        entry.at("name").get<std::string>() + "', expected '" +
                        params[i].first + "'");
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    if (shape != params[i].second->shape())
      throw FormatError(path + ": shape mismatch for " + params[i].first);
    in.seekg(data_start + static_cast<std::streamoff>(entry.at("offset").get<std::uint64_t>()));
    if (!in.read(reinterpret_cast<char*>(params[i].second->data()),
                 static_cast<std::streamsize>(params[i].second->size() * sizeof(double))))
      throw FormatError(path + ": truncated data for " + params[i].first);
  }
}

namespace {

struct Curve {
  std::string label;
  std::vector<double> epochs, train, test;
};

Curve parse_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path + ": cannot open");
  std::string line;
  if (!std::getline(in, line) ||
      line != "epoch,train_err,test_err,train_loss,test_loss,inv_loss,wall_s")
    throw FormatError(path + ": line 1: unexpected header");
  Curve curve;
  curve.label = std::filesystem::path(path).stem().string();
  std::size_t line_no = 1;
  bool use_loss = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    while (fields.size() < 7) fields.emplace_back();
    if (fields.size() != 7)
      throw FormatError(path + ": line " + std::to_string(line_no) + ": expected 7 fields");
    try {
      curve.epochs.push_back(std::stod(fields[0]));
      if (curve.epochs.size() == 1) use_loss = fields[1].empty() || fields[2].empty();
      if (use_loss) {
        curve.train.push_back(std::stod(fields[3]));
        curve.test.push_back(std::stod(fields[4]));
      } else {
        curve.train.push_back(std::stod(fields[1]));
        curve.test.push_back(std::stod(fields[2]));
      }
    } catch (const std::exception&) {
      throw FormatError(path + ": line " + std::to_string(line_no) + ": non-numeric field");
    }
  }
  if (curve.epochs.empty()) throw FormatError(path + ": no data rows");
  return curve;
}

std::string polyline(const std::vector<double>& xs, const std::vector<double>& ys,
                     double x_min, double x_max, double y_min, double y_max,
                     const std::string& color, bool dashed) {
  // Plot area: x in [60, 780], y in [20, 460] with the y axis inverted.
  auto sx = [&](double x) { return 60.0 + (x - x_min) / (x_max - x_min) * 720.0; };
  auto sy = [&](double y) { return 460.0 - (y - y_min) / (y_max - y_min) * 440.0; };
  std::ostringstream out;
  out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"";
  if (dashed) out << " stroke-dasharray=\"6 4\"";
  out << " points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out << ' ';
    out << format_double(sx(xs[i])) << ',' << format_double(sy(ys[i]));
  }
  out << "\"/>\n";
  return out.str();
}

}  // namespace

void plot_curves(const std::vector<std::string>& metrics_csv_paths, const std::string& out_svg) {
  if (metrics_csv_paths.empty()) throw ConfigError("plot: at least one metrics file required");
  std::vector<Curve> curves;
  for (const std::string& path : metrics_csv_paths) curves.push_back(parse_metrics(path));

  double x_min = curves[0].epochs.front(), x_max = x_min;
  double y_min = curves[0].train.front(), y_max = y_min;
  for (const Curve& c : curves) {
    for (double x : c.epochs) { x_min = std::min(x_min, x); x_max = std::max(x_max, x); }
    for (double y : c.train) { y_min = std::min(y_min, y); y_max = std::max(y_max, y); }
    for (double y : c.test) { y_min = std::min(y_min, y); y_max = std::max(y_max, y); }
  }
  if (x_max == x_min) x_max = x_min + 1.0;
  if (y_max == y_min) y_max = y_min + 1.0;

  static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                   "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  std::ofstream out = open_out(out_svg);
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"500\" "
         "viewBox=\"0 0 800 500\">\n"
      << "<rect x=\"0\" y=\"0\" width=\"800\" height=\"500\" fill=\"white\"/>\n"
      << "<line x1=\"60\" y1=\"460\" x2=\"780\" y2=\"460\" stroke=\"black\"/>\n"
      << "<line x1=\"60\" y1=\"20\" x2=\"60\" y2=\"460\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double fx = x_min + (x_max - x_min) * t / 4.0;
    const double fy = y_min + (y_max - y_min) * t / 4.0;
    out << "<text x=\"" << format_double(60.0 + 180.0 * t)
        << "\" y=\"478\" font-size=\"11\" text-anchor=\"middle\">" << format_double(fx)
        << "</text>\n"
        << "<text x=\"54\" y=\"" << format_double(464.0 - 110.0 * t)
        << "\" font-size=\"11\" text-anchor=\"end\">" << format_double(fy) << "</text>\n";
  }
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const std::string color = kPalette[i % 8];
    out << polyline(curves[i].epochs, curves[i].train, x_min, x_max, y_min, y_max, color, true)
        << polyline(curves[i].epochs, curves[i].test, x_min, x_max, y_min, y_max, color, false);
    const double ly = 30.0 + 16.0 * static_cast<double>(i);
    out << "<line x1=\"600\" y1=\"" << format_double(ly) << "\" x2=\"630\" y2=\""
        << format_double(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
        << "<text x=\"636\" y=\"" << format_double(ly + 4.0) << "\" font-size=\"12\">"
        << curves[i].label << "</text>\n";
  }
  out << "<text x=\"420\" y=\"496\" font-size=\"12\" text-anchor=\"middle\">epoch</text>\n"
      << "</svg>\n";
}

void write_pgm(const std::string& path, const std::vector<double>& image, std::size_t h,
               std::size_t w) {
  if (image.size() != h * w)
    throw ContractError("write_pgm: " + std::to_string(image.size()) + " values for " +
                        std::to_string(h) + "x" + std::to_string(w));
  std::ofstream out = open_out(path);
  out << "P5\n" << w << ' ' << h << "\n255\n";
  for (double v : image) {
    const double clamped = std::min(1.0, std::max(0.0, v));
    out.put(static_cast<char>(static_cast<unsigned char>(clamped * 255.0 + 0.5)));
  }
}

}  // namespace targetprop
