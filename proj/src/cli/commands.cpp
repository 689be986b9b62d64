#include "cbgt/cli/commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "cbgt/errors.hpp"
#include "cbgt/eval/evaluate.hpp"
#include "cbgt/models/checkpoint.hpp"
#include "cbgt/train/convergence.hpp"

namespace fs = std::filesystem;

namespace cbgt::cli {

using train::ModelKind;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
  }
  fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

template <typename T>
train::Model<T> make_model(const ExperimentConfig& c) {
  const auto enc = encoder_config(c);
  switch (train::parse_model_kind(c.model)) {
    case ModelKind::cbgt: return train::Model<T>::make_cbgt(enc, *c.tau, c.max_steps, c.seed);
    case ModelKind::lstm: return train::Model<T>::make_lstm(enc, *c.seq_len, c.seed);
    case ModelKind::single_patch: break;
  }
  return train::Model<T>::make_single_patch(enc, c.seed);
}

template <typename T>
void train_and_save(const ExperimentConfig& c, Environments& envs, const fs::path& ckpt, const fs::path& log_path,
                    std::ostream& log) {
  auto model = make_model<T>(c);
  const std::string name = stem(c);
  std::size_t points = 0;
  auto progress = [&](const train::LogRow& r) {
    if (++points % 25 != 0) return;
    log << name << ": step " << r.step << ", " << r.episodes_seen << " episodes, loss " << r.mean_loss
        << ", val accuracy " << r.val_accuracy << " (smoothed " << r.smoothed_val_accuracy << ")\n";
  };
  const auto result = train::train(model, *envs.train, envs.validation, train_config(c), progress);
  nlohmann::json extra{{"environment", environment_id(c)}};
  extra["episodes_to_convergence"] =
      result.episodes_to_convergence ? nlohmann::json(*result.episodes_to_convergence) : nlohmann::json(nullptr);
  model.save(ckpt, extra);
  train::write_log(result, log_path);
  const auto& last = result.rows.back();
  log << name << ": trained on " << last.episodes_seen << " episodes, val accuracy " << last.val_accuracy;
  if (result.episodes_to_convergence) {
    log << ", converged after " << *result.episodes_to_convergence << " episodes\n";
  } else {
    log << ", not converged\n";
  }
}

template <typename T>
eval::EvalReport load_and_evaluate(const ExperimentConfig& c, const fs::path& ckpt, Environments& envs) {
  const auto model = train::Model<T>::load(ckpt);
  const auto expected_kind = train::parse_model_kind(c.model);
  if (model.kind != expected_kind) {
    throw ConfigError("checkpoint", ckpt.string() + " holds a " + train::to_string(model.kind) +
                                        " model but the configuration asks for " + c.model);
  }
  if (model.kind == ModelKind::cbgt && model.tau != *c.tau) {
    throw ConfigError("checkpoint", ckpt.string() + " was trained with tau=" + format_real(model.tau) +
                                        ", configuration has tau=" + format_real(*c.tau));
  }
  if (model.kind == ModelKind::lstm && model.sequence_length != *c.seq_len) {
    throw ConfigError("checkpoint", ckpt.string() + " was trained with seq-len=" +
                                        std::to_string(model.sequence_length) + ", configuration has seq-len=" +
                                        std::to_string(*c.seq_len));
  }
  if (!(model.encoder.config() == encoder_config(c))) {
    throw ConfigError("checkpoint", ckpt.string() + " has encoder " +
                                        models::to_json(model.encoder.config()).dump() +
                                        ", configuration implies " + models::to_json(encoder_config(c)).dump());
  }
  auto env = envs.test();
  return eval::evaluate(model, *env, c.episodes);
}

std::vector<std::size_t> parse_sizes(const std::string& field, const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    try {
      out.push_back(std::stoul(item, &used));
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw ConfigError(field, "expected comma-separated integers, got '" + text + "'");
  }
  return out;
}

}  // namespace

int cmd_train(const ExperimentConfig& config, bool overwrite, std::ostream& log) {
  validate(config);
  const std::string name = stem(config);
  const fs::path ckpt = config.out / (name + ".ckpt");
  const fs::path log_path = config.out / (name + "_train_log.csv");
  if (!overwrite && fs::exists(ckpt) && fs::exists(log_path)) {
    log << name << ": training already complete, skipping (use --overwrite to retrain)\n";
    return kExitOk;
  }
  auto envs = make_environments(config, true);
  fs::create_directories(config.out);
  if (config.precision == "f64") {
    train_and_save<double>(config, envs, ckpt, log_path, log);
  } else {
    train_and_save<float>(config, envs, ckpt, log_path, log);
  }
  write_text(config.out / (name + "_config.txt"), to_config_text(config));
  return kExitOk;
}

int cmd_eval(const ExperimentConfig& config, const std::optional<fs::path>& checkpoint, bool overwrite,
             std::ostream& log) {
  validate(config);
  const std::string name = stem(config);
  const fs::path ckpt = checkpoint.value_or(config.out / (name + ".ckpt"));
  if (!fs::is_regular_file(ckpt)) throw std::runtime_error("checkpoint not found: " + ckpt.string());
  if (!overwrite && fs::exists(config.out / (name + ".json"))) {
    log << name << ": report already present, skipping (use --overwrite to re-evaluate)\n";
    return kExitOk;
  }
  auto envs = make_environments(config, false);
  auto report = config.precision == "f64" ? load_and_evaluate<double>(config, ckpt, envs)
                                          : load_and_evaluate<float>(config, ckpt, envs);
  const fs::path train_log = ckpt.parent_path() / (ckpt.stem().string() + "_train_log.csv");
  if (fs::exists(train_log)) report.episodes_to_convergence = train::read_log(train_log).episodes_to_convergence;
  fs::create_directories(config.out);
  eval::write_report(report, config.out);
  write_text(config.out / (name + "_eval_config.txt"), to_config_text(config));
  log << report.stem() << ": accuracy " << report.accuracy << ", average decision time " << report.avg_decision_time
      << " over " << report.n_episodes << " episodes\n";
  return kExitOk;
}

int cmd_sweep(const ExperimentConfig& config, const SweepGrid& grid, bool overwrite, std::ostream& log,
              std::ostream& err) {
  const auto kind = [&] {
    try {
      return train::parse_model_kind(config.model);
    } catch (const std::invalid_argument&) {
      throw ConfigError("model", "expected cbgt, lstm or single_patch, got '" + config.model + "'");
    }
  }();
  if (!is_image_dataset(config) && !grid.patch_sizes.empty()) {
    throw ConfigError("patch-sizes", "only image datasets have patch sizes");
  }
  const std::vector<std::size_t> sizes = grid.patch_sizes.empty() ? std::vector{config.patch_size} : grid.patch_sizes;
  std::vector<ExperimentConfig> cells;
  for (std::size_t p : sizes) {
    ExperimentConfig cell = config;
    cell.patch_size = p;
    if (kind == ModelKind::cbgt) {
      std::vector<double> taus = grid.taus;
      if (taus.empty() && config.tau) taus.push_back(*config.tau);
      for (double tau : taus) {
        cell.tau = tau;
        cell.seq_len.reset();
        cells.push_back(cell);
      }
    } else if (kind == ModelKind::lstm) {
      std::vector<std::size_t> lens = grid.seq_lens;
      if (lens.empty() && config.seq_len) lens.push_back(*config.seq_len);
      for (std::size_t l : lens) {
        cell.seq_len = l;
        cell.tau.reset();
        cells.push_back(cell);
      }
    } else {
      cells.push_back(cell);
    }
  }
  if (cells.empty()) throw ConfigError(kind == ModelKind::lstm ? "seq-lens" : "taus", "the sweep grid is empty");
  for (const auto& cell : cells) validate(cell);

  std::vector<std::string> rows;
  std::size_t failures = 0;
  for (const auto& cell : cells) {
    const std::string name = stem(cell);
    try {
      cmd_train(cell, overwrite, log);
      cmd_eval(cell, std::nullopt, overwrite, log);
      const auto summary = eval::summary_from_json(nlohmann::json::parse(read_text(cell.out / (name + ".json"))));
      rows.push_back(eval::aggregate_csv_row(summary));
    } catch (const std::exception& e) {
      ++failures;
      err << "sweep cell " << name << " failed: " << e.what() << "\n";
    }
  }
  fs::create_directories(config.out);
  std::string merged = eval::aggregate_csv_header() + "\n";
  for (const auto& r : rows) merged += r + "\n";
  write_text(config.out / "sweep.csv", merged);
  log << "sweep: " << rows.size() << " of " << cells.size() << " cells completed\n";
  return failures ? kExitRuntime : kExitOk;
}

int cmd_report(const fs::path& dir, const std::optional<fs::path>& cbgt_log, const std::optional<fs::path>& lstm_log,
               std::ostream& log) {
  if (cbgt_log.has_value() != lstm_log.has_value()) {
    throw ConfigError(cbgt_log ? "lstm-log" : "cbgt-log", "both training logs are needed for a comparison");
  }
  if (!fs::is_directory(dir)) throw std::runtime_error("report directory not found: " + dir.string());
  std::vector<fs::path> summaries;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") summaries.push_back(entry.path());
  }
  std::sort(summaries.begin(), summaries.end());
  std::string table = eval::aggregate_csv_header() + "\n";
  for (const auto& path : summaries) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_text(path));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string(), 0, e.what());
    }
    if (!j.is_object() || !j.contains("accuracy")) continue;
    table += eval::aggregate_csv_row(eval::summary_from_json(j)) + "\n";
  }
  write_text(dir / "report.csv", table);
  log << table;
  if (cbgt_log) {
    const auto c = train::read_log(*cbgt_log);
    const auto l = train::read_log(*lstm_log);
    const double pct = eval::compare_convergence(c, l);
    log << "CBGT-Net converged after " << *c.episodes_to_convergence << " episodes, LSTM after "
        << *l.episodes_to_convergence << ": " << format_real(pct) << "% fewer\n";
  }
  return kExitOk;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"CBGT-Net: evidence accumulation to a decision threshold"};
  app.name(args.empty() ? "cbgt" : fs::path(args.front()).filename().string());
  app.require_subcommand(1);
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.set_config("--config", "", "Flat 'key = value' settings file; keys are the long flag names");

  ExperimentConfig c;
  double tau = 0;
  std::size_t seq_len = 0;
  std::string hidden = "32";
  std::string data_root, out_dir = c.out.string();
  bool overwrite = false;

  app.add_option("--dataset", c.dataset, "mnist, cifar10 or synthetic");
  app.add_option("--data-root", data_root, "Directory holding the dataset files");
  app.add_option("--patch-size", c.patch_size, "Patch side length for image datasets");
  app.add_option("--model", c.model, "cbgt, lstm or single_patch");
  app.add_option("--encoder", c.encoder, "lenet5, resnet_lite, mlp or identity (default by dataset)");
  app.add_option("--activation", c.activation, "Encoder output activation: softmax, sigmoid or linear");
  app.add_option("--hidden", hidden, "Comma-separated hidden widths of the mlp encoder");
  auto* tau_opt = app.add_option("--tau", tau, "Decision threshold (cbgt)");
  auto* seq_opt = app.add_option("--seq-len", seq_len, "Observations per episode (lstm)");
  app.add_option("--seed", c.seed, "Seed for initialisation and training episodes");
  app.add_option("--max-steps", c.max_steps, "Cap on observations per CBGT-Net episode");
  app.add_option("--precision", c.precision, "f32 or f64");
  app.add_option("--budget", c.budget, "Maximum number of training episodes");
  app.add_option("--batch-size", c.batch_size, "Episodes per training batch");
  app.add_option("--learning-rate", c.learning_rate, "Adam learning rate");
  app.add_option("--validation-episodes", c.validation_episodes, "Episodes per validation point");
  app.add_option("--validation-interval", c.validation_interval, "Batches between validation points");
  app.add_option("--validation-seed", c.validation_seed, "Seed of the validation episodes");
  app.add_option("--stop-on-convergence", c.stop_on_convergence, "Stop training once converged (true/false)");
  app.add_option("--validation-pool", c.validation_pool, "Images held out of the train split for validation");
  app.add_option("--train-subset", c.train_subset, "Training images to use (0: all outside the pool)");
  app.add_option("--test-subset", c.test_subset, "Test images to use (0: all)");
  app.add_option("--num-categories", c.num_categories, "Categories of the synthetic dataset");
  app.add_option("--eta", c.eta, "Symbol noise rate of the synthetic dataset");
  app.add_option("--episodes", c.episodes, "Evaluation episodes");
  app.add_option("--eval-seed", c.eval_seed, "Seed of the evaluation episodes");
  app.add_option("--out", out_dir, "Output directory");
  app.add_flag("--overwrite", overwrite, "Redo work whose outputs already exist");

  auto* train_cmd = app.add_subcommand("train", "Train a model");
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  auto* sweep_cmd = app.add_subcommand("sweep", "Train and evaluate a grid of thresholds or sequence lengths");
  auto* report_cmd = app.add_subcommand("report", "Merge report summaries and compare convergence");
  std::string checkpoint;
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file (default <out>/<stem>.ckpt)");
  std::vector<double> taus;
  std::string seq_lens, patch_sizes;
  sweep_cmd->add_option("--taus", taus, "Thresholds")->delimiter(',');
  sweep_cmd->add_option("--seq-lens", seq_lens, "Comma-separated LSTM sequence lengths");
  sweep_cmd->add_option("--patch-sizes", patch_sizes, "Comma-separated patch sizes");
  std::string report_dir, cbgt_log, lstm_log;
  report_cmd->add_option("--dir", report_dir, "Directory of reports (default --out)");
  report_cmd->add_option("--cbgt-log", cbgt_log, "CBGT-Net training log");
  report_cmd->add_option("--lstm-log", lstm_log, "LSTM training log");
  for (auto* sub : {train_cmd, eval_cmd, sweep_cmd, report_cmd}) sub->fallthrough();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  if (argv.empty()) argv.push_back("cbgt");
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    c.data_root = data_root;
    c.out = out_dir;
    c.hidden = parse_sizes("hidden", hidden);
    if (tau_opt->count() > 0) c.tau = tau;
    if (seq_opt->count() > 0) c.seq_len = seq_len;
    if (train_cmd->parsed()) return cmd_train(c, overwrite, out);
    if (eval_cmd->parsed()) {
      return cmd_eval(c, checkpoint.empty() ? std::nullopt : std::optional<fs::path>(checkpoint), overwrite, out);
    }
    if (sweep_cmd->parsed()) {
      SweepGrid grid{parse_sizes("patch-sizes", patch_sizes), taus, parse_sizes("seq-lens", seq_lens)};
      return cmd_sweep(c, grid, overwrite, out, err);
    }
    auto opt_path = [](const std::string& s) { return s.empty() ? std::nullopt : std::optional<fs::path>(s); };
    return cmd_report(report_dir.empty() ? c.out : fs::path(report_dir), opt_path(cbgt_log), opt_path(lstm_log), out);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace cbgt::cli
