#include "cbgt/eval/evaluate.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "cbgt/errors.hpp"
#include "cbgt/numerics/math.hpp"
#include "cbgt/numerics/ops.hpp"

namespace cbgt::eval {

using numerics::Tensor;

namespace {

using EpisodeList = std::vector<std::unique_ptr<env::Episode>>;

template <typename T>
Tensor<T> gather(EpisodeList& episodes, const std::vector<std::size_t>& which, const models::InputShape& s) {
  Tensor<T> obs({which.size(), s.height, s.width, s.channels});
  const std::size_t stride = s.size();
  for (std::size_t j = 0; j < which.size(); ++j) {
    episodes[which[j]]->next_observation(std::span<T>(obs.data() + j * stride, stride));
  }
  return obs;
}

template <typename T>
StreamResult make_result(const env::Episode& ep, std::span<const T> y, std::size_t t_d, bool decided) {
  StreamResult r;
  r.target = ep.target();
  r.decision_time = t_d;
  r.decided_by_threshold = decided;
  r.output.assign(y.begin(), y.end());
  r.prediction = numerics::argmax(y);
  return r;
}

template <typename T>
void run_cbgt(const train::Model<T>& model, EpisodeList& episodes, std::vector<StreamResult>& out) {
  const auto& shape = model.encoder.config().input;
  const std::size_t k = model.num_categories();
  const Threshold threshold(model.tau);
  std::vector<AccumulatorState<T>> acc(episodes.size(), AccumulatorState<T>(k));
  std::vector<std::size_t> active(episodes.size());
  for (std::size_t i = 0; i < active.size(); ++i) active[i] = i;
  for (std::size_t t = 1; !active.empty(); ++t) {
    const auto ev = model.encoder.encode_batch(gather<T>(episodes, active, shape));
    std::vector<std::size_t> still;
    for (std::size_t j = 0; j < active.size(); ++j) {
      const std::size_t i = active[j];
      acc[i].add(std::span<const T>(ev.data() + j * k, k));
      const bool decided = check_threshold(acc[i], threshold);
      if (decided || t == model.max_steps) {
        const auto y = readout(acc[i]);
        out[i] = make_result<T>(*episodes[i], y, t, decided);
      } else {
        still.push_back(i);
      }
    }
    active.swap(still);
  }
}

template <typename T>
void run_lstm(const train::Model<T>& model, EpisodeList& episodes, std::vector<StreamResult>& out) {
  const auto& shape = model.encoder.config().input;
  const std::size_t k = model.num_categories();
  std::vector<std::size_t> all(episodes.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  numerics::Tape<T> tape;
  std::vector<numerics::Var> seq;
  for (std::size_t t = 0; t < model.sequence_length; ++t) {
    seq.push_back(tape.constant(model.encoder.encode_batch(gather<T>(episodes, all, shape))));
  }
  const auto bound = model.lstm->bind_frozen(tape);
  const auto& probs = tape.value(model.lstm->forward(tape, bound, seq));
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    out[i] = make_result<T>(*episodes[i], std::span<const T>(probs.data() + i * k, k), model.sequence_length, false);
  }
}

template <typename T>
void run_single(const train::Model<T>& model, EpisodeList& episodes, std::vector<StreamResult>& out) {
  const auto& shape = model.encoder.config().input;
  const std::size_t k = model.num_categories();
  std::vector<std::size_t> all(episodes.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto ev = model.encoder.encode_batch(gather<T>(episodes, all, shape));
  const bool soft = train::single_patch_needs_softmax(model.encoder.config());
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    const std::span<const T> row(ev.data() + i * k, k);
    if (soft) {
      const auto y = numerics::softmax(row);
      out[i] = make_result<T>(*episodes[i], y, 1, false);
    } else {
      out[i] = make_result<T>(*episodes[i], row, 1, false);
    }
  }
}

std::string kind_parameter(const EvalReport& r) {
  switch (r.kind) {
    case train::ModelKind::cbgt: return format_real(r.tau) + ",";
    case train::ModelKind::lstm: return "," + std::to_string(r.sequence_length);
    case train::ModelKind::single_patch: return ",";
  }
  return ",";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

Aggregates aggregate(const std::vector<StreamResult>& rows) {
  if (rows.empty()) throw std::invalid_argument("no episodes to aggregate");
  std::size_t correct = 0, total_time = 0;
  for (const auto& r : rows) {
    correct += r.correct() ? 1 : 0;
    total_time += r.decision_time;
  }
  const auto n = static_cast<double>(rows.size());
  return {static_cast<double>(correct) / n, static_cast<double>(total_time) / n};
}

template <typename T>
EvalReport evaluate(const train::Model<T>& model, env::Environment& env, std::size_t n_episodes,
                    std::size_t batch_size) {
  if (n_episodes == 0) throw std::invalid_argument("n_episodes must be at least 1");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be at least 1");
  if (!(env.observation_shape() == model.encoder.config().input)) {
    throw std::invalid_argument("environment " + env.id() + " does not match the model's encoder input shape");
  }
  if (env.num_categories() != model.num_categories()) {
    throw std::invalid_argument("environment " + env.id() + " has a different number of categories than the model");
  }
  EvalReport report;
  report.environment_id = env.id();
  report.model_id = model.id();
  report.kind = model.kind;
  report.tau = model.tau;
  report.sequence_length = model.sequence_length;
  report.n_episodes = n_episodes;
  report.rows.reserve(n_episodes);
  for (std::size_t start = 0; start < n_episodes; start += batch_size) {
    const std::size_t m = std::min(batch_size, n_episodes - start);
    EpisodeList episodes;
    for (std::size_t i = 0; i < m; ++i) episodes.push_back(env.start_episode());
    std::vector<StreamResult> chunk(m);
    switch (model.kind) {
      case train::ModelKind::cbgt: run_cbgt(model, episodes, chunk); break;
      case train::ModelKind::lstm: run_lstm(model, episodes, chunk); break;
      case train::ModelKind::single_patch: run_single(model, episodes, chunk); break;
    }
    for (std::size_t i = 0; i < m; ++i) {
      chunk[i].episode_id = start + i;
      report.rows.push_back(std::move(chunk[i]));
    }
  }
  const auto agg = aggregate(report.rows);
  report.accuracy = agg.accuracy;
  report.avg_decision_time = agg.avg_decision_time;
  return report;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j{{"environment", r.environment_id},
                   {"model", r.model_id},
                   {"kind", train::to_string(r.kind)},
                   {"n_episodes", r.n_episodes},
                   {"accuracy", r.accuracy},
                   {"avg_decision_time", r.avg_decision_time}};
  if (r.kind == train::ModelKind::cbgt) j["tau"] = r.tau;
  if (r.kind == train::ModelKind::lstm) j["sequence_length"] = r.sequence_length;
  j["episodes_to_convergence"] = r.episodes_to_convergence ? nlohmann::json(*r.episodes_to_convergence) : nlohmann::json(nullptr);
  return j;
}

EvalReport summary_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.environment_id = j.at("environment").get<std::string>();
  r.model_id = j.at("model").get<std::string>();
  r.kind = train::parse_model_kind(j.at("kind").get<std::string>());
  r.n_episodes = j.at("n_episodes").get<std::size_t>();
  r.accuracy = j.at("accuracy").get<double>();
  r.avg_decision_time = j.at("avg_decision_time").get<double>();
  if (j.contains("tau")) r.tau = j.at("tau").get<double>();
  if (j.contains("sequence_length")) r.sequence_length = j.at("sequence_length").get<std::size_t>();
  if (j.contains("episodes_to_convergence") && !j.at("episodes_to_convergence").is_null()) {
    r.episodes_to_convergence = j.at("episodes_to_convergence").get<std::size_t>();
  }
  return r;
}

std::string aggregate_csv_header() {
  return "environment,model,kind,tau,sequence_length,n_episodes,accuracy,avg_decision_time,episodes_to_convergence";
}

std::string aggregate_csv_row(const EvalReport& r) {
  return r.environment_id + "," + r.model_id + "," + train::to_string(r.kind) + "," + kind_parameter(r) + "," +
         std::to_string(r.n_episodes) + "," + format_real(r.accuracy) + "," + format_real(r.avg_decision_time) + "," +
         (r.episodes_to_convergence ? std::to_string(*r.episodes_to_convergence) : std::string());
}

void write_report(const EvalReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string stem = report.stem();
  write_text(dir / (stem + ".csv"), aggregate_csv_header() + "\n" + aggregate_csv_row(report) + "\n");
  const std::size_t k = report.rows.empty() ? 0 : report.rows.front().output.size();
  std::string episodes = stream_csv_header(k) + "\n";
  for (const auto& row : report.rows) episodes += to_csv_row(row) + "\n";
  write_text(dir / (stem + "_episodes.csv"), episodes);
  write_text(dir / (stem + ".json"), to_json(report).dump(2) + "\n");
}

template <typename T>
std::vector<EvalReport> sweep_thresholds(const std::map<double, std::filesystem::path>& checkpoints,
                                         const std::vector<double>& taus, const EnvFactory& make_env,
                                         std::size_t n_episodes) {
  std::vector<EvalReport> reports;
  for (double tau : taus) {
    const auto it = checkpoints.find(tau);
    if (it == checkpoints.end() || !std::filesystem::exists(it->second)) {
      throw std::runtime_error("no checkpoint for tau=" + format_real(tau));
    }
    const auto model = train::Model<T>::load(it->second);
    if (model.kind != train::ModelKind::cbgt || model.tau != tau) {
      throw std::invalid_argument("checkpoint " + it->second.string() + " is not a CBGT-Net model with tau=" +
                                  format_real(tau));
    }
    auto env = make_env();
    reports.push_back(evaluate(model, *env, n_episodes));
  }
  return reports;
}

template <typename T>
std::vector<EvalReport> sweep_patch_sizes(const std::map<std::size_t, std::filesystem::path>& checkpoints,
                                          const std::vector<std::size_t>& sizes, const PatchEnvFactory& make_env,
                                          std::size_t n_episodes) {
  std::vector<EvalReport> reports;
  for (std::size_t p : sizes) {
    const auto it = checkpoints.find(p);
    if (it == checkpoints.end() || !std::filesystem::exists(it->second)) {
      throw std::runtime_error("no checkpoint for patch size " + std::to_string(p));
    }
    const auto model = train::Model<T>::load(it->second);
    auto env = make_env(p);
    reports.push_back(evaluate(model, *env, n_episodes));
  }
  return reports;
}

double compare_convergence(const train::TrainingLog& cbgt_log, const train::TrainingLog& lstm_log) {
  if (!cbgt_log.converged()) throw NotConvergedError("CBGT-Net training log never converged");
  if (!lstm_log.converged()) throw NotConvergedError("LSTM training log never converged");
  const auto c = static_cast<double>(*cbgt_log.episodes_to_convergence);
  const auto l = static_cast<double>(*lstm_log.episodes_to_convergence);
  if (l == 0) throw std::invalid_argument("LSTM episodes-to-convergence is zero");
  return 100.0 * (l - c) / l;
}

template EvalReport evaluate(const train::Model<float>&, env::Environment&, std::size_t, std::size_t);
template EvalReport evaluate(const train::Model<double>&, env::Environment&, std::size_t, std::size_t);
template std::vector<EvalReport> sweep_thresholds<float>(const std::map<double, std::filesystem::path>&,
                                                         const std::vector<double>&, const EnvFactory&, std::size_t);
template std::vector<EvalReport> sweep_thresholds<double>(const std::map<double, std::filesystem::path>&,
                                                          const std::vector<double>&, const EnvFactory&, std::size_t);
template std::vector<EvalReport> sweep_patch_sizes<float>(const std::map<std::size_t, std::filesystem::path>&,
                                                          const std::vector<std::size_t>&, const PatchEnvFactory&,
                                                          std::size_t);
template std::vector<EvalReport> sweep_patch_sizes<double>(const std::map<std::size_t, std::filesystem::path>&,
                                                           const std::vector<std::size_t>&, const PatchEnvFactory&,
                                                           std::size_t);

}  // namespace cbgt::eval
