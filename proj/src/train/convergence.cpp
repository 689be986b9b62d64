#include "cbgt/train/convergence.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cbgt/cbgt/stream.hpp"
#include "cbgt/errors.hpp"

namespace cbgt::train {

ConvergenceDetector::ConvergenceDetector(DetectorConfig config) : config_(config) {
  if (!(config_.alpha >= 0.0 && config_.alpha < 1.0)) throw std::invalid_argument("alpha must lie in [0,1)");
  if (config_.window < 2) throw std::invalid_argument("window must hold at least 2 points");
  if (!(config_.threshold > 0.0)) throw std::invalid_argument("NRMSD threshold must be positive");
}

bool ConvergenceDetector::update(double accuracy) {
  if (!(accuracy >= 0.0 && accuracy <= 1.0)) throw std::invalid_argument("accuracy must lie in [0,1]");
  // alpha*s + (1-alpha)*x, rearranged.
  smoothed_ = points_ == 0 ? accuracy : smoothed_ + (1.0 - config_.alpha) * (accuracy - smoothed_);
  ++points_;
  window_.push_back(smoothed_);
  if (window_.size() > config_.window) window_.pop_front();
  return converged();
}

double ConvergenceDetector::smoothed() const {
  if (points_ == 0) throw InvalidState("no validation points yet");
  return smoothed_;
}

std::optional<double> ConvergenceDetector::nrmsd() const {
  if (window_.size() < config_.window) return std::nullopt;
  // Moments about the oldest point in the window.
  const double n = static_cast<double>(window_.size());
  const double origin = window_.front();
  double shift = 0;
  for (double s : window_) shift += s - origin;
  shift /= n;
  const double mean = origin + shift;
  if (mean == 0.0) return std::nullopt;
  double var = 0;
  for (double s : window_) var += (s - origin - shift) * (s - origin - shift);
  return std::sqrt(var / n) / mean;
}

bool ConvergenceDetector::converged() const {
  const auto n = nrmsd();
  return n.has_value() && *n < config_.threshold;
}

bool update_convergence(ConvergenceDetector& detector, double accuracy) { return detector.update(accuracy); }

std::string to_csv(const TrainingLog& log) {
  std::string out = std::string(kLogHeader) + "\n";
  for (const auto& r : log.rows) {
    out += std::to_string(r.step) + "," + std::to_string(r.episodes_seen) + "," + format_real(r.mean_loss) + "," +
           format_real(r.val_accuracy) + "," + format_real(r.smoothed_val_accuracy) + "," +
           (r.nrmsd ? format_real(*r.nrmsd) : std::string()) + "," + format_real(r.avg_decision_time) + "\n";
  }
  return out;
}

void write_log(const TrainingLog& log, const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << to_csv(log);
  }
  std::filesystem::rename(tmp, path);
}

TrainingLog read_log(const std::filesystem::path& path, DetectorConfig detector_config) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open training log " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != kLogHeader) throw FormatError(path.string(), 0, "unexpected training log header");
  TrainingLog log;
  ConvergenceDetector detector(detector_config);
  std::size_t offset = line.size() + 1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 7) throw FormatError(path.string(), offset, "expected 7 columns");
    try {
      LogRow r;
      r.step = std::stoull(f[0]);
      r.episodes_seen = std::stoull(f[1]);
      r.mean_loss = std::stod(f[2]);
      r.val_accuracy = std::stod(f[3]);
      r.smoothed_val_accuracy = std::stod(f[4]);
      if (!f[5].empty()) r.nrmsd = std::stod(f[5]);
      r.avg_decision_time = std::stod(f[6]);
      if (detector.update(r.val_accuracy) && !log.episodes_to_convergence) log.episodes_to_convergence = r.episodes_seen;
      log.rows.push_back(r);
    } catch (const std::logic_error&) {
      throw FormatError(path.string(), offset, "malformed number");
    }
    offset += line.size() + 1;
  }
  return log;
}

}  // namespace cbgt::train
