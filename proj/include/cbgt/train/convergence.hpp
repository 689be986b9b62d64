#pragma once

#include <cstddef>
#include <deque>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cbgt::train {

struct DetectorConfig {
  double alpha = 0.995;
  std::size_t window = 100;
  double threshold = 0.0015;
};

/// Exponentially smoothed validation accuracy with a normalised
/// root-mean-square-deviation test over the last `window` smoothed values.
class ConvergenceDetector {
 public:
  explicit ConvergenceDetector(DetectorConfig config = {});

  /// Feeds one validation accuracy in [0,1]; returns whether the detector
  /// now reports convergence.
  bool update(double accuracy);

  const DetectorConfig& config() const noexcept { return config_; }
  std::size_t points() const noexcept { return points_; }
  double smoothed() const;
  /// Population standard deviation over mean of the smoothed window; empty
  /// until the window is full or when the mean is zero.
  std::optional<double> nrmsd() const;
  bool converged() const;

 private:
  DetectorConfig config_;
  std::size_t points_ = 0;
  double smoothed_ = 0;
  std::deque<double> window_;
};

bool update_convergence(ConvergenceDetector& detector, double accuracy);

struct LogRow {
  std::size_t step = 0;
  std::size_t episodes_seen = 0;
  double mean_loss = 0;
  double val_accuracy = 0;
  double smoothed_val_accuracy = 0;
  std::optional<double> nrmsd;
  double avg_decision_time = 0;

  friend bool operator==(const LogRow&, const LogRow&) = default;
};

struct TrainingLog {
  std::vector<LogRow> rows;
  /// episodes_seen at the first validation point where the detector fired.
  std::optional<std::size_t> episodes_to_convergence;

  bool converged() const noexcept { return episodes_to_convergence.has_value(); }
};

inline constexpr const char* kLogHeader =
    "step,episodes_seen,mean_loss,val_accuracy,smoothed_val_accuracy,nrmsd,avg_decision_time";

std::string to_csv(const TrainingLog& log);
void write_log(const TrainingLog& log, const std::filesystem::path& path);
/// Parses a log written by write_log and replays the detector over its
/// val_accuracy column to recover episodes_to_convergence.
TrainingLog read_log(const std::filesystem::path& path, DetectorConfig detector = {});

}  // namespace cbgt::train
