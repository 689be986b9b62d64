#include "cbgt/cbgt/stream.hpp"

#include <charconv>

namespace cbgt {

std::string format_real(double value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::string stream_csv_header(std::size_t num_categories) {
  std::string h = "episode_id,target,prediction,t_d,decided_by_threshold";
  for (std::size_t k = 0; k < num_categories; ++k) h += ",y_" + std::to_string(k);
  return h;
}

std::string to_csv_row(const StreamResult& r) {
  std::string row = std::to_string(r.episode_id) + "," + std::to_string(r.target) + "," +
                    std::to_string(r.prediction) + "," + std::to_string(r.decision_time) + "," +
                    (r.decided_by_threshold ? "1" : "0");
  for (double y : r.output) row += "," + format_real(y);
  return row;
}

template <typename T>
StreamResult run_episode(const models::Encoder<T>& encoder, const Threshold& threshold, env::Episode& episode,
                         std::size_t max_steps) {
  const auto shape = encoder.config().input;
  if (!(episode.observation_shape() == shape)) {
    throw std::invalid_argument("episode observations do not match the encoder input shape");
  }
  const EvidenceSource<T> source = [&]() {
    numerics::Tensor<T> obs({1, shape.height, shape.width, shape.channels});
    episode.next_observation(std::span<T>(obs.data(), obs.size()));
    return encoder.encode(obs);
  };
  return run_stream(source, episode.target(), threshold, max_steps);
}

template StreamResult run_episode(const models::Encoder<float>&, const Threshold&, env::Episode&, std::size_t);
template StreamResult run_episode(const models::Encoder<double>&, const Threshold&, env::Episode&, std::size_t);

}  // namespace cbgt
