#include "cbgt/train/model.hpp"

#include <stdexcept>

#include "cbgt/models/checkpoint.hpp"

namespace cbgt::train {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::cbgt: return "cbgt";
    case ModelKind::lstm: return "lstm";
    case ModelKind::single_patch: return "single_patch";
  }
  return "unknown";
}

ModelKind parse_model_kind(const std::string& tag) {
  if (tag == "cbgt") return ModelKind::cbgt;
  if (tag == "lstm") return ModelKind::lstm;
  if (tag == "single_patch") return ModelKind::single_patch;
  throw std::invalid_argument("unknown model kind '" + tag + "'");
}

template <typename T>
Model<T> Model<T>::make_cbgt(const models::EncoderConfig& encoder, double tau, std::size_t max_steps,
                             std::uint64_t seed) {
  static_cast<void>(Threshold{tau});
  if (max_steps == 0) throw std::invalid_argument("max_steps must be at least 1");
  return Model{ModelKind::cbgt, models::Encoder<T>(encoder, seed), std::nullopt, tau, 0, max_steps};
}

template <typename T>
Model<T> Model<T>::make_lstm(const models::EncoderConfig& encoder, std::size_t sequence_length, std::uint64_t seed) {
  models::LstmConfig lc{encoder.num_categories, models::kLstmHiddenSize, sequence_length, encoder.num_categories};
  // The encoder and the LSTM draw from distinct seeds derived from one.
  return Model{ModelKind::lstm, models::Encoder<T>(encoder, seed), models::LstmClassifier<T>(lc, seed ^ 0x9e3779b97f4a7c15ULL),
               0.0, sequence_length, sequence_length};
}

template <typename T>
Model<T> Model<T>::make_single_patch(const models::EncoderConfig& encoder, std::uint64_t seed) {
  return Model{ModelKind::single_patch, models::Encoder<T>(encoder, seed), std::nullopt, 0.0, 0, 1};
}

template <typename T>
std::string Model<T>::id() const {
  switch (kind) {
    case ModelKind::cbgt: return "tau" + format_real(tau);
    case ModelKind::lstm: return "L" + std::to_string(sequence_length);
    case ModelKind::single_patch: return "single";
  }
  return "unknown";
}

template <typename T>
nlohmann::json Model<T>::header() const {
  nlohmann::json h{{"model", to_string(kind)},
                   {"precision", sizeof(T) == 4 ? "f32" : "f64"},
                   {"seed", encoder.seed()},
                   {"encoder", models::to_json(encoder.config())},
                   {"max_steps", max_steps}};
  if (kind == ModelKind::cbgt) h["tau"] = tau;
  if (kind == ModelKind::lstm) {
    h["sequence_length"] = sequence_length;
    h["lstm"] = models::to_json(lstm->config());
  }
  return h;
}

template <typename T>
void Model<T>::save(const std::filesystem::path& path, const nlohmann::json& extra) const {
  nlohmann::json h = header();
  if (!extra.empty()) h["extra"] = extra;
  std::vector<models::CheckpointGroup<T>> groups{{"encoder", &encoder.params()}};
  if (lstm) groups.emplace_back("lstm", &lstm->params());
  models::save_checkpoint<T>(path, h, groups);
}

template <typename T>
Model<T> Model<T>::load(const std::filesystem::path& path) {
  const auto h = models::read_checkpoint_header(path);
  try {
    const auto kind = parse_model_kind(h.at("model").get<std::string>());
    const auto enc = models::encoder_config_from_json(h.at("encoder"));
    const auto seed = h.at("seed").get<std::uint64_t>();
    Model m = kind == ModelKind::cbgt   ? make_cbgt(enc, h.at("tau").get<double>(), h.at("max_steps").get<std::size_t>(), seed)
              : kind == ModelKind::lstm ? make_lstm(enc, h.at("sequence_length").get<std::size_t>(), seed)
                                        : make_single_patch(enc, seed);
    std::vector<models::MutableCheckpointGroup<T>> groups{{"encoder", &m.encoder.params()}};
    if (m.lstm) groups.emplace_back("lstm", &m.lstm->params());
    models::load_checkpoint_tensors<T>(path, groups);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("checkpoint " + path.string() + " has an incomplete header: " + e.what());
  }
}

template struct Model<float>;
template struct Model<double>;

}  // namespace cbgt::train
