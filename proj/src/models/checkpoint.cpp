#include "cbgt/models/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <stdexcept>

#include "cbgt/errors.hpp"

namespace cbgt::models {

using numerics::ParamStore;
using numerics::Shape;
using numerics::Tensor;

namespace {

constexpr char kMagic[8] = {'C', 'B', 'G', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint8_t kFloat32 = 1;
constexpr std::uint8_t kFloat64 = 2;

template <typename T>
constexpr std::uint8_t dtype_code() {
  return sizeof(T) == 4 ? kFloat32 : kFloat64;
}

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  template <typename T>
  void real(T v) {
    if constexpr (sizeof(T) == 4) {
      uint(std::bit_cast<std::uint32_t>(v));
    } else {
      uint(std::bit_cast<std::uint64_t>(v));
    }
  }
  const std::vector<char>& data() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(std::string file, std::vector<char> buf) : file_(std::move(file)), buf_(std::move(buf)) {}

  const char* bytes(std::size_t n, const char* what) {
    if (buf_.size() - pos_ < n) throw FormatError(file_, pos_, std::string("truncated ") + what);
    const char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  template <typename U>
  U uint(const char* what) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes(sizeof(U), what));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(p[i]) << (8 * i));
    return v;
  }
  double real(std::uint8_t dtype) {
    if (dtype == kFloat32) return std::bit_cast<float>(uint<std::uint32_t>("tensor payload"));
    return std::bit_cast<double>(uint<std::uint64_t>("tensor payload"));
  }
  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == buf_.size(); }
  std::size_t remaining() const { return buf_.size() - pos_; }
  const std::string& file() const { return file_; }

 private:
  std::string file_;
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

Reader open_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return Reader(path.string(), std::move(buf));
}

nlohmann::json parse_header(Reader& r) {
  const char* magic = r.bytes(sizeof(kMagic), "magic");
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw FormatError(r.file(), 0, "bad checkpoint magic");
  const auto version_at = r.offset();
  const auto version = r.uint<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError(r.file(), version_at, "unsupported checkpoint version " + std::to_string(version));
  }
  const auto len = r.uint<std::uint32_t>("header length");
  const auto header_at = r.offset();
  const char* text = r.bytes(len, "header");
  auto header = nlohmann::json::parse(text, text + len, nullptr, false);
  if (header.is_discarded() || !header.is_object()) {
    throw FormatError(r.file(), header_at, "checkpoint header is not a JSON object");
  }
  return header;
}

struct StoredTensor {
  Shape shape;
  bool trainable;
  std::vector<double> values;
};

}  // namespace

nlohmann::json to_json(const EncoderConfig& c) {
  return {{"architecture", to_string(c.architecture)},
          {"input", {c.input.height, c.input.width, c.input.channels}},
          {"num_categories", c.num_categories},
          {"activation", to_string(c.activation)},
          {"hidden", c.hidden},
          {"resnet_width", c.resnet_width}};
}

EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  try {
    EncoderConfig c;
    c.architecture = parse_architecture(j.at("architecture").get<std::string>());
    const auto in = j.at("input").get<std::vector<std::size_t>>();
    if (in.size() != 3) throw std::invalid_argument("encoder input must have 3 dimensions");
    c.input = {in[0], in[1], in[2]};
    c.num_categories = j.at("num_categories").get<std::size_t>();
    c.activation = parse_activation(j.at("activation").get<std::string>());
    c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    c.resnet_width = j.at("resnet_width").get<std::size_t>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed encoder config: ") + e.what());
  }
}

nlohmann::json to_json(const LstmConfig& c) {
  return {{"input_size", c.input_size},
          {"hidden_size", c.hidden_size},
          {"sequence_length", c.sequence_length},
          {"num_categories", c.num_categories}};
}

LstmConfig lstm_config_from_json(const nlohmann::json& j) {
  try {
    return LstmConfig{j.at("input_size").get<std::size_t>(), j.at("hidden_size").get<std::size_t>(),
                      j.at("sequence_length").get<std::size_t>(), j.at("num_categories").get<std::size_t>()};
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed lstm config: ") + e.what());
  }
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& header,
                     const std::vector<CheckpointGroup<T>>& groups) {
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.uint<std::uint32_t>(kCheckpointVersion);
  const std::string text = header.dump();
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
  w.bytes(text.data(), text.size());

  std::uint32_t count = 0;
  for (const auto& [prefix, store] : groups) count += static_cast<std::uint32_t>(store->size());
  w.uint<std::uint32_t>(count);
  for (const auto& [prefix, store] : groups) {
    for (const auto& entry : *store) {
      const std::string name = prefix + "." + entry.name;
      w.uint<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
      w.bytes(name.data(), name.size());
      w.uint<std::uint8_t>(dtype_code<T>());
      w.uint<std::uint8_t>(entry.trainable ? 1 : 0);
      w.uint<std::uint32_t>(static_cast<std::uint32_t>(entry.value.rank()));
      for (auto d : entry.value.shape()) w.uint<std::uint32_t>(static_cast<std::uint32_t>(d));
      for (std::size_t i = 0; i < entry.value.size(); ++i) w.real(entry.value[i]);
    }
  }

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
    if (!out) throw std::runtime_error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

nlohmann::json read_checkpoint_header(const std::filesystem::path& path) {
  Reader r = open_checkpoint(path);
  return parse_header(r);
}

template <typename T>
void load_checkpoint_tensors(const std::filesystem::path& path,
                             const std::vector<MutableCheckpointGroup<T>>& groups) {
  Reader r = open_checkpoint(path);
  parse_header(r);
  std::map<std::string, StoredTensor> stored;
  const auto count = r.uint<std::uint32_t>("tensor count");
  for (std::uint32_t n = 0; n < count; ++n) {
    const auto name_len = r.uint<std::uint16_t>("tensor name length");
    const char* name_bytes = r.bytes(name_len, "tensor name");
    std::string name(name_bytes, name_len);
    const auto dtype_at = r.offset();
    const auto dtype = r.uint<std::uint8_t>("dtype");
    if (dtype != kFloat32 && dtype != kFloat64) {
      throw FormatError(r.file(), dtype_at, "unknown dtype code " + std::to_string(dtype));
    }
    StoredTensor t;
    t.trainable = r.uint<std::uint8_t>("trainable flag") != 0;
    const auto ndim = r.uint<std::uint32_t>("rank");
    std::size_t total = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      t.shape.push_back(r.uint<std::uint32_t>("dimension"));
      total *= t.shape.back();
    }
    const std::size_t width = dtype == kFloat32 ? 4 : 8;
    if (total > r.remaining() / width) throw FormatError(r.file(), r.offset(), "truncated tensor '" + name + "'");
    t.values.reserve(total);
    for (std::size_t i = 0; i < total; ++i) t.values.push_back(r.real(dtype));
    if (!stored.emplace(name, std::move(t)).second) {
      throw FormatError(r.file(), r.offset(), "duplicate tensor '" + name + "'");
    }
  }
  if (!r.at_end()) throw FormatError(r.file(), r.offset(), "trailing bytes after last tensor");

  std::size_t expected = 0;
  for (const auto& [prefix, store] : groups) {
    expected += store->size();
    for (std::size_t i = 0; i < store->size(); ++i) {
      auto& entry = store->entry(i);
      const std::string name = prefix + "." + entry.name;
      const auto it = stored.find(name);
      if (it == stored.end()) throw std::invalid_argument("checkpoint " + path.string() + " lacks tensor '" + name + "'");
      if (it->second.shape != entry.value.shape()) {
        throw std::invalid_argument("checkpoint tensor '" + name + "' has shape " +
                                    numerics::shape_string(it->second.shape) + ", model expects " +
                                    numerics::shape_string(entry.value.shape()));
      }
      if (it->second.trainable != entry.trainable) {
        throw std::invalid_argument("checkpoint tensor '" + name + "' trainability differs from model");
      }
    }
  }
  if (expected != stored.size()) {
    throw std::invalid_argument("checkpoint " + path.string() + " holds " + std::to_string(stored.size()) +
                                " tensors, model has " + std::to_string(expected));
  }
  for (const auto& [prefix, store] : groups) {
    for (std::size_t i = 0; i < store->size(); ++i) {
      auto& entry = store->entry(i);
      const auto& src = stored.at(prefix + "." + entry.name).values;
      for (std::size_t k = 0; k < src.size(); ++k) entry.value[k] = static_cast<T>(src[k]);
    }
  }
}

template void save_checkpoint<float>(const std::filesystem::path&, const nlohmann::json&,
                                     const std::vector<CheckpointGroup<float>>&);
template void save_checkpoint<double>(const std::filesystem::path&, const nlohmann::json&,
                                      const std::vector<CheckpointGroup<double>>&);
template void load_checkpoint_tensors<float>(const std::filesystem::path&,
                                             const std::vector<MutableCheckpointGroup<float>>&);
template void load_checkpoint_tensors<double>(const std::filesystem::path&,
                                              const std::vector<MutableCheckpointGroup<double>>&);

}  // namespace cbgt::models
