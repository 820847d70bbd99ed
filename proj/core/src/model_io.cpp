#include "fullface/model_io.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "json.hpp"

#include "fullface/error.hpp"

namespace fullface {
namespace {

constexpr char kMagic[8] = {'F', 'F', 'G', 'Z', 'M', 'O', 'D', 'L'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::vector<unsigned char>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<unsigned char>(bits >> (8 * i)));
}

template <typename T>
T get_le(const std::vector<unsigned char>& in, std::size_t& pos) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  if (pos + sizeof(U) > in.size()) throw IoError("model file truncated");
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(in[pos + i]) << (8 * i);
  pos += sizeof(U);
  return std::bit_cast<T>(bits);
}

std::uint32_t crc_of(const unsigned char* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  return static_cast<std::uint32_t>(crc32(crc, data, static_cast<uInt>(n)));
}

nlohmann::json config_json(const ModelConfig& c) {
  nlohmann::json conv = nlohmann::json::array();
  for (const auto& s : c.conv) {
    conv.push_back({{"channels", s.channels}, {"kernel", s.kernel}, {"stride", s.stride},
                    {"pad", s.pad}, {"pool_kernel", s.pool_kernel}, {"pool_stride", s.pool_stride}});
  }
  return {{"input_size", c.input_size},
          {"input_channels", c.input_channels},
          {"conv", conv},
          {"spatial_weights", c.spatial_weights},
          {"spatial_widths", c.spatial_widths},
          {"fc", c.fc},
          {"output_dim", c.output_dim},
          {"init", c.init == InitScheme::he ? "he" : "gaussian"},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"seed", c.seed}};
}

ModelConfig config_from(const nlohmann::json& j) {
  ModelConfig c;
  c.input_size = j.at("input_size").get<int>();
  c.input_channels = j.at("input_channels").get<int>();
  c.conv.clear();
  for (const auto& s : j.at("conv")) {
    c.conv.push_back({s.at("channels").get<int>(), s.at("kernel").get<int>(),
                      s.at("stride").get<int>(), s.at("pad").get<int>(),
                      s.at("pool_kernel").get<int>(), s.at("pool_stride").get<int>()});
  }
  c.spatial_weights = j.at("spatial_weights").get<bool>();
  c.spatial_widths = j.at("spatial_widths").get<std::array<int, 2>>();
  c.fc = j.at("fc").get<std::vector<int>>();
  c.output_dim = j.at("output_dim").get<int>();
  c.init = j.at("init").get<std::string>() == "he" ? InitScheme::he : InitScheme::gaussian;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace

std::string model_config_to_json(const ModelConfig& config) { return config_json(config).dump(); }

ModelConfig model_config_from_json(const std::string& text) {
  try {
    return config_from(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("invalid model config block: ") + e.what());
  }
}

void save_model(const std::filesystem::path& path, const TrainedModel& model) {
  nlohmann::json header{{"model", config_json(model.config)},
                        {"target_offset", model.target_offset},
                        {"target_scale", model.target_scale}};
  const std::string block = header.dump();

  std::vector<unsigned char> bytes(std::begin(kMagic), std::end(kMagic));
  put_le(bytes, kVersion);
  put_le(bytes, static_cast<std::uint32_t>(block.size()));
  bytes.insert(bytes.end(), block.begin(), block.end());
  const auto params = model.network.parameters();
  std::uint64_t count = 0;
  for (const Tensor* t : params) count += t->size();
  put_le(bytes, count);
  for (const Tensor* t : params) {
    for (double v : t->values()) put_le(bytes, v);
  }
  put_le(bytes, crc_of(bytes.data(), bytes.size()));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), {});
  if (bytes.size() < sizeof(kMagic) + 4 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not a model file: " + path.string());
  }
  const std::size_t body = bytes.size() - 4;
  std::size_t crc_pos = body;
  const auto stored_crc = get_le<std::uint32_t>(bytes, crc_pos);
  if (stored_crc != crc_of(bytes.data(), body)) throw IoError("model checksum mismatch: " + path.string());

  std::size_t pos = sizeof(kMagic);
  const auto version = get_le<std::uint32_t>(bytes, pos);
  if (version != kVersion) throw IoError("unsupported model version " + std::to_string(version));
  const auto block_len = get_le<std::uint32_t>(bytes, pos);
  if (pos + block_len > body) throw IoError("model file truncated");
  const std::string block(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                          bytes.begin() + static_cast<std::ptrdiff_t>(pos + block_len));
  pos += block_len;

  TrainedModel model;
  try {
    const auto header = nlohmann::json::parse(block);
    model.config = config_from(header.at("model"));
    model.target_offset = header.at("target_offset").get<std::array<double, 2>>();
    model.target_scale = header.at("target_scale").get<std::array<double, 2>>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("invalid model header: ") + e.what());
  }
  model.network = Network(model.config);
  const auto count = get_le<std::uint64_t>(bytes, pos);
  if (count != model.network.parameter_count()) {
    throw IoError("model parameter count does not match its config");
  }
  for (Tensor* t : model.network.parameters()) {
    for (double& v : t->values()) v = get_le<double>(bytes, pos);
  }
  if (pos != body) throw IoError("trailing bytes in model file");
  return model;
}

void write_training_log(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,train_loss,val_loss\n";
  out.precision(17);
  for (const auto& e : log) {
    out << e.epoch << ',' << e.train_loss << ',';
    if (std::isfinite(e.val_loss)) out << e.val_loss;
    out << '\n';
  }
}

}  // namespace fullface
