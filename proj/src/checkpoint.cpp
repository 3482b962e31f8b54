#include "segae/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace segae {

namespace {

constexpr char kMagic[8] = {'S', 'E', 'G', 'A', 'E', 'C', 'K', 'P'};

template <typename T>
void put_le(std::ostream& os, T v) {
  static_assert(std::is_integral_v<T>);
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(buf), sizeof buf);
}

template <typename T>
T get_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof buf)) throw FormatError("checkpoint truncated");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
  return v;
}

void put_doubles(std::ostream& os, std::span<const double> xs) {
  for (double x : xs) put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(x));
}

void get_doubles(std::istream& is, std::span<double> xs) {
  for (double& x : xs) x = std::bit_cast<double>(get_le<std::uint64_t>(is));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto arrays = ckpt.params.arrays();
  nlohmann::json header;
  header["model"] = ckpt.params.config;
  header["train"] = ckpt.train_config;
  header["epochs_completed"] = ckpt.epochs_completed;
  header["has_optimizer"] = ckpt.optimizer.has_value();
  header["optimizer_step"] = ckpt.optimizer ? ckpt.optimizer->step : 0;
  std::vector<std::size_t> sizes;
  for (const auto& a : arrays) sizes.push_back(a.size());
  header["array_sizes"] = sizes;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot write checkpoint " + tmp.string());
    os.write(kMagic, sizeof kMagic);
    put_le<std::uint32_t>(os, kCheckpointVersion);
    put_le<std::uint64_t>(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& a : arrays) put_doubles(os, a);
    if (ckpt.optimizer) {
      if (ckpt.optimizer->first_moment.size() != arrays.size() ||
          ckpt.optimizer->second_moment.size() != arrays.size())
        throw DimensionError("optimizer state does not match the parameters");
      for (std::size_t i = 0; i < arrays.size(); ++i) {
        if (ckpt.optimizer->first_moment[i].size() != arrays[i].size() ||
            ckpt.optimizer->second_moment[i].size() != arrays[i].size())
          throw DimensionError("optimizer moment size mismatch");
        put_doubles(os, ckpt.optimizer->first_moment[i]);
        put_doubles(os, ckpt.optimizer->second_moment[i]);
      }
    }
    if (!os) throw FormatError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<ModelConfig>& expected_model) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint " + path.string());
  char magic[sizeof kMagic];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw FormatError(path.string() + " is not a checkpoint");
  const auto version = get_le<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto len = get_le<std::uint64_t>(is);
  if (len > (1u << 26)) throw FormatError("checkpoint header too large");
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw FormatError("checkpoint truncated");

  nlohmann::json header;
  Checkpoint ckpt;
  ModelConfig model;
  try {
    header = nlohmann::json::parse(text);
    model = header.at("model").get<ModelConfig>();
    ckpt.train_config = header.at("train").get<TrainConfig>();
    ckpt.epochs_completed = header.at("epochs_completed").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint header: ") + e.what());
  }
  if (expected_model && !(*expected_model == model))
    throw ConfigError("checkpoint " + path.string() +
                      " was written for a different model configuration: stored " +
                      nlohmann::json(model).dump() + ", requested " +
                      nlohmann::json(*expected_model).dump());

  ckpt.params = build_model(model, 0);
  auto arrays = ckpt.params.arrays();
  const auto sizes = header.at("array_sizes").get<std::vector<std::size_t>>();
  if (sizes.size() != arrays.size()) throw FormatError("checkpoint array count mismatch");
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    if (sizes[i] != arrays[i].size()) throw FormatError("checkpoint array size mismatch");
    get_doubles(is, arrays[i]);
  }
  if (header.at("has_optimizer").get<bool>()) {
    OptimizerState st = OptimizerState::zeros_for(ckpt.params);
    st.step = header.at("optimizer_step").get<std::int64_t>();
    for (std::size_t i = 0; i < arrays.size(); ++i) {
      get_doubles(is, st.first_moment[i]);
      get_doubles(is, st.second_moment[i]);
    }
    ckpt.optimizer = std::move(st);
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in checkpoint");
  for (double w : ckpt.params.mixing_weights)
    if (!(w >= 0.0)) throw FormatError("checkpoint holds a negative mixing weight");
  return ckpt;
}

}  // namespace segae
