#include "test_util.hpp"

#include <fstream>
#include <iterator>
#include <unistd.h>

namespace testutil {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("segae_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

segae::BinaryMask random_mask(const segae::Dims3& dims, std::mt19937_64& rng, double p,
                              const segae::Spacing3& spacing) {
  segae::BinaryMask m(dims, spacing);
  std::bernoulli_distribution b(p);
  for (std::size_t i = 0; i < m.size(); ++i) m.set(i, b(rng));
  return m;
}

segae::Volume3D random_volume(const segae::Dims3& dims, std::mt19937_64& rng, double lo, double hi) {
  segae::Volume3D v(dims, {});
  std::uniform_real_distribution<double> u(lo, hi);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = u(rng);
  return v;
}

segae::MultiChannelVolume random_channels(const segae::Dims3& dims, std::mt19937_64& rng) {
  return segae::MultiChannelVolume(random_volume(dims, rng, 0.2, 2.0),
                                   random_volume(dims, rng, 0.2, 2.0),
                                   random_volume(dims, rng, 0.2, 2.0));
}

}  // namespace testutil
