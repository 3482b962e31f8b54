#include "segae/nifti.hpp"

#include <zlib.h>

#include <array>
#include <charconv>
#include <cmath>
#include <cstring>
#include <memory>
#include <string>
#include <system_error>

namespace segae::nifti {

namespace {

constexpr int kHeaderSize = 348;
constexpr int kVoxOffset = 352;

// Header field offsets (NIfTI-1).
constexpr int kOffDim = 40;
constexpr int kOffDatatype = 70;
constexpr int kOffBitpix = 72;
constexpr int kOffPixdim = 76;
constexpr int kOffVoxOffset = 108;
constexpr int kOffSclSlope = 112;
constexpr int kOffSclInter = 116;
constexpr int kOffXyztUnits = 123;
constexpr int kOffDescrip = 148;
constexpr int kOffQformCode = 252;
constexpr int kOffSformCode = 254;
constexpr int kOffSrowX = 280;
constexpr int kOffMagic = 344;

enum DataType : std::int16_t {
  kUInt8 = 2,
  kInt16 = 4,
  kInt32 = 8,
  kFloat32 = 16,
  kFloat64 = 64,
  kInt8 = 256,
  kUInt16 = 512,
  kUInt32 = 768,
};

template <typename T>
T read_at(const unsigned char* buf, std::size_t offset) {
  T v;
  std::memcpy(&v, buf + offset, sizeof(T));
  return v;
}

template <typename T>
void write_at(unsigned char* buf, std::size_t offset, T v) {
  std::memcpy(buf + offset, &v, sizeof(T));
}

struct GzCloser {
  void operator()(gzFile_s* f) const { gzclose(f); }
};
using GzHandle = std::unique_ptr<gzFile_s, GzCloser>;

bool has_gz_suffix(const std::filesystem::path& p) { return p.extension() == ".gz"; }

// Shortest decimal form of the stored float, parsed back as double, so that
// spacings like 0.8 survive the float32 pixdim field unchanged.
double widen_spacing(float f) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), f);
  if (ec != std::errc()) return static_cast<double>(f);
  double d = 0.0;
  std::from_chars(buf.data(), end, d);
  return d;
}

struct RawImage {
  Dims3 dims{};
  Spacing3 spacing{};
  std::int16_t datatype = 0;
  float slope = 0.0f;
  float inter = 0.0f;
  std::vector<unsigned char> bytes;
};

std::size_t bytes_per_voxel(std::int16_t datatype) {
  switch (datatype) {
    case kUInt8:
    case kInt8:
      return 1;
    case kInt16:
    case kUInt16:
      return 2;
    case kInt32:
    case kUInt32:
    case kFloat32:
      return 4;
    case kFloat64:
      return 8;
    default:
      throw FormatError("unsupported NIfTI datatype " + std::to_string(datatype));
  }
}

RawImage read_raw(const std::filesystem::path& path) {
  // gzread handles plain files transparently.
  GzHandle f(gzopen(path.string().c_str(), "rb"));
  if (!f) throw FormatError("cannot open " + path.string());
  std::array<unsigned char, kHeaderSize> hdr{};
  if (gzread(f.get(), hdr.data(), kHeaderSize) != kHeaderSize)
    throw FormatError(path.string() + ": truncated NIfTI header");
  if (read_at<std::int32_t>(hdr.data(), 0) != kHeaderSize)
    throw FormatError(path.string() + ": not a little-endian NIfTI-1 file");
  if (std::memcmp(hdr.data() + kOffMagic, "n+1\0", 4) != 0)
    throw FormatError(path.string() + ": missing n+1 magic (only single-file NIfTI-1 is supported)");

  RawImage img;
  const auto ndim = read_at<std::int16_t>(hdr.data(), kOffDim);
  if (ndim < 1 || ndim > 7) throw FormatError(path.string() + ": bad dim[0]");
  std::array<int, 7> ext{1, 1, 1, 1, 1, 1, 1};
  for (int i = 0; i < ndim; ++i) ext[i] = read_at<std::int16_t>(hdr.data(), kOffDim + 2 * (i + 1));
  for (int i = 3; i < 7; ++i)
    if (ext[i] != 1) throw FormatError(path.string() + ": only 3D volumes are supported");
  img.dims = {ext[0], ext[1], ext[2]};
  if (img.dims.x <= 0 || img.dims.y <= 0 || img.dims.z <= 0)
    throw FormatError(path.string() + ": non-positive dimension");
  std::array<double, 3> sp{};
  for (int i = 0; i < 3; ++i) {
    const float f = read_at<float>(hdr.data(), kOffPixdim + 4 * (i + 1));
    sp[i] = (i < ndim && f > 0.0f) ? widen_spacing(f) : 1.0;
  }
  img.spacing = {sp[0], sp[1], sp[2]};
  img.datatype = read_at<std::int16_t>(hdr.data(), kOffDatatype);
  img.slope = read_at<float>(hdr.data(), kOffSclSlope);
  img.inter = read_at<float>(hdr.data(), kOffSclInter);
  const auto vox_offset = static_cast<long>(read_at<float>(hdr.data(), kOffVoxOffset));
  if (vox_offset < kHeaderSize) throw FormatError(path.string() + ": bad vox_offset");

  std::vector<unsigned char> skip(static_cast<std::size_t>(vox_offset - kHeaderSize));
  if (!skip.empty() && gzread(f.get(), skip.data(), static_cast<unsigned>(skip.size())) !=
                           static_cast<int>(skip.size()))
    throw FormatError(path.string() + ": truncated before image data");

  const std::size_t nbytes = img.dims.voxel_count() * bytes_per_voxel(img.datatype);
  img.bytes.resize(nbytes);
  std::size_t done = 0;
  while (done < nbytes) {
    const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(nbytes - done, 1u << 30));
    const int got = gzread(f.get(), img.bytes.data() + done, chunk);
    if (got <= 0) throw FormatError(path.string() + ": truncated image data");
    done += static_cast<std::size_t>(got);
  }
  return img;
}

std::vector<double> decode(const RawImage& img) {
  const std::size_t n = img.dims.voxel_count();
  std::vector<double> out(n);
  const unsigned char* p = img.bytes.data();
  for (std::size_t i = 0; i < n; ++i) {
    switch (img.datatype) {
      case kUInt8: out[i] = static_cast<double>(p[i]); break;
      case kInt8: out[i] = static_cast<double>(static_cast<std::int8_t>(p[i])); break;
      case kInt16: out[i] = read_at<std::int16_t>(p, 2 * i); break;
      case kUInt16: out[i] = read_at<std::uint16_t>(p, 2 * i); break;
      case kInt32: out[i] = read_at<std::int32_t>(p, 4 * i); break;
      case kUInt32: out[i] = read_at<std::uint32_t>(p, 4 * i); break;
      case kFloat32: out[i] = read_at<float>(p, 4 * i); break;
      case kFloat64: {
        double d;
        std::memcpy(&d, p + 8 * i, 8);
        out[i] = d;
        break;
      }
      default: throw FormatError("unsupported NIfTI datatype");
    }
  }
  const bool scaled = img.slope != 0.0f && !(img.slope == 1.0f && img.inter == 0.0f);
  if (scaled)
    for (double& v : out) v = v * img.slope + img.inter;
  return out;
}

std::array<unsigned char, kVoxOffset> make_header(const Dims3& dims, const Spacing3& spacing,
                                                  std::int16_t datatype, std::int16_t bitpix) {
  std::array<unsigned char, kVoxOffset> hdr{};
  write_at<std::int32_t>(hdr.data(), 0, kHeaderSize);
  hdr[39] = 0;  // dim_info
  const std::array<std::int16_t, 8> dim{3, static_cast<std::int16_t>(dims.x),
                                        static_cast<std::int16_t>(dims.y),
                                        static_cast<std::int16_t>(dims.z), 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) write_at<std::int16_t>(hdr.data(), kOffDim + 2 * i, dim[i]);
  write_at<std::int16_t>(hdr.data(), kOffDatatype, datatype);
  write_at<std::int16_t>(hdr.data(), kOffBitpix, bitpix);
  const std::array<float, 8> pixdim{1.0f, static_cast<float>(spacing.x), static_cast<float>(spacing.y),
                                    static_cast<float>(spacing.z), 1.0f, 1.0f, 1.0f, 1.0f};
  for (int i = 0; i < 8; ++i) write_at<float>(hdr.data(), kOffPixdim + 4 * i, pixdim[i]);
  write_at<float>(hdr.data(), kOffVoxOffset, static_cast<float>(kVoxOffset));
  write_at<float>(hdr.data(), kOffSclSlope, 1.0f);
  write_at<float>(hdr.data(), kOffSclInter, 0.0f);
  hdr[kOffXyztUnits] = 2;  // mm
  const char descrip[] = "segae";
  std::memcpy(hdr.data() + kOffDescrip, descrip, sizeof(descrip));
  write_at<std::int16_t>(hdr.data(), kOffQformCode, 0);
  write_at<std::int16_t>(hdr.data(), kOffSformCode, 1);
  const std::array<float, 12> srow{static_cast<float>(spacing.x), 0, 0, 0,
                                   0, static_cast<float>(spacing.y), 0, 0,
                                   0, 0, static_cast<float>(spacing.z), 0};
  for (int i = 0; i < 12; ++i) write_at<float>(hdr.data(), kOffSrowX + 4 * i, srow[i]);
  std::memcpy(hdr.data() + kOffMagic, "n+1\0", 4);
  return hdr;
}

void check_dims_fit(const Dims3& d) {
  constexpr int kMax = 32767;
  if (d.x > kMax || d.y > kMax || d.z > kMax) throw FormatError("volume too large for NIfTI-1");
}

void write_file(const std::filesystem::path& path, const unsigned char* hdr, std::size_t hdr_len,
                const unsigned char* data, std::size_t data_len) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const char* mode = has_gz_suffix(path) ? "wb6" : "wbT";
  GzHandle f(gzopen(path.string().c_str(), mode));
  if (!f) throw FormatError("cannot open " + path.string() + " for writing");
  auto put = [&](const unsigned char* p, std::size_t n) {
    while (n > 0) {
      const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(n, 1u << 30));
      if (gzwrite(f.get(), p, chunk) != static_cast<int>(chunk))
        throw FormatError("write failed: " + path.string());
      p += chunk;
      n -= chunk;
    }
  };
  put(hdr, hdr_len);
  put(data, data_len);
  if (gzclose(f.release()) != Z_OK) throw FormatError("close failed: " + path.string());
}

}  // namespace

Volume3D load_volume(const std::filesystem::path& path) {
  RawImage img = read_raw(path);
  Volume3D vol(img.dims, img.spacing, decode(img));
  vol.check_finite();
  return vol;
}

void save_volume(const Volume3D& vol, const std::filesystem::path& path) {
  check_dims_fit(vol.dims());
  const auto hdr = make_header(vol.dims(), vol.spacing(), kFloat64, 64);
  write_file(path, hdr.data(), hdr.size(), reinterpret_cast<const unsigned char*>(vol.data().data()),
             vol.size() * sizeof(double));
}

BinaryMask load_mask(const std::filesystem::path& path) {
  RawImage img = read_raw(path);
  const auto values = decode(img);
  BinaryMask mask(img.dims, img.spacing);
  for (std::size_t i = 0; i < values.size(); ++i) mask.set(i, values[i] != 0.0);
  return mask;
}

void save_mask(const BinaryMask& mask, const std::filesystem::path& path) {
  check_dims_fit(mask.dims());
  const auto hdr = make_header(mask.dims(), mask.spacing(), kUInt8, 8);
  write_file(path, hdr.data(), hdr.size(), mask.data().data(), mask.size());
}

MultiChannelVolume load_channels(const std::filesystem::path& t1, const std::filesystem::path& t2,
                                 const std::filesystem::path& flair) {
  // MultiChannelVolume's constructor rejects mismatched grids.
  return MultiChannelVolume(load_volume(t1), load_volume(t2), load_volume(flair));
}

BinaryMask load_mask_like(const std::filesystem::path& path, const Dims3& dims,
                          const Spacing3& spacing) {
  BinaryMask m = load_mask(path);
  require_same_grid(m.dims(), m.spacing(), dims, spacing, path.string());
  return m;
}

}  // namespace segae::nifti
