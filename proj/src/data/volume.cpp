#include "lpsn/volume.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "lpsn/error.hpp"

namespace lpsn {

namespace {

struct AxisSample {
  std::size_t lo, hi;
  double frac;
};

std::vector<AxisSample> axis_samples(std::size_t src, std::size_t dst) {
  std::vector<AxisSample> out(dst);
  for (std::size_t i = 0; i < dst; ++i) {
    const double pos = dst == 1 ? (static_cast<double>(src) - 1.0) / 2.0
                                : static_cast<double>(i) * static_cast<double>(src - 1) / static_cast<double>(dst - 1);
    std::size_t lo = static_cast<std::size_t>(pos);
    if (lo >= src - 1) lo = src - 1;
    const std::size_t hi = std::min(lo + 1, src - 1);
    out[i] = {lo, hi, pos - static_cast<double>(lo)};
  }
  return out;
}

}  // namespace

Volume resize_trilinear(const Volume& in, std::size_t depth, std::size_t height, std::size_t width) {
  if (in.depth == 0 || in.height == 0 || in.width == 0 || in.data.size() != in.depth * in.height * in.width) {
    throw InputError("cannot resize an empty or inconsistent volume");
  }
  if (depth == 0 || height == 0 || width == 0) throw ConfigError("resize target dims must be positive");
  if (in.depth == depth && in.height == height && in.width == width) return in;
  const auto zs = axis_samples(in.depth, depth);
  const auto ys = axis_samples(in.height, height);
  const auto xs = axis_samples(in.width, width);
  Volume out(depth, height, width);
  for (std::size_t z = 0; z < depth; ++z) {
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const auto& sz = zs[z];
        const auto& sy = ys[y];
        const auto& sx = xs[x];
        auto lerp_x = [&](std::size_t zz, std::size_t yy) {
          return (1.0 - sx.frac) * in.at(zz, yy, sx.lo) + sx.frac * in.at(zz, yy, sx.hi);
        };
        auto lerp_y = [&](std::size_t zz) { return (1.0 - sy.frac) * lerp_x(zz, sy.lo) + sy.frac * lerp_x(zz, sy.hi); };
        out.at(z, y, x) = static_cast<float>((1.0 - sz.frac) * lerp_y(sz.lo) + sz.frac * lerp_y(sz.hi));
      }
    }
  }
  return out;
}

Volume normalize_volume(const Volume& raw, std::size_t depth, std::size_t height, std::size_t width) {
  for (float v : raw.data) {
    if (!std::isfinite(v)) throw InputError("volume contains a non-finite value");
  }
  Volume out = resize_trilinear(raw, depth, height, width);
  const auto [lo_it, hi_it] = std::minmax_element(out.data.begin(), out.data.end());
  const double lo = *lo_it, hi = *hi_it;
  if (hi == lo) {
    std::fill(out.data.begin(), out.data.end(), 0.5f);
    return out;
  }
  const double span = hi - lo;
  for (float& v : out.data) v = static_cast<float>(std::clamp((v - lo) / span, 0.0, 1.0));
  return out;
}

const char* augmentation_name(std::size_t id) {
  static constexpr std::array<const char*, kAugmentationCount> names = {
      "identity", "rot90", "rot180", "rot270", "flip_h", "flip_v", "transpose", "reverse_slices"};
  if (id >= kAugmentationCount) throw InputError("augmentation id " + std::to_string(id) + " outside 0..7");
  return names[id];
}

Volume augment(const Volume& v, std::size_t id) {
  if (id >= kAugmentationCount) throw InputError("augmentation id " + std::to_string(id) + " outside 0..7");
  const auto aug = static_cast<Augmentation>(id);
  const bool swaps = aug == Augmentation::Rotate90 || aug == Augmentation::Rotate270 || aug == Augmentation::Transpose;
  const std::size_t H = v.height, W = v.width;
  Volume out(v.depth, swaps ? W : H, swaps ? H : W);
  for (std::size_t z = 0; z < v.depth; ++z) {
    for (std::size_t y = 0; y < out.height; ++y) {
      for (std::size_t x = 0; x < out.width; ++x) {
        float value = 0.0f;
        switch (aug) {
          case Augmentation::Identity: value = v.at(z, y, x); break;
          case Augmentation::Rotate90: value = v.at(z, x, W - 1 - y); break;
          case Augmentation::Rotate180: value = v.at(z, H - 1 - y, W - 1 - x); break;
          case Augmentation::Rotate270: value = v.at(z, H - 1 - x, y); break;
          case Augmentation::FlipHorizontal: value = v.at(z, y, W - 1 - x); break;
          case Augmentation::FlipVertical: value = v.at(z, H - 1 - y, x); break;
          case Augmentation::Transpose: value = v.at(z, x, y); break;
          case Augmentation::ReverseSlices: value = v.at(v.depth - 1 - z, y, x); break;
        }
        out.at(z, y, x) = value;
      }
    }
  }
  return out;
}

std::vector<Volume> augment_all(const Volume& v) {
  std::vector<Volume> out;
  out.reserve(kAugmentationCount);
  for (std::size_t id = 0; id < kAugmentationCount; ++id) out.push_back(augment(v, id));
  return out;
}

namespace {

constexpr char kMagic[4] = {'P', 'S', 'N', 'V'};
constexpr std::uint16_t kVersion = 1;

template <typename U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes;
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& in, std::uint64_t& offset, const char* what) {
  std::array<unsigned char, sizeof(U)> bytes;
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw FormatError(std::string("PSNV: truncated ") + what, offset + static_cast<std::uint64_t>(in.gcount()));
  }
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  offset += sizeof(U);
  return value;
}

}  // namespace

void write_psnv(std::ostream& out, const Volume& v) {
  if (v.data.size() != v.depth * v.height * v.width) throw InputError("volume data does not match its dims");
  out.write(kMagic, 4);
  put_le<std::uint16_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(v.depth));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(v.height));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(v.width));
  std::vector<char> payload(v.data.size() * 4);
  for (std::size_t i = 0; i < v.data.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(v.data[i]);
    for (std::size_t b = 0; b < 4; ++b) payload[4 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw PipelineError("PSNV: write failed");
}

Volume read_psnv(std::istream& in) {
  std::uint64_t offset = 0;
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("PSNV: bad magic, expected \"PSNV\"", 0);
  }
  offset = 4;
  const auto version = get_le<std::uint16_t>(in, offset, "version");
  if (version != kVersion) {
    throw FormatError("PSNV: unsupported version " + std::to_string(version) + ", expected 1", offset - 2);
  }
  const auto d = get_le<std::uint32_t>(in, offset, "dims");
  const auto h = get_le<std::uint32_t>(in, offset, "dims");
  const auto w = get_le<std::uint32_t>(in, offset, "dims");
  if (d == 0 || h == 0 || w == 0) throw FormatError("PSNV: zero dimension", offset - 12);
  Volume v(d, h, w);
  std::vector<unsigned char> payload(v.data.size() * 4);
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (in.gcount() != static_cast<std::streamsize>(payload.size())) {
    throw FormatError("PSNV: truncated voxel payload, expected " + std::to_string(payload.size()) + " bytes",
                      offset + static_cast<std::uint64_t>(in.gcount()));
  }
  for (std::size_t i = 0; i < v.data.size(); ++i) {
    const unsigned char* b = payload.data() + 4 * i;
    const std::uint32_t bits = std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
                               std::uint32_t(b[3]) << 24;
    v.data[i] = std::bit_cast<float>(bits);
  }
  return v;
}

void save_psnv(const std::string& path, const Volume& v) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PipelineError("cannot open " + path + " for writing");
  write_psnv(out, v);
}

Volume load_psnv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PipelineError("cannot open " + path);
  return read_psnv(in);
}

}  // namespace lpsn
