#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace lpsn {

/// Scalar grid stored slice-major: index = (z * height + y) * width + x.
struct Volume {
  std::size_t depth = 0, height = 0, width = 0;
  std::vector<float> data;

  Volume() = default;
  Volume(std::size_t d, std::size_t h, std::size_t w, float fill = 0.0f)
      : depth(d), height(h), width(w), data(d * h * w, fill) {}

  std::size_t size() const { return data.size(); }
  float& at(std::size_t z, std::size_t y, std::size_t x) { return data[(z * height + y) * width + x]; }
  float at(std::size_t z, std::size_t y, std::size_t x) const { return data[(z * height + y) * width + x]; }

  bool operator==(const Volume&) const = default;
};

/// Trilinear resampling with corner-aligned grids: output index i maps to
/// source coordinate i * (S - 1) / (D - 1); a single output sample maps to
/// the source centre.
Volume resize_trilinear(const Volume& in, std::size_t depth, std::size_t height, std::size_t width);

/// Resize to depth x height x width, then map [min, max] linearly onto
/// [0, 1]. A constant volume becomes all 0.5.
Volume normalize_volume(const Volume& raw, std::size_t depth = 8, std::size_t height = 96, std::size_t width = 96);

// Augmentation ids, in file-format order.
constexpr std::size_t kAugmentationCount = 8;
enum class Augmentation : std::size_t {
  Identity = 0,
  Rotate90 = 1,
  Rotate180 = 2,
  Rotate270 = 3,
  FlipHorizontal = 4,  // mirror along x
  FlipVertical = 5,    // mirror along y
  Transpose = 6,       // swap y and x
  ReverseSlices = 7,
};

const char* augmentation_name(std::size_t id);
/// Applies augmentation `id` (0..7). In-plane rotations are counter-clockwise.
Volume augment(const Volume& v, std::size_t id);
std::vector<Volume> augment_all(const Volume& v);

// PSNV file: "PSNV", u16 version (1), u32 depth, height, width, then
// depth*height*width float32 values; all little-endian.
void write_psnv(std::ostream& out, const Volume& v);
Volume read_psnv(std::istream& in);
void save_psnv(const std::string& path, const Volume& v);
Volume load_psnv(const std::string& path);

}  // namespace lpsn
