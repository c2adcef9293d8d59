#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "biaug/core.hpp"

namespace biaug {

using Rgb = std::array<std::uint8_t, 3>;

/// 8-bit RGB raster, row-major, stored on disk as binary PPM (P6).
struct Image {
  std::int32_t width = 0;
  std::int32_t height = 0;
  std::vector<std::uint8_t> pixels;  // width * height * 3

  Image() = default;
  Image(std::int32_t w, std::int32_t h, Rgb fill = {0, 0, 0});

  Rgb at(std::int32_t x, std::int32_t y) const;
  void set(std::int32_t x, std::int32_t y, Rgb c);
  void fill(const BoundingBox& box, Rgb c);

  bool operator==(const Image&) const = default;
};

/// Throws ImageUnreadable on a missing or malformed file.
Image read_ppm(const std::filesystem::path& path);
void write_ppm(const Image& image, const std::filesystem::path& path);

/// Resolves relative image refs against an ordered list of root directories.
class ImageResolver {
 public:
  ImageResolver() = default;
  explicit ImageResolver(std::vector<std::filesystem::path> roots) : roots_(std::move(roots)) {}

  /// First existing candidate; falls back to the first root when none exists.
  std::filesystem::path resolve(const std::string& image_ref) const;
  Image load(const std::string& image_ref) const { return read_ppm(resolve(image_ref)); }
  const std::vector<std::filesystem::path>& roots() const noexcept { return roots_; }

 private:
  std::vector<std::filesystem::path> roots_;
};

}  // namespace biaug
