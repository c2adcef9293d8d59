#include "biaug/image.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "biaug/error.hpp"

namespace biaug {

Image::Image(std::int32_t w, std::int32_t h, Rgb fill_color) : width(w), height(h) {
  if (w <= 0 || h <= 0) throw std::invalid_argument("image dimensions must be positive");
  pixels.resize(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3);
  for (std::size_t i = 0; i < pixels.size(); i += 3) {
    pixels[i] = fill_color[0];
    pixels[i + 1] = fill_color[1];
    pixels[i + 2] = fill_color[2];
  }
}

Rgb Image::at(std::int32_t x, std::int32_t y) const {
  const auto i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                  static_cast<std::size_t>(x)) * 3;
  return {pixels[i], pixels[i + 1], pixels[i + 2]};
}

void Image::set(std::int32_t x, std::int32_t y, Rgb c) {
  const auto i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                  static_cast<std::size_t>(x)) * 3;
  pixels[i] = c[0];
  pixels[i + 1] = c[1];
  pixels[i + 2] = c[2];
}

void Image::fill(const BoundingBox& box, Rgb c) {
  if (!box.within(width, height)) throw MaskOutOfBounds("box exceeds image bounds");
  for (auto y = box.y(); y < box.bottom(); ++y) {
    for (auto x = box.x(); x < box.right(); ++x) set(x, y, c);
  }
}

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
bool next_token(std::istream& in, std::string& tok) {
  tok.clear();
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (!std::isspace(c)) break;
  }
  if (c == EOF) return false;
  tok += static_cast<char>(c);
  while ((c = in.peek()) != EOF && !std::isspace(c) && c != '#') tok += static_cast<char>(in.get());
  return true;
}

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageUnreadable("cannot open image: " + path.string());
  std::string magic, ws, hs, ms;
  if (!next_token(in, magic) || magic != "P6") {
    throw ImageUnreadable("not a binary PPM: " + path.string());
  }
  if (!next_token(in, ws) || !next_token(in, hs) || !next_token(in, ms)) {
    throw ImageUnreadable("truncated PPM header: " + path.string());
  }
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(ws);
    h = std::stoi(hs);
    maxval = std::stoi(ms);
  } catch (const std::exception&) {
    throw ImageUnreadable("bad PPM header: " + path.string());
  }
  if (w <= 0 || h <= 0 || maxval != 255) {
    throw ImageUnreadable("unsupported PPM geometry or depth: " + path.string());
  }
  in.get();  // single whitespace byte before the raster
  Image img(w, h);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw ImageUnreadable("truncated PPM raster: " + path.string());
  }
  return img;
}

void write_ppm(const Image& image, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write image: " + path.string());
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
}

std::filesystem::path ImageResolver::resolve(const std::string& image_ref) const {
  std::filesystem::path ref(image_ref);
  if (ref.is_absolute() || roots_.empty()) return ref;
  for (const auto& root : roots_) {
    auto candidate = root / ref;
    if (std::filesystem::exists(candidate)) return candidate;
  }
  return roots_.front() / ref;
}

}  // namespace biaug
