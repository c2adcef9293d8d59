#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace biaug {

// 64-bit FNV-1a. Used wherever an identifier or mock output must be stable
// across runs and platforms.
constexpr std::uint64_t fnv1a64(std::string_view data,
                                std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[v & 0xF];
    v >>= 4;
  }
  return out;
}

/// Hash of several fields joined by a unit separator, so ("ab","c") != ("a","bc").
template <class... Parts>
std::uint64_t hash_fields(const Parts&... parts) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  bool first = true;
  auto mix = [&](std::string_view p) {
    if (!first) h = fnv1a64("\x1f", h);
    first = false;
    h = fnv1a64(p, h);
  };
  (mix(std::string_view(parts)), ...);
  return h;
}

}  // namespace biaug
