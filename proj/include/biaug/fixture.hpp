#pragma once

// Seeded generator for a small self-contained pipeline fixture: source
// manifest, PPM images, a scene table for the mock detector, evaluation
// files, and a config.json wiring them to the mock backends.

#include <cstdint>
#include <filesystem>

namespace biaug {

struct FixtureOptions {
  std::size_t count = 40;
  std::uint64_t seed = 7;
  std::int32_t image_size = 48;
};

/// Writes the fixture into dir and returns the path of its config.json.
std::filesystem::path make_mock_fixture(const std::filesystem::path& dir,
                                        const FixtureOptions& options = {});

}  // namespace biaug
