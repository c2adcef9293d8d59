#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include "biaug/core.hpp"

namespace testing {

namespace fs = std::filesystem;

// Fresh directory per call, under BIAUG_TEST_TMP when set.
inline fs::path temp_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  const char* root = std::getenv("BIAUG_TEST_TMP");
  fs::path base = root ? fs::path(root) : fs::temp_directory_path() / "biaug_tests";
  auto dir = base / (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void spit(const fs::path& p, const std::string& contents) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << contents;
}

inline biaug::AugmentedExample synthetic(const std::string& source, const std::string& object,
                                         biaug::AttributeCategory cat, biaug::Side side,
                                         const std::string& caption = "a caption") {
  biaug::AugmentedExample ex;
  ex.pair_id = biaug::make_pair_id(source, object, cat);
  ex.example_id = biaug::make_example_id(ex.pair_id, side);
  ex.source_id = source;
  ex.object_name = object;
  ex.category = cat;
  ex.side = side;
  ex.caption = caption;
  ex.image_ref = "synth/" + ex.pair_id + "_" + std::string(biaug::to_string(side)) + ".ppm";
  return ex;
}

}  // namespace testing
