#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "crossdose/raster.hpp"

namespace testutil {

inline std::filesystem::path tmp_dir(const std::string& name) {
  auto p = std::filesystem::path(CROSSDOSE_TEST_TMP) / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline crossdose::RasterF32 random_raster(std::uint32_t h, std::uint32_t w, std::uint64_t seed, float lo = 0.0f,
                                          float hi = 10.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  crossdose::RasterF32 r(h, w);
  for (auto& v : r.data) v = u(rng);
  return r;
}

}  // namespace testutil
