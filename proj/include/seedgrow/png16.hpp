#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace seedgrow {

/// Single-channel 16-bit raster, row-major.
struct LabelRaster {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> values;
};

LabelRaster read_png16(const std::filesystem::path& path);
void write_png16(const std::filesystem::path& path, const LabelRaster& raster);

}  // namespace seedgrow
