#pragma once

#include <filesystem>

#include "pfcn/tensor.hpp"

namespace pfcn {

void write_rgb_png(const std::filesystem::path& path, const RgbImage& img);
RgbImage read_rgb_png(const std::filesystem::path& path);

/// 16-bit grayscale; values outside [0, 65535] are rejected.
void write_gray16_png(const std::filesystem::path& path, const IdMap& ids);
IdMap read_gray16_png(const std::filesystem::path& path);

}  // namespace pfcn
