#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "featsharp/grid.hpp"

namespace featsharp {

struct ImageU8 {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;  // RGB, row-major
};

/// Decodes PNG (any 8/16-bit layout, normalized to RGB) or binary PPM/PGM
/// into a [0,1] 3-channel grid. Throws on unreadable files.
Grid decode_image_file(const std::string& path);

void write_png(const std::string& path, const ImageU8& img);

/// Clamps to [0,1] and quantizes to 8-bit RGB.
ImageU8 grid_to_u8(const Grid& g);

}  // namespace featsharp
