#include "featsharp/image_io.hpp"

#include <png.h>

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace featsharp {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};

Grid rows_to_grid(png_structp png, png_infop info) {
  int width = static_cast<int>(png_get_image_width(png, info));
  int height = static_cast<int>(png_get_image_height(png, info));
  int channels = static_cast<int>(png_get_channels(png, info));
  png_bytepp rows = png_get_rows(png, info);
  Grid out(height, width, 3);
  for (int y = 0; y < height; ++y) {
    const png_byte* row = rows[y];
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        int src = channels >= 3 ? c : 0;
        out.at(y, x, c) = row[x * channels + src] / 255.0;
      }
    }
  }
  return out;
}

Grid decode_png(const std::string& path) {
  std::unique_ptr<FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("cannot open " + path);
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("corrupt png: " + path);
  }
  png_init_io(png, fp.get());
  png_read_png(png, info,
               PNG_TRANSFORM_STRIP_16 | PNG_TRANSFORM_PACKING |
                   PNG_TRANSFORM_EXPAND | PNG_TRANSFORM_STRIP_ALPHA,
               nullptr);
  Grid out = rows_to_grid(png, info);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

Grid decode_pnm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::string magic;
  is >> magic;
  if (magic != "P6" && magic != "P5") {
    throw std::runtime_error("unsupported pnm type in " + path);
  }
  auto next_int = [&is, &path]() {
    // skip whitespace and '#' comments
    for (;;) {
      int ch = is.peek();
      if (ch == '#') {
        std::string line;
        std::getline(is, line);
      } else if (std::isspace(ch)) {
        is.get();
      } else {
        break;
      }
    }
    long v;
    if (!(is >> v)) throw std::runtime_error("corrupt pnm: " + path);
    return v;
  };
  long width = next_int();
  long height = next_int();
  long maxval = next_int();
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 255) {
    throw std::runtime_error("corrupt pnm: " + path);
  }
  is.get();  // single whitespace after maxval
  int channels = magic == "P6" ? 3 : 1;
  std::vector<uint8_t> raw(static_cast<size_t>(width) * height * channels);
  is.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (!is) throw std::runtime_error("corrupt pnm: " + path);
  Grid out(static_cast<int>(height), static_cast<int>(width), 3);
  for (long y = 0; y < height; ++y) {
    for (long x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        int src = channels == 3 ? c : 0;
        out.at(static_cast<int>(y), static_cast<int>(x), c) =
            raw[(y * width + x) * channels + src] /
            static_cast<double>(maxval);
      }
    }
  }
  return out;
}

}  // namespace

Grid decode_image_file(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw std::runtime_error("cannot open " + path);
  unsigned char sig[8] = {0};
  probe.read(reinterpret_cast<char*>(sig), 8);
  probe.close();
  if (png_sig_cmp(sig, 0, 8) == 0) return decode_png(path);
  if (sig[0] == 'P' && (sig[1] == '5' || sig[1] == '6')) {
    return decode_pnm(path);
  }
  throw std::runtime_error("unsupported image format: " + path);
}

void write_png(const std::string& path, const ImageU8& img) {
  if (img.width <= 0 || img.height <= 0 ||
      img.pixels.size() != static_cast<size_t>(img.width) * img.height * 3) {
    throw std::invalid_argument("write_png: bad image buffer");
  }
  std::unique_ptr<FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot open " + path + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, nullptr);
  if (!png) throw std::runtime_error("png init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png write failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(
                           &img.pixels[static_cast<size_t>(y) * img.width * 3]));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ImageU8 grid_to_u8(const Grid& g) {
  if (g.channels() != 3) {
    throw std::invalid_argument("grid_to_u8 expects 3 channels");
  }
  ImageU8 img;
  img.width = g.width();
  img.height = g.height();
  img.pixels.resize(g.size());
  for (size_t i = 0; i < g.size(); ++i) {
    double v = std::clamp(g.raw()[i], 0.0, 1.0);
    img.pixels[i] = static_cast<uint8_t>(std::lround(v * 255.0));
  }
  return img;
}

}  // namespace featsharp
