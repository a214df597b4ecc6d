// Raster file I/O: 8-bit PNG / PGM / BMP readers, PNG / PGM writers.
// Color inputs are reduced to Rec.601 luma at load.

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

#include "mdc/imaging.hpp"

namespace mdc {

namespace {

constexpr double kLumaR = 0.299, kLumaG = 0.587, kLumaB = 0.114;

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

Image check_nonempty(Image img, const std::string& path) {
  if (img.height <= 0 || img.width <= 0) {
    throw std::runtime_error("load_image: zero-dimension image: " + path);
  }
  return img;
}

// --- PGM (P2 ascii / P5 binary, maxval <= 255) ---

int pgm_next_int(std::istream& in) {
  // skips whitespace and '#' comments
  while (true) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int v;
  if (!(in >> v)) throw std::runtime_error("load_image: malformed PGM header");
  return v;
}

Image load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_image: cannot open " + path);
  char p, kind;
  in.get(p);
  in.get(kind);
  if (p != 'P' || (kind != '2' && kind != '5')) throw std::runtime_error("load_image: not a PGM: " + path);
  const int w = pgm_next_int(in);
  const int h = pgm_next_int(in);
  const int maxval = pgm_next_int(in);
  if (maxval <= 0 || maxval > 255) throw std::runtime_error("load_image: PGM maxval out of 8-bit range: " + path);
  Image img(h, w);
  if (kind == '5') {
    in.get();  // single whitespace after maxval
    std::vector<unsigned char> row(static_cast<size_t>(w));
    for (int y = 0; y < h; ++y) {
      in.read(reinterpret_cast<char*>(row.data()), w);
      if (!in) throw std::runtime_error("load_image: truncated PGM: " + path);
      for (int x = 0; x < w; ++x) img.at(y, x) = row[x] / 255.0;
    }
  } else {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) img.at(y, x) = pgm_next_int(in) / 255.0;
  }
  return check_nonempty(std::move(img), path);
}

void save_pgm(const Image& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_image: cannot open " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> row(static_cast<size_t>(img.width));
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double v = std::clamp(img.at(y, x), 0.0, 1.0);
      row[x] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    out.write(reinterpret_cast<const char*>(row.data()), img.width);
  }
  if (!out) throw std::runtime_error("save_image: write failed: " + path);
}

// --- PNG via libpng ---

Image load_png(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw std::runtime_error("load_image: cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("load_image: libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("load_image: PNG decode error: " + path);
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  png_uint_32 w = 0, h = 0;
  int bit_depth = 0, color_type = 0;
  png_get_IHDR(png, info, &w, &h, &bit_depth, &color_type, nullptr, nullptr, nullptr);
  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const int channels = png_get_channels(png, info);
  std::vector<unsigned char> rowbuf(static_cast<size_t>(w) * channels);
  Image img(static_cast<int>(h), static_cast<int>(w));
  for (png_uint_32 y = 0; y < h; ++y) {
    png_read_row(png, rowbuf.data(), nullptr);
    for (png_uint_32 x = 0; x < w; ++x) {
      double v;
      if (channels >= 3) {
        const unsigned char* p = &rowbuf[static_cast<size_t>(x) * channels];
        v = (kLumaR * p[0] + kLumaG * p[1] + kLumaB * p[2]) / 255.0;
      } else {
        v = rowbuf[x] / 255.0;
      }
      img.at(static_cast<int>(y), static_cast<int>(x)) = v;
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return check_nonempty(std::move(img), path);
}

void save_png(const Image& img, const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw std::runtime_error("save_image: cannot open " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("save_image: libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("save_image: PNG encode error: " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<unsigned char> row(static_cast<size_t>(img.width));
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double v = std::clamp(img.at(y, x), 0.0, 1.0);
      row[x] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// --- BMP (uncompressed BITMAPINFOHEADER, 8-bit palette or 24/32-bit) ---

uint32_t rd_u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
int32_t rd_i32(const unsigned char* p) { return static_cast<int32_t>(rd_u32(p)); }
uint16_t rd_u16(const unsigned char* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }

Image load_bmp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_image: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 54 || bytes[0] != 'B' || bytes[1] != 'M')
    throw std::runtime_error("load_image: not a BMP: " + path);
  const uint32_t data_offset = rd_u32(&bytes[10]);
  const uint32_t header_size = rd_u32(&bytes[14]);
  if (header_size < 40) throw std::runtime_error("load_image: unsupported BMP header: " + path);
  const int32_t w = rd_i32(&bytes[18]);
  const int32_t h_raw = rd_i32(&bytes[22]);
  const uint16_t bpp = rd_u16(&bytes[28]);
  const uint32_t compression = rd_u32(&bytes[30]);
  if (compression != 0) throw std::runtime_error("load_image: compressed BMP unsupported: " + path);
  if (bpp != 8 && bpp != 24 && bpp != 32)
    throw std::runtime_error("load_image: BMP bit depth unsupported: " + path);
  const bool bottom_up = h_raw > 0;
  const int h = std::abs(h_raw);
  if (w <= 0 || h == 0) throw std::runtime_error("load_image: zero-dimension image: " + path);

  // palette for 8-bit (BGRA entries after the info header)
  std::vector<double> palette_luma;
  if (bpp == 8) {
    uint32_t colors = rd_u32(&bytes[46]);
    if (colors == 0) colors = 256;
    const size_t pal_off = 14 + header_size;
    if (pal_off + colors * 4 > bytes.size()) throw std::runtime_error("load_image: truncated BMP palette");
    palette_luma.resize(colors);
    for (uint32_t i = 0; i < colors; ++i) {
      const unsigned char* e = &bytes[pal_off + i * 4];
      palette_luma[i] = (kLumaB * e[0] + kLumaG * e[1] + kLumaR * e[2]) / 255.0;
    }
  }
  const size_t row_stride = ((static_cast<size_t>(w) * bpp + 31) / 32) * 4;
  if (data_offset + row_stride * h > bytes.size()) throw std::runtime_error("load_image: truncated BMP: " + path);

  Image img(h, w);
  for (int y = 0; y < h; ++y) {
    const int src_row = bottom_up ? h - 1 - y : y;
    const unsigned char* row = &bytes[data_offset + row_stride * src_row];
    for (int x = 0; x < w; ++x) {
      double v;
      if (bpp == 8) {
        const unsigned char idx = row[x];
        if (idx >= palette_luma.size()) throw std::runtime_error("load_image: BMP palette index out of range");
        v = palette_luma[idx];
      } else {
        const unsigned char* p = &row[static_cast<size_t>(x) * (bpp / 8)];
        v = (kLumaB * p[0] + kLumaG * p[1] + kLumaR * p[2]) / 255.0;  // BGR order
      }
      img.at(y, x) = v;
    }
  }
  return img;
}

}  // namespace

Image load_image(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw std::runtime_error("load_image: cannot open " + path);
  unsigned char magic[8] = {0};
  probe.read(reinterpret_cast<char*>(magic), sizeof(magic));
  probe.close();
  if (magic[0] == 0x89 && magic[1] == 'P' && magic[2] == 'N' && magic[3] == 'G') return load_png(path);
  if (magic[0] == 'P' && (magic[1] == '2' || magic[1] == '5')) return load_pgm(path);
  if (magic[0] == 'B' && magic[1] == 'M') return load_bmp(path);
  throw std::runtime_error("load_image: unrecognized image format: " + path);
}

void save_image(const Image& img, const std::string& path) {
  if (img.height <= 0 || img.width <= 0) throw std::invalid_argument("save_image: empty image");
  const auto dot = path.rfind('.');
  const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
  if (ext == ".png") {
    save_png(img, path);
  } else if (ext == ".pgm") {
    save_pgm(img, path);
  } else {
    throw std::invalid_argument("save_image: unsupported extension '" + ext + "' (use .png or .pgm)");
  }
}

}  // namespace mdc
