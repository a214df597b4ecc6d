// Standard-codec boundary: baseline grayscale JPEG (ITU-T T.81) through
// libjpeg, with in-memory streams. Quantization to 8 bits happens only here;
// nothing in the training graph calls into this file.

#include "mdc/codec.hpp"

#include <jpeglib.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>

namespace mdc {

namespace {

struct JpegErrorJump {
  jpeg_error_mgr mgr;
  jmp_buf jump;
  char message[JMSG_LENGTH_MAX] = {0};
};

void jpeg_error_exit_throw(j_common_ptr cinfo) {
  JpegErrorJump* err = reinterpret_cast<JpegErrorJump*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  longjmp(err->jump, 1);
}

}  // namespace

Bitstream jpeg_encode(const Image& img, const CodecConfig& cfg) {
  if (cfg.qf < 1 || cfg.qf > 100)
    throw std::invalid_argument("jpeg_encode: quality factor must be in [1,100], got " + std::to_string(cfg.qf));
  if (img.height <= 0 || img.width <= 0) throw std::invalid_argument("jpeg_encode: empty image");
  for (double v : img.data) {
    if (v < -1e-9 || v > 1.0 + 1e-9) throw std::invalid_argument("jpeg_encode: pixel values outside [0,1]");
  }

  std::vector<unsigned char> pixels(img.pixel_count());
  for (size_t i = 0; i < img.data.size(); ++i) {
    const double v = std::min(std::max(img.data[i], 0.0), 1.0);
    pixels[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }

  jpeg_compress_struct cinfo;
  JpegErrorJump err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit_throw;

  unsigned char* out_buf = nullptr;
  unsigned long out_size = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    if (out_buf) free(out_buf);
    throw std::runtime_error(std::string("jpeg_encode: ") + err.message);
  }

  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &out_buf, &out_size);
  cinfo.image_width = static_cast<JDIMENSION>(img.width);
  cinfo.image_height = static_cast<JDIMENSION>(img.height);
  cinfo.input_components = 1;
  cinfo.in_color_space = JCS_GRAYSCALE;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, cfg.qf, TRUE);
  cinfo.optimize_coding = FALSE;  // plain baseline, reproducible byte counts
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = &pixels[static_cast<size_t>(cinfo.next_scanline) * img.width];
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);

  Bitstream bs;
  bs.bytes.assign(out_buf, out_buf + out_size);
  bs.src_height = img.height;
  bs.src_width = img.width;
  free(out_buf);
  if (bs.bytes.empty()) throw std::runtime_error("jpeg_encode: encoder produced no bytes");
  return bs;
}

Image jpeg_decode(const Bitstream& bs) {
  if (bs.bytes.empty()) throw std::runtime_error("jpeg_decode: empty stream");

  jpeg_decompress_struct cinfo;
  JpegErrorJump err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit_throw;

  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw std::runtime_error(std::string("jpeg_decode: ") + err.message);
  }

  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bs.bytes.data(), static_cast<unsigned long>(bs.bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_GRAYSCALE;
  jpeg_start_decompress(&cinfo);

  Image img(static_cast<int>(cinfo.output_height), static_cast<int>(cinfo.output_width));
  std::vector<unsigned char> row(cinfo.output_width);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW rp = row.data();
    jpeg_read_scanlines(&cinfo, &rp, 1);
    const int y = static_cast<int>(cinfo.output_scanline) - 1;
    for (int x = 0; x < img.width; ++x) img.at(y, x) = row[x] / 255.0;
  }
  jpeg_finish_decompress(&cinfo);
  const long warnings = cinfo.err->num_warnings;
  jpeg_destroy_decompress(&cinfo);
  // a truncated stream decodes with warnings; treat that as a failed channel
  if (warnings > 0) throw std::runtime_error("jpeg_decode: corrupt stream (" + std::to_string(warnings) + " warnings)");
  if (bs.src_height > 0 && (img.height != bs.src_height || img.width != bs.src_width)) {
    throw std::runtime_error("jpeg_decode: decoded dimensions disagree with stream metadata");
  }
  return img;
}

double bits_per_pixel(const std::vector<const Bitstream*>& streams, int M, int N) {
  if (streams.empty()) throw std::invalid_argument("bits_per_pixel: no streams");
  if (M <= 0 || N <= 0) throw std::invalid_argument("bits_per_pixel: source dimensions must be positive");
  const double pixels = static_cast<double>(M) * N;
  // summed per stream so that multi-stream bpp is exactly the sum of the
  // single-stream values
  double bpp = 0.0;
  for (const Bitstream* bs : streams) bpp += static_cast<double>(bs->byte_count()) * 8.0 / pixels;
  return bpp;
}

double bits_per_pixel(const std::vector<Bitstream>& streams, int M, int N) {
  std::vector<const Bitstream*> ptrs;
  ptrs.reserve(streams.size());
  for (const Bitstream& bs : streams) ptrs.push_back(&bs);
  return bits_per_pixel(ptrs, M, N);
}

void save_bitstream(const Bitstream& bs, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_bitstream: cannot open " + path);
  out.write(reinterpret_cast<const char*>(bs.bytes.data()), static_cast<std::streamsize>(bs.bytes.size()));
  if (!out) throw std::runtime_error("save_bitstream: write failed: " + path);
}

Bitstream load_bitstream(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_bitstream: cannot open " + path);
  Bitstream bs;
  bs.bytes.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bs.bytes.empty()) throw std::runtime_error("load_bitstream: empty file: " + path);

  // peek dimensions from the stream header
  jpeg_decompress_struct cinfo;
  JpegErrorJump err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit_throw;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw std::runtime_error(std::string("load_bitstream: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bs.bytes.data(), static_cast<unsigned long>(bs.bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  bs.src_height = static_cast<int>(cinfo.image_height);
  bs.src_width = static_cast<int>(cinfo.image_width);
  jpeg_destroy_decompress(&cinfo);
  return bs;
}

}  // namespace mdc
