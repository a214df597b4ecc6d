#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mdc/image.hpp"

namespace mdc {

// JPEG quality factor and 8-bit quantization policy at the codec boundary.
struct CodecConfig {
  int qf = 50;  // quality factor in [1,100]
};

// One transmitted description stream: baseline JPEG bytes plus the encoded
// raster dimensions.
struct Bitstream {
  std::vector<unsigned char> bytes;
  int src_height = 0;
  int src_width = 0;

  size_t byte_count() const { return bytes.size(); }
};

// Quantizes to 8 bits (round(v*255)) and encodes as baseline grayscale JPEG.
// byte_count includes all headers.
Bitstream jpeg_encode(const Image& img, const CodecConfig& cfg);

// Decodes back to [0,1]. Corrupt or truncated streams raise an error rather
// than returning partial pixels.
Image jpeg_decode(const Bitstream& bs);

// Transmitted bits over source pixel count: side bpp passes one stream,
// central bpp passes both. M, N are the dimensions of the original image.
double bits_per_pixel(const std::vector<const Bitstream*>& streams, int M, int N);
double bits_per_pixel(const std::vector<Bitstream>& streams, int M, int N);

void save_bitstream(const Bitstream& bs, const std::string& path);
Bitstream load_bitstream(const std::string& path);

}  // namespace mdc
