#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mdc {

// Error from a broken pipeline state (missing stream, diverged training),
// as opposed to bad user input. The CLI maps this to its own exit code.
struct PipelineError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Single-channel raster, row-major, values nominally in [0,1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Image() = default;
  Image(int h, int w, double fill = 0.0);

  double& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
  double at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }

  size_t pixel_count() const { return data.size(); }
  bool same_size(const Image& other) const {
    return height == other.height && width == other.width;
  }
};

// The two descriptions produced from one source image. Each is half the
// source resolution in both dimensions when produced by a splitter.
struct DescriptionPair {
  Image a;
  Image b;
};

Image clamp01(Image img);

inline void require_same_size(const Image& x, const Image& y, const char* where) {
  if (!x.same_size(y)) {
    throw std::invalid_argument(std::string(where) + ": image dimensions differ (" +
                                std::to_string(x.height) + "x" + std::to_string(x.width) + " vs " +
                                std::to_string(y.height) + "x" + std::to_string(y.width) + ")");
  }
}

// Deterministic 64-bit mix used to derive independent RNG streams.
uint64_t mix_seed(uint64_t seed, uint64_t stream);

// FNV-1a over raw bytes; used to fingerprint parameter sets in tests/logs.
uint64_t fnv1a64(const void* bytes, size_t len);

}  // namespace mdc
