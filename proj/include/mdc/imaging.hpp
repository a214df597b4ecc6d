#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mdc/image.hpp"

namespace mdc {

// ---------------------------------------------------------------------------
// Image file I/O. Readers accept 8-bit PNG, PGM (P2/P5) and uncompressed BMP;
// color inputs are reduced to luma. Writers pick the format from the
// extension (.png or .pgm).
// ---------------------------------------------------------------------------

Image load_image(const std::string& path);
void save_image(const Image& img, const std::string& path);

// ---------------------------------------------------------------------------
// Poly-phase splitting along the main diagonal of each 2x2 block:
// description A takes the top-left sample, description B the bottom-right.
// ---------------------------------------------------------------------------

DescriptionPair polyphase_split(const Image& img);

struct EmbeddedImage {
  Image image;                 // a at (2i,2j), b at (2i+1,2j+1), zeros elsewhere
  std::vector<uint8_t> mask;   // 1 at filled positions, row-major
};

EmbeddedImage polyphase_embed(const DescriptionPair& pair);

// ---------------------------------------------------------------------------
// Bilinear up-sampling by 2 in both dimensions (half-pixel sample centers,
// clamped borders). upsample_linear is the [0,1]-range public op;
// upsample2x_raw is the same linear map without the range clamp, and
// upsample2x_adjoint is its transpose (used to back-propagate through it).
// ---------------------------------------------------------------------------

Image upsample_linear(const Image& img, int factor = 2);
Image upsample2x_raw(const Image& img);
Image upsample2x_adjoint(const Image& grad_upsampled);

// ---------------------------------------------------------------------------
// Quality metrics.
// ---------------------------------------------------------------------------

// PSNR in dB on the 8-bit scale: 10*log10(255^2 / mse) with both images
// mapped to [0,255]. Identical images return +infinity.
double psnr(const Image& x, const Image& y);

struct SsimConfig {
  double c1 = 1e-4;
  double c2 = 9e-4;
  int window = 8;  // uniform (average-pooling) window side length
};

// Mean per-window SSIM over all valid window positions (stride 1, no
// padding). Local statistics use the uniform window of cfg.window.
double ssim(const Image& x, const Image& y, const SsimConfig& cfg = {});

// ---------------------------------------------------------------------------
// Training patches: deterministic crop/flip/rotate augmentation.
// ---------------------------------------------------------------------------

struct AugmentationPolicy {
  bool flip = true;    // horizontal / vertical mirroring
  bool rotate = true;  // quarter-turn rotations
};

struct PatchRecord {
  std::string source;  // id of the source image
  int off_y = 0;
  int off_x = 0;
  int flip = 0;  // 0 none, 1 horizontal, 2 vertical
  int rot = 0;   // quarter turns, 0..3
};

struct PatchSet {
  std::vector<Image> patches;
  std::vector<PatchRecord> records;
};

PatchSet prepare_patches(const std::vector<Image>& sources,
                         const std::vector<std::string>& source_ids,
                         int patch_size, int total,
                         const AugmentationPolicy& aug, uint64_t seed);

// Persist a patch set as a directory of PGM rasters plus manifest.txt
// (one line per patch: file, source id, offset, flip, rotation).
void save_patchset(const PatchSet& set, const std::string& dir);
PatchSet load_patchset(const std::string& dir);

}  // namespace mdc
