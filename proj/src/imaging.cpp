#include "mdc/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

namespace mdc {

DescriptionPair polyphase_split(const Image& img) {
  if (img.height % 2 != 0 || img.width % 2 != 0) {
    throw std::invalid_argument("polyphase_split: dimensions must be even, got " +
                                std::to_string(img.height) + "x" + std::to_string(img.width));
  }
  const int hh = img.height / 2;
  const int hw = img.width / 2;
  DescriptionPair pair{Image(hh, hw), Image(hh, hw)};
  for (int i = 0; i < hh; ++i) {
    for (int j = 0; j < hw; ++j) {
      pair.a.at(i, j) = img.at(2 * i, 2 * j);
      pair.b.at(i, j) = img.at(2 * i + 1, 2 * j + 1);
    }
  }
  return pair;
}

EmbeddedImage polyphase_embed(const DescriptionPair& pair) {
  require_same_size(pair.a, pair.b, "polyphase_embed");
  const int hh = pair.a.height;
  const int hw = pair.a.width;
  EmbeddedImage out;
  out.image = Image(2 * hh, 2 * hw);
  out.mask.assign(out.image.pixel_count(), 0);
  for (int i = 0; i < hh; ++i) {
    for (int j = 0; j < hw; ++j) {
      out.image.at(2 * i, 2 * j) = pair.a.at(i, j);
      out.image.at(2 * i + 1, 2 * j + 1) = pair.b.at(i, j);
      out.mask[static_cast<size_t>(2 * i) * out.image.width + 2 * j] = 1;
      out.mask[static_cast<size_t>(2 * i + 1) * out.image.width + 2 * j + 1] = 1;
    }
  }
  return out;
}

namespace {

// Half-pixel-center source coordinate and clamped neighbor weights for one
// output index of the 2x upsampler.
inline void tap2x(int out_idx, int in_size, int& i0, int& i1, double& w1) {
  const double src = 0.5 * (out_idx + 0.5) - 0.5;
  double f = std::floor(src);
  i0 = static_cast<int>(f);
  w1 = src - f;
  i1 = i0 + 1;
  i0 = std::clamp(i0, 0, in_size - 1);
  i1 = std::clamp(i1, 0, in_size - 1);
}

}  // namespace

Image upsample2x_raw(const Image& img) {
  if (img.height <= 0 || img.width <= 0) throw std::invalid_argument("upsample: empty image");
  const int oh = img.height * 2;
  const int ow = img.width * 2;
  // separable: rows first, then columns
  Image rows(img.height, ow);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < ow; ++x) {
      int x0, x1;
      double wx;
      tap2x(x, img.width, x0, x1, wx);
      rows.at(y, x) = (1.0 - wx) * img.at(y, x0) + wx * img.at(y, x1);
    }
  }
  Image out(oh, ow);
  for (int y = 0; y < oh; ++y) {
    int y0, y1;
    double wy;
    tap2x(y, img.height, y0, y1, wy);
    for (int x = 0; x < ow; ++x) {
      out.at(y, x) = (1.0 - wy) * rows.at(y0, x) + wy * rows.at(y1, x);
    }
  }
  return out;
}

Image upsample2x_adjoint(const Image& grad_upsampled) {
  if (grad_upsampled.height % 2 != 0 || grad_upsampled.width % 2 != 0) {
    throw std::invalid_argument("upsample2x_adjoint: gradient dimensions must be even");
  }
  const int ih = grad_upsampled.height / 2;
  const int iw = grad_upsampled.width / 2;
  // transpose of the column pass
  Image rows(ih, grad_upsampled.width);
  for (int y = 0; y < grad_upsampled.height; ++y) {
    int y0, y1;
    double wy;
    tap2x(y, ih, y0, y1, wy);
    for (int x = 0; x < grad_upsampled.width; ++x) {
      const double g = grad_upsampled.at(y, x);
      rows.at(y0, x) += (1.0 - wy) * g;
      rows.at(y1, x) += wy * g;
    }
  }
  Image out(ih, iw);
  for (int y = 0; y < ih; ++y) {
    for (int x = 0; x < grad_upsampled.width; ++x) {
      int x0, x1;
      double wx;
      tap2x(x, iw, x0, x1, wx);
      const double g = rows.at(y, x);
      out.at(y, x0) += (1.0 - wx) * g;
      out.at(y, x1) += wx * g;
    }
  }
  return out;
}

Image upsample_linear(const Image& img, int factor) {
  if (factor != 2) throw std::invalid_argument("upsample_linear: only factor 2 is supported");
  return clamp01(upsample2x_raw(img));
}

double psnr(const Image& x, const Image& y) {
  require_same_size(x, y, "psnr");
  double sum = 0.0;
  for (size_t i = 0; i < x.data.size(); ++i) {
    const double d = 255.0 * (x.data[i] - y.data[i]);
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(x.pixel_count());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double ssim(const Image& x, const Image& y, const SsimConfig& cfg) {
  require_same_size(x, y, "ssim");
  const int w = cfg.window;
  if (w < 2) throw std::invalid_argument("ssim: window must be >= 2");
  if (x.height < w || x.width < w) {
    throw std::invalid_argument("ssim: image smaller than window (" + std::to_string(x.height) +
                                "x" + std::to_string(x.width) + " < " + std::to_string(w) + ")");
  }
  const int ny = x.height - w + 1;
  const int nx = x.width - w + 1;
  const double n = static_cast<double>(w) * w;
  double acc = 0.0;
  for (int wy = 0; wy < ny; ++wy) {
    for (int wx = 0; wx < nx; ++wx) {
      double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
      for (int dy = 0; dy < w; ++dy) {
        const double* px = &x.data[static_cast<size_t>(wy + dy) * x.width + wx];
        const double* py = &y.data[static_cast<size_t>(wy + dy) * y.width + wx];
        for (int dx = 0; dx < w; ++dx) {
          const double a = px[dx];
          const double b = py[dx];
          sx += a;
          sy += b;
          sxx += a * a;
          syy += b * b;
          sxy += a * b;
        }
      }
      const double mux = sx / n;
      const double muy = sy / n;
      const double varx = sxx / n - mux * mux;
      const double vary = syy / n - muy * muy;
      const double cov = sxy / n - mux * muy;
      const double num = (2.0 * mux * muy + cfg.c1) * (2.0 * cov + cfg.c2);
      const double den = (mux * mux + muy * muy + cfg.c1) * (varx + vary + cfg.c2);
      acc += num / den;
    }
  }
  return acc / (static_cast<double>(ny) * nx);
}

namespace {

Image rotate_quarter(const Image& img, int quarters) {
  quarters &= 3;
  if (quarters == 0) return img;
  Image out;
  if (quarters == 2) {
    out = Image(img.height, img.width);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        out.at(y, x) = img.at(img.height - 1 - y, img.width - 1 - x);
    return out;
  }
  out = Image(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      if (quarters == 1)  // 90 degrees counter-clockwise
        out.at(img.width - 1 - x, y) = img.at(y, x);
      else  // 270
        out.at(x, img.height - 1 - y) = img.at(y, x);
    }
  }
  return out;
}

Image flip_image(const Image& img, int mode) {
  if (mode == 0) return img;
  Image out(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      out.at(y, x) = (mode == 1) ? img.at(y, img.width - 1 - x) : img.at(img.height - 1 - y, x);
  return out;
}

Image crop(const Image& img, int off_y, int off_x, int size) {
  Image out(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      out.at(y, x) = img.at(off_y + y, off_x + x);
  return out;
}

}  // namespace

PatchSet prepare_patches(const std::vector<Image>& sources,
                         const std::vector<std::string>& source_ids,
                         int patch_size, int total,
                         const AugmentationPolicy& aug, uint64_t seed) {
  if (sources.empty() && total > 0) throw std::invalid_argument("prepare_patches: no source images");
  if (sources.size() != source_ids.size())
    throw std::invalid_argument("prepare_patches: source/id count mismatch");
  if (patch_size < 2) throw std::invalid_argument("prepare_patches: patch size too small");
  for (size_t i = 0; i < sources.size(); ++i) {
    if (sources[i].height < patch_size || sources[i].width < patch_size) {
      throw std::invalid_argument("prepare_patches: source '" + source_ids[i] +
                                  "' is smaller than the patch size");
    }
  }
  PatchSet set;
  set.patches.reserve(total);
  set.records.reserve(total);
  std::mt19937_64 rng(mix_seed(seed, 0x70617463));
  for (int t = 0; t < total; ++t) {
    const size_t src = static_cast<size_t>(t) % sources.size();
    const Image& im = sources[src];
    PatchRecord rec;
    rec.source = source_ids[src];
    rec.off_y = static_cast<int>(rng() % static_cast<uint64_t>(im.height - patch_size + 1));
    rec.off_x = static_cast<int>(rng() % static_cast<uint64_t>(im.width - patch_size + 1));
    rec.flip = aug.flip ? static_cast<int>(rng() % 3) : 0;
    rec.rot = aug.rotate ? static_cast<int>(rng() % 4) : 0;
    Image patch = crop(im, rec.off_y, rec.off_x, patch_size);
    patch = flip_image(patch, rec.flip);
    patch = rotate_quarter(patch, rec.rot);
    set.patches.push_back(std::move(patch));
    set.records.push_back(std::move(rec));
  }
  return set;
}

namespace fs = std::filesystem;

void save_patchset(const PatchSet& set, const std::string& dir) {
  fs::create_directories(dir);
  std::ofstream manifest(fs::path(dir) / "manifest.txt");
  if (!manifest) throw std::runtime_error("save_patchset: cannot write manifest in " + dir);
  const char* flips[] = {"none", "h", "v"};
  for (size_t i = 0; i < set.patches.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "patch_%05zu.pgm", i);
    save_image(set.patches[i], (fs::path(dir) / name).string());
    const PatchRecord& r = set.records[i];
    manifest << name << ' ' << r.source << ' ' << r.off_y << ' ' << r.off_x << ' '
             << flips[r.flip] << ' ' << r.rot * 90 << '\n';
  }
}

PatchSet load_patchset(const std::string& dir) {
  std::ifstream manifest(fs::path(dir) / "manifest.txt");
  if (!manifest) throw std::runtime_error("load_patchset: no manifest.txt in " + dir);
  PatchSet set;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string file, flip;
    PatchRecord rec;
    int rot_deg = 0;
    if (!(ss >> file >> rec.source >> rec.off_y >> rec.off_x >> flip >> rot_deg)) {
      throw std::runtime_error("load_patchset: malformed manifest line: " + line);
    }
    rec.flip = (flip == "h") ? 1 : (flip == "v") ? 2 : 0;
    rec.rot = rot_deg / 90;
    set.patches.push_back(load_image((fs::path(dir) / file).string()));
    set.records.push_back(std::move(rec));
  }
  return set;
}

}  // namespace mdc
