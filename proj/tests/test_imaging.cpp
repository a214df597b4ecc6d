#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mdc/imaging.hpp"
#include "test_util.hpp"

using namespace mdc;
namespace fs = std::filesystem;

namespace {

fs::path tmpdir() {
  const fs::path dir = fs::temp_directory_path() / "mdc_imaging_test";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("load_image maps 8-bit values by v/255") {
  const fs::path path = tmpdir() / "scale.pgm";
  {
    std::ofstream out(path, std::ios::binary);
    out << "P5\n3 1\n255\n";
    const unsigned char px[3] = {255, 0, 128};
    out.write(reinterpret_cast<const char*>(px), 3);
  }
  const Image img = load_image(path.string());
  CHECK(img.height == 1);
  CHECK(img.width == 3);
  CHECK(img.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(img.at(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(img.at(0, 2) == doctest::Approx(128.0 / 255.0).epsilon(1e-12));
}

TEST_CASE("load_image errors") {
  CHECK_THROWS(load_image("/nonexistent/nowhere.png"));
  const fs::path bad = tmpdir() / "zero.pgm";
  {
    std::ofstream out(bad, std::ios::binary);
    out << "P5\n0 0\n255\n";
  }
  CHECK_THROWS(load_image(bad.string()));
}

TEST_CASE("png round trip and luma conversion") {
  const Image img = testutil::synth_image(24, 18, 7);
  const fs::path path = tmpdir() / "rt.png";
  save_image(img, path.string());
  const Image back = load_image(path.string());
  REQUIRE(back.same_size(img));
  // 8-bit quantization at the file boundary
  for (size_t i = 0; i < img.data.size(); ++i) {
    CHECK(std::fabs(back.data[i] - img.data[i]) <= 0.5 / 255.0 + 1e-12);
  }
}

TEST_CASE("bmp reader (24-bit, bottom-up)") {
  // 2x2 BMP: bottom row (blue, green), top row (red, white)
  const int w = 2, h = 2;
  const int stride = ((w * 24 + 31) / 32) * 4;  // 8
  std::vector<unsigned char> file(54 + stride * h, 0);
  file[0] = 'B';
  file[1] = 'M';
  const uint32_t size = static_cast<uint32_t>(file.size());
  std::memcpy(&file[2], &size, 4);
  const uint32_t off = 54;
  std::memcpy(&file[10], &off, 4);
  const uint32_t hdr = 40;
  std::memcpy(&file[14], &hdr, 4);
  const int32_t wi = w, hi = h;
  std::memcpy(&file[18], &wi, 4);
  std::memcpy(&file[22], &hi, 4);
  const uint16_t planes = 1, bpp = 24;
  std::memcpy(&file[26], &planes, 2);
  std::memcpy(&file[28], &bpp, 2);
  // bottom-up rows, BGR
  unsigned char* row0 = &file[54];            // image row 1 (bottom)
  row0[0] = 255; row0[1] = 0; row0[2] = 0;    // blue
  row0[3] = 0; row0[4] = 255; row0[5] = 0;    // green
  unsigned char* row1 = &file[54 + stride];   // image row 0 (top)
  row1[0] = 0; row1[1] = 0; row1[2] = 255;    // red
  row1[3] = 255; row1[4] = 255; row1[5] = 255;  // white
  const fs::path path = tmpdir() / "tiny.bmp";
  std::ofstream(path, std::ios::binary)
      .write(reinterpret_cast<const char*>(file.data()), static_cast<std::streamsize>(file.size()));

  const Image img = load_image(path.string());
  REQUIRE(img.height == 2);
  REQUIRE(img.width == 2);
  CHECK(img.at(0, 0) == doctest::Approx(0.299));   // red
  CHECK(img.at(0, 1) == doctest::Approx(1.0));     // white
  CHECK(img.at(1, 0) == doctest::Approx(0.114));   // blue
  CHECK(img.at(1, 1) == doctest::Approx(0.587));   // green
}

TEST_CASE("polyphase_split takes the main diagonal of each 2x2 block") {
  Image tiny(2, 2);
  tiny.at(0, 0) = 0.1;
  tiny.at(0, 1) = 0.2;
  tiny.at(1, 0) = 0.3;
  tiny.at(1, 1) = 0.4;
  const DescriptionPair pair = polyphase_split(tiny);
  REQUIRE(pair.a.height == 1);
  REQUIRE(pair.a.width == 1);
  CHECK(pair.a.at(0, 0) == 0.1);
  CHECK(pair.b.at(0, 0) == 0.4);
}

TEST_CASE("polyphase_split on the 4x4 ramp") {
  Image ramp(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) ramp.at(i, j) = (4.0 * i + j) / 15.0;
  const DescriptionPair pair = polyphase_split(ramp);
  const double ea[2][2] = {{0.0, 2.0 / 15.0}, {8.0 / 15.0, 10.0 / 15.0}};
  const double eb[2][2] = {{5.0 / 15.0, 7.0 / 15.0}, {13.0 / 15.0, 1.0}};
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      CHECK(pair.a.at(i, j) == doctest::Approx(ea[i][j]).epsilon(1e-15));
      CHECK(pair.b.at(i, j) == doctest::Approx(eb[i][j]).epsilon(1e-15));
    }
  }
}

TEST_CASE("polyphase_split preserves constants and rejects odd dimensions") {
  const Image c(6, 8, 0.42);
  const DescriptionPair pair = polyphase_split(c);
  for (double v : pair.a.data) CHECK(v == 0.42);
  for (double v : pair.b.data) CHECK(v == 0.42);
  CHECK_THROWS_AS(polyphase_split(Image(5, 8)), std::invalid_argument);
  CHECK_THROWS_AS(polyphase_split(Image(8, 5)), std::invalid_argument);
}

TEST_CASE("polyphase_embed inverts split on the masked positions") {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    const Image img = testutil::random_image(10, 14, seed);
    const EmbeddedImage em = polyphase_embed(polyphase_split(img));
    REQUIRE(em.image.same_size(img));
    size_t filled = 0;
    for (size_t i = 0; i < em.mask.size(); ++i) {
      if (em.mask[i]) {
        ++filled;
        CHECK(em.image.data[i] == img.data[i]);  // exact
      } else {
        CHECK(em.image.data[i] == 0.0);
      }
    }
    CHECK(filled * 2 == em.mask.size());  // density exactly 0.5
  }
}

TEST_CASE("polyphase_embed single block and errors") {
  DescriptionPair pair{Image(1, 1, 0.7), Image(1, 1, 0.9)};
  const EmbeddedImage em = polyphase_embed(pair);
  CHECK(em.image.at(0, 0) == 0.7);
  CHECK(em.image.at(0, 1) == 0.0);
  CHECK(em.image.at(1, 0) == 0.0);
  CHECK(em.image.at(1, 1) == 0.9);
  DescriptionPair bad{Image(2, 2), Image(1, 1)};
  CHECK_THROWS_AS(polyphase_embed(bad), std::invalid_argument);
}

TEST_CASE("split locality: one source pixel feeds at most one description pixel") {
  Image img = testutil::random_image(8, 8, 3);
  const DescriptionPair base = polyphase_split(img);
  std::mt19937_64 rng(99);
  for (int t = 0; t < 20; ++t) {
    const int y = static_cast<int>(rng() % 8), x = static_cast<int>(rng() % 8);
    Image mod = img;
    mod.at(y, x) += 0.123;
    const DescriptionPair split = polyphase_split(mod);
    int changed = 0;
    for (size_t i = 0; i < split.a.data.size(); ++i) {
      if (split.a.data[i] != base.a.data[i]) ++changed;
      if (split.b.data[i] != base.b.data[i]) ++changed;
    }
    CHECK(changed <= 1);
  }
}

TEST_CASE("upsample_linear of a constant is that constant at 2x size") {
  const Image c(5, 7, 0.3125);
  const Image up = upsample_linear(c);
  REQUIRE(up.height == 10);
  REQUIRE(up.width == 14);
  for (double v : up.data) CHECK(v == doctest::Approx(0.3125).epsilon(1e-15));
}

TEST_CASE("upsample_linear ramp is monotone from 0 to 1") {
  Image row(1, 2);
  row.at(0, 0) = 0.0;
  row.at(0, 1) = 1.0;
  const Image up = upsample_linear(row);
  REQUIRE(up.height == 2);
  REQUIRE(up.width == 4);
  for (int y = 0; y < 2; ++y) {
    CHECK(up.at(y, 0) == 0.0);
    CHECK(up.at(y, 3) == 1.0);
    for (int x = 1; x < 4; ++x) CHECK(up.at(y, x) >= up.at(y, x - 1));
  }
  CHECK_THROWS_AS(upsample_linear(row, 3), std::invalid_argument);
}

TEST_CASE("upsample_linear matches an independent per-pixel bilinear reference") {
  // reference: direct 2-D evaluation at half-pixel centers with clamped taps
  auto reference = [](const Image& in) {
    Image out(in.height * 2, in.width * 2);
    auto tap = [](double src, int size, int& i0, int& i1, double& f) {
      const double fl = std::floor(src);
      i0 = static_cast<int>(fl);
      f = src - fl;
      i1 = std::min(i0 + 1, size - 1);
      i0 = std::max(i0, 0);
      if (i0 > size - 1) i0 = size - 1;
    };
    for (int y = 0; y < out.height; ++y) {
      for (int x = 0; x < out.width; ++x) {
        int y0, y1, x0, x1;
        double fy, fx;
        tap((y + 0.5) / 2.0 - 0.5, in.height, y0, y1, fy);
        tap((x + 0.5) / 2.0 - 0.5, in.width, x0, x1, fx);
        out.at(y, x) = (1 - fy) * ((1 - fx) * in.at(y0, x0) + fx * in.at(y0, x1)) +
                       fy * ((1 - fx) * in.at(y1, x0) + fx * in.at(y1, x1));
      }
    }
    return out;
  };
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const Image in = testutil::random_image(8, 8, 1000 + seed);
    const Image got = upsample_linear(in);
    const Image want = reference(in);
    double worst = 0.0;
    for (size_t i = 0; i < got.data.size(); ++i)
      worst = std::max(worst, std::fabs(got.data[i] - want.data[i]));
    CHECK(worst <= 1e-6);
  }
}

TEST_CASE("upsample2x_adjoint is the transpose of upsample2x_raw") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 5; ++t) {
    const Image x = testutil::random_image(6, 9, rng());
    const Image y = testutil::random_image(12, 18, rng());
    const Image ux = upsample2x_raw(x);
    const Image aty = upsample2x_adjoint(y);
    double lhs = 0.0, rhs = 0.0;
    for (size_t i = 0; i < ux.data.size(); ++i) lhs += ux.data[i] * y.data[i];
    for (size_t i = 0; i < x.data.size(); ++i) rhs += x.data[i] * aty.data[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("psnr closed forms") {
  const Image x = testutil::random_image(12, 12, 11);
  CHECK(std::isinf(psnr(x, x)));

  Image shifted = x;
  for (double& v : shifted.data) v += 16.0 / 255.0;  // no clipping: values may exceed 1
  CHECK(psnr(x, shifted) == doctest::Approx(10.0 * std::log10(255.0 * 255.0 / 256.0)).epsilon(1e-9));

  Image one = x;
  for (double& v : one.data) v += 1.0 / 255.0;
  CHECK(psnr(x, one) == doctest::Approx(10.0 * std::log10(255.0 * 255.0)).epsilon(1e-9));
  CHECK(psnr(x, one) == doctest::Approx(48.1308036).epsilon(1e-6));

  CHECK(psnr(x, shifted) == psnr(shifted, x));  // exact symmetry
  CHECK_THROWS_AS(psnr(x, Image(3, 3)), std::invalid_argument);
}

TEST_CASE("ssim exact and constant cases") {
  const Image x = testutil::random_image(16, 16, 21);
  CHECK(ssim(x, x) == 1.0);  // exact

  const SsimConfig cfg;
  const Image zero(8, 8, 0.0), one(8, 8, 1.0);
  CHECK(ssim(zero, one, cfg) == doctest::Approx(cfg.c1 / (1.0 + cfg.c1)).epsilon(1e-12));
  CHECK(ssim(zero, one, cfg) == doctest::Approx(9.999e-5).epsilon(1e-3));
}

TEST_CASE("ssim matches the brute-force per-window oracle") {
  const SsimConfig cfg;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const Image x = testutil::random_image(16, 16, 300 + seed);
    const Image y = testutil::random_image(16, 16, 400 + seed);
    CHECK(std::fabs(ssim(x, y, cfg) - testutil::ssim_bruteforce(x, y, cfg)) <= 1e-6);
  }
}

TEST_CASE("ssim symmetry, bounds and window error") {
  const SsimConfig cfg;
  for (uint64_t seed = 0; seed < 5; ++seed) {
    const Image x = testutil::synth_image(16, 16, 500 + seed);
    const Image y = testutil::synth_image(16, 16, 600 + seed);
    const double s = ssim(x, y, cfg);
    CHECK(ssim(y, x, cfg) == doctest::Approx(s).epsilon(1e-15));
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
  }
  CHECK_THROWS_AS(ssim(Image(4, 4), Image(4, 4), cfg), std::invalid_argument);
}

TEST_CASE("prepare_patches counts, determinism and errors") {
  std::vector<Image> sources;
  std::vector<std::string> ids;
  for (int i = 0; i < 4; ++i) {
    sources.push_back(testutil::synth_image(40, 40, 700 + i));
    ids.push_back("img" + std::to_string(i));
  }
  const AugmentationPolicy aug;
  const PatchSet set = prepare_patches(sources, ids, 32, 24, aug, 9);
  REQUIRE(set.patches.size() == 24);
  for (const Image& p : set.patches) {
    CHECK(p.height == 32);
    CHECK(p.width == 32);
  }
  CHECK(prepare_patches(sources, ids, 32, 0, aug, 9).patches.empty());

  const PatchSet again = prepare_patches(sources, ids, 32, 24, aug, 9);
  for (size_t i = 0; i < set.patches.size(); ++i) {
    CHECK(set.patches[i].data == again.patches[i].data);  // bit-identical
  }
  const PatchSet other = prepare_patches(sources, ids, 32, 24, aug, 10);
  bool any_diff = false;
  for (size_t i = 0; i < set.patches.size() && !any_diff; ++i) {
    any_diff = set.patches[i].data != other.patches[i].data;
  }
  CHECK(any_diff);

  sources.push_back(Image(16, 16, 0.5));
  ids.push_back("small");
  try {
    prepare_patches(sources, ids, 32, 8, aug, 9);
    FAIL("expected error for undersized source");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("small") != std::string::npos);
  }
}

TEST_CASE("patch set persists as rasters plus manifest") {
  std::vector<Image> sources{testutil::synth_image(40, 40, 800)};
  std::vector<std::string> ids{"src"};
  const PatchSet set = prepare_patches(sources, ids, 16, 6, {}, 3);
  const fs::path dir = tmpdir() / "patchset";
  fs::remove_all(dir);
  save_patchset(set, dir.string());
  REQUIRE(fs::exists(dir / "manifest.txt"));

  const PatchSet loaded = load_patchset(dir.string());
  REQUIRE(loaded.patches.size() == set.patches.size());
  for (size_t i = 0; i < set.patches.size(); ++i) {
    REQUIRE(loaded.patches[i].same_size(set.patches[i]));
    for (size_t j = 0; j < set.patches[i].data.size(); ++j) {
      CHECK(std::fabs(loaded.patches[i].data[j] - set.patches[i].data[j]) <= 0.5 / 255.0 + 1e-12);
    }
    CHECK(loaded.records[i].source == set.records[i].source);
    CHECK(loaded.records[i].off_y == set.records[i].off_y);
    CHECK(loaded.records[i].flip == set.records[i].flip);
    CHECK(loaded.records[i].rot == set.records[i].rot);
  }
}
