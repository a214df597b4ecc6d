#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "mdc/codec.hpp"
#include "mdc/imaging.hpp"
#include "test_util.hpp"

using namespace mdc;
namespace fs = std::filesystem;

namespace {

// gentle low-frequency content: random image blurred by repeated box passes
Image smooth_random(int h, int w, uint64_t seed) {
  Image img = testutil::random_image(h, w, seed);
  for (int pass = 0; pass < 3; ++pass) {
    Image next(h, w);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        int count = 0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = y + dy, nx = x + dx;
            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            acc += img.at(ny, nx);
            ++count;
          }
        }
        next.at(y, x) = acc / count;
      }
    }
    img = std::move(next);
  }
  return img;
}

}  // namespace

TEST_CASE("top-quality round trip keeps smooth images above 40 dB") {
  for (uint64_t seed = 0; seed < 4; ++seed) {
    const Image img = smooth_random(48, 48, 10 + seed);
    const Image back = jpeg_decode(jpeg_encode(img, CodecConfig{100}));
    REQUIRE(back.same_size(img));
    CHECK(psnr(img, back) >= 40.0);
  }
}

TEST_CASE("constant mid-gray survives qf 50 within one 8-bit step") {
  const Image gray(64, 64, 0.5);
  const Image back = jpeg_decode(jpeg_encode(gray, CodecConfig{50}));
  for (double v : back.data) CHECK(std::fabs(v - 0.5) <= 1.0 / 255.0 + 1e-12);
}

TEST_CASE("rate falls with quality factor on a natural image") {
  const Image img = testutil::synth_image(64, 64, 77);
  CHECK(jpeg_encode(img, CodecConfig{2}).byte_count() < jpeg_encode(img, CodecConfig{90}).byte_count());
}

TEST_CASE("mean rate is non-decreasing across the qf grid") {
  const int qfs[] = {2, 6, 10, 20, 40};
  double prev_mean = 0.0;
  for (const int qf : qfs) {
    double total = 0.0;
    for (uint64_t seed = 0; seed < 10; ++seed) {
      total += static_cast<double>(
          jpeg_encode(testutil::synth_image(48, 48, 200 + seed), CodecConfig{qf}).byte_count());
    }
    const double mean = total / 10.0;
    CHECK(mean >= prev_mean);
    prev_mean = mean;
  }
}

TEST_CASE("decode output stays in range and matches dimensions") {
  const Image img = testutil::random_image(17, 23, 5);  // odd dims are fine for the codec
  const Bitstream bs = jpeg_encode(img, CodecConfig{10});
  const Image back = jpeg_decode(bs);
  REQUIRE(back.height == 17);
  REQUIRE(back.width == 23);
  for (double v : back.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("truncated stream raises instead of returning pixels") {
  const Image img = testutil::synth_image(32, 32, 6);
  Bitstream bs = jpeg_encode(img, CodecConfig{50});
  bs.bytes.resize(bs.bytes.size() / 2);
  CHECK_THROWS(jpeg_decode(bs));

  Bitstream garbage;
  garbage.bytes.assign(64, 0x55);
  CHECK_THROWS(jpeg_decode(garbage));
}

TEST_CASE("re-encoding at the same qf is stable") {
  const Image img = testutil::synth_image(64, 64, 7);
  const CodecConfig cc{30};
  const Image once = jpeg_decode(jpeg_encode(img, cc));
  const Image twice = jpeg_decode(jpeg_encode(once, cc));
  CHECK(psnr(once, twice) >= 45.0);
}

TEST_CASE("bits_per_pixel formula and exact additivity") {
  Bitstream a;
  a.bytes.assign(2336, 0);
  CHECK(bits_per_pixel({&a}, 256, 256) == 0.28515625);  // 2336*8/65536, exact

  Bitstream b;
  b.bytes.assign(997, 0);
  const double bpp_a = bits_per_pixel({&a}, 250, 222);
  const double bpp_b = bits_per_pixel({&b}, 250, 222);
  CHECK(bits_per_pixel(std::vector<const Bitstream*>{&a, &b}, 250, 222) == bpp_a + bpp_b);  // exact

  CHECK_THROWS_AS(bits_per_pixel(std::vector<const Bitstream*>{}, 4, 4), std::invalid_argument);
  CHECK_THROWS_AS(bits_per_pixel({&a}, 0, 4), std::invalid_argument);
}

TEST_CASE("encoding is deterministic") {
  const Image img = testutil::synth_image(40, 40, 8);
  const Bitstream x = jpeg_encode(img, CodecConfig{20});
  const Bitstream y = jpeg_encode(img, CodecConfig{20});
  CHECK(x.bytes == y.bytes);
}

TEST_CASE("encode input validation") {
  const Image img = testutil::random_image(8, 8, 9);
  CHECK_THROWS_AS(jpeg_encode(img, CodecConfig{0}), std::invalid_argument);
  CHECK_THROWS_AS(jpeg_encode(img, CodecConfig{101}), std::invalid_argument);
  Image bad = img;
  bad.at(0, 0) = 1.5;
  CHECK_THROWS_AS(jpeg_encode(bad, CodecConfig{50}), std::invalid_argument);
}

TEST_CASE("bitstream file round trip") {
  const Image img = testutil::synth_image(24, 30, 11);
  const Bitstream bs = jpeg_encode(img, CodecConfig{40});
  const fs::path path = fs::temp_directory_path() / "mdc_codec_test.jpg";
  save_bitstream(bs, path.string());
  const Bitstream loaded = load_bitstream(path.string());
  CHECK(loaded.bytes == bs.bytes);
  CHECK(loaded.src_height == 24);
  CHECK(loaded.src_width == 30);
}
