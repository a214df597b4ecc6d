#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mdc/evaluation.hpp"
#include "test_util.hpp"

using namespace mdc;
namespace fs = std::filesystem;

namespace {

ModelBundle tiny_bundle() { return init_bundle(2024, 4); }

std::vector<Image> test_images() {
  return {testutil::synth_image(32, 32, 1), testutil::synth_image(32, 32, 2)};
}

}  // namespace

TEST_CASE("evaluate_one invariants and determinism") {
  const ModelBundle bundle = tiny_bundle();
  const Image img = testutil::synth_image(32, 32, 3);
  const ImageEval e1 = evaluate_one(bundle, img, 10, true);
  const ImageEval e2 = evaluate_one(bundle, img, 10, true);
  CHECK(e1.bpp_a == e2.bpp_a);
  CHECK(e1.psnr_a == e2.psnr_a);
  CHECK(e1.ssim_c == e2.ssim_c);

  CHECK(e1.bpp_a > 0.0);
  CHECK(e1.bpp_b > 0.0);
  CHECK(std::isfinite(e1.psnr_a));
  CHECK(e1.ssim_a >= -1.0);
  CHECK(e1.ssim_a <= 1.0);

  CHECK_THROWS_AS(evaluate_one(bundle, img, 0, true), std::invalid_argument);
  CHECK_THROWS_AS(evaluate_one(bundle, Image(15, 16, 0.2), 10, true), std::invalid_argument);
}

TEST_CASE("evaluate_model emits per-image rows plus corpus means") {
  const ModelBundle bundle = tiny_bundle();
  const std::vector<Image> images = test_images();
  const std::vector<std::string> ids{"img0", "img1"};
  const std::vector<int> qfs{2, 10};
  const std::vector<RDPoint> points = evaluate_model(bundle, images, ids, qfs);

  REQUIRE(points.size() == images.size() * qfs.size() + qfs.size());
  CHECK(points[0].method == "ours");
  CHECK(points[0].image == "img0");
  CHECK(points.back().image == "mean");

  for (const RDPoint& p : points) {
    CHECK(p.bpp_side > 0.0);
    CHECK(p.bpp_side < p.bpp_central);
    CHECK(p.ssim_side >= -1.0);
    CHECK(p.ssim_side <= 1.0);
    CHECK(p.ssim_central >= -1.0);
    CHECK(p.ssim_central <= 1.0);
  }
  // side/central bpp relation is exact by construction
  for (const RDPoint& p : points) {
    CHECK(p.bpp_central == 2.0 * p.bpp_side);
  }
}

TEST_CASE("evaluation is deterministic and independent of the worker count") {
  const ModelBundle bundle = tiny_bundle();
  const std::vector<Image> images = test_images();
  const std::vector<std::string> ids{"img0", "img1"};
  const std::vector<int> qfs{2, 10, 40};
  const std::vector<RDPoint> serial = evaluate_model(bundle, images, ids, qfs, 1);
  const std::vector<RDPoint> parallel = evaluate_model(bundle, images, ids, qfs, 4);
  REQUIRE(serial.size() == parallel.size());
  for (size_t i = 0; i < serial.size(); ++i) {
    CHECK(serial[i].image == parallel[i].image);
    CHECK(serial[i].qf == parallel[i].qf);
    CHECK(serial[i].psnr_side == parallel[i].psnr_side);    // bit-identical
    CHECK(serial[i].ssim_central == parallel[i].ssim_central);
  }
}

TEST_CASE("base evaluation uses poly-phase descriptions") {
  const ModelBundle bundle = tiny_bundle();
  const std::vector<Image> images{testutil::synth_image(32, 32, 9)};
  const std::vector<std::string> ids{"img"};
  const std::vector<RDPoint> points = evaluate_ours_base(bundle, images, ids, {10});
  CHECK(points[0].method == "ours-base");
  CHECK(points[0].bpp_side > 0.0);
  CHECK(default_qf_grid() == std::vector<int>{2, 6, 10, 20, 40});
  CHECK(default_qf_grid_base() == std::vector<int>{2, 3, 4, 10, 50});
}

TEST_CASE("caption report reproduces the published format") {
  RDPoint p;
  p.psnr_side = 28.577;
  p.ssim_side = 0.803;
  p.bpp_side = 0.292;
  p.psnr_central = 31.410;
  p.ssim_central = 0.842;
  p.bpp_central = 0.585;
  CHECK(caption_report(p) == "28.577/0.803/0.292(s) and 31.410/0.842/0.585(c)");
}

TEST_CASE("channel enumeration degenerate cases are exact") {
  const ModelBundle bundle = tiny_bundle();
  const Image img = testutil::synth_image(32, 32, 11);

  const ChannelReport both = enumerate_channels(bundle, img, 10, 0.0, 0.0);
  CHECK(both.expected_psnr == both.outcomes.psnr_c);
  CHECK(both.expected_ssim == both.outcomes.ssim_c);
  CHECK(both.outage_probability == 0.0);

  const ChannelReport only_b = enumerate_channels(bundle, img, 10, 1.0, 0.0);
  CHECK(only_b.expected_psnr == only_b.outcomes.psnr_b);

  const ChannelReport only_a = enumerate_channels(bundle, img, 10, 0.0, 1.0);
  CHECK(only_a.expected_psnr == only_a.outcomes.psnr_a);

  const ChannelReport none = enumerate_channels(bundle, img, 10, 1.0, 1.0);
  CHECK(none.outage_probability == 1.0);
  CHECK(std::isnan(none.expected_psnr));
}

TEST_CASE("channel enumeration equals the closed-form conditional mean") {
  const ModelBundle bundle = tiny_bundle();
  const Image img = testutil::synth_image(32, 32, 12);
  const double pa = 0.3, pb = 0.6;
  const ChannelReport rep = enumerate_channels(bundle, img, 10, pa, pb);
  const ImageEval& ev = rep.outcomes;
  const double w_both = (1 - pa) * (1 - pb);
  const double w_a = (1 - pa) * pb;
  const double w_b = pa * (1 - pb);
  const double expect =
      (w_both * ev.psnr_c + w_a * ev.psnr_a + w_b * ev.psnr_b) / (w_both + w_a + w_b);
  CHECK(std::fabs(rep.expected_psnr - expect) <= 1e-12);
  CHECK(std::fabs(rep.p_both - w_both) <= 1e-15);
  CHECK(std::fabs(rep.outage_probability - pa * pb) <= 1e-15);
}

TEST_CASE("monte-carlo simulation approaches the enumeration") {
  const ModelBundle bundle = tiny_bundle();
  const Image img = testutil::synth_image(32, 32, 13);
  const ChannelScenario scenario{0.5, 0.5, 100000, 7};
  const ChannelReport mc = simulate_channels(bundle, img, 10, scenario);
  const ChannelReport ex = enumerate_channels(bundle, img, 10, 0.5, 0.5);
  CHECK(std::fabs(mc.expected_psnr - ex.expected_psnr) <= 0.05);
  CHECK(std::fabs(mc.outage_probability - 0.25) <= 0.01);

  // degenerate Monte-Carlo cases are exact
  const ChannelReport mc0 = simulate_channels(bundle, img, 10, {0.0, 0.0, 1000, 7});
  CHECK(mc0.expected_psnr == ex.outcomes.psnr_c);
  const ChannelReport mc1 = simulate_channels(bundle, img, 10, {1.0, 0.0, 1000, 7});
  CHECK(mc1.expected_psnr == ex.outcomes.psnr_b);
}

TEST_CASE("csv export/import round trip and golden bytes") {
  std::vector<RDPoint> points;
  RDPoint p;
  p.method = "ours";
  p.image = "img0";
  p.qf = 10;
  p.bpp_side = 0.285156;
  p.bpp_central = 0.570313;
  p.psnr_side = 28.577001;
  p.ssim_side = 0.803;
  p.psnr_central = 31.41;
  p.ssim_central = 0.842;
  points.push_back(p);
  p.image = "mean";
  p.qf = 40;
  points.push_back(p);

  const fs::path path = fs::temp_directory_path() / "mdc_eval_rt.csv";
  export_rd(points, path.string());

  // golden bytes
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string expected =
      "method,image,qf,bpp_side,bpp_central,psnr_side,ssim_side,psnr_central,ssim_central\n"
      "ours,img0,10,0.285156,0.570313,28.577001,0.803000,31.410000,0.842000\n"
      "ours,mean,40,0.285156,0.570313,28.577001,0.803000,31.410000,0.842000\n";
  CHECK(ss.str() == expected);

  const std::vector<RDPoint> back = import_rd(path.string());
  REQUIRE(back.size() == 2);
  CHECK(back[0].method == "ours");
  CHECK(back[0].image == "img0");
  CHECK(back[0].qf == 10);
  CHECK(back[0].bpp_side == doctest::Approx(0.285156).epsilon(1e-12));
  CHECK(back[1].qf == 40);

  // import -> export reproduces the same bytes
  const fs::path path2 = fs::temp_directory_path() / "mdc_eval_rt2.csv";
  export_rd(back, path2.string());
  std::ifstream in2(path2);
  std::stringstream ss2;
  ss2 << in2.rdbuf();
  CHECK(ss2.str() == expected);

  CHECK_THROWS_AS(export_rd({}, path.string()), std::invalid_argument);
}

TEST_CASE("plot panels exist and keep point order") {
  std::vector<RDPoint> points;
  for (int i = 0; i < 4; ++i) {
    RDPoint p;
    p.method = "ours";
    p.image = "mean";
    p.qf = 2 + i;
    p.bpp_side = 0.1 * (i + 1);
    p.bpp_central = 0.2 * (i + 1);
    p.psnr_side = 20.0 + i;
    p.ssim_side = 0.5 + 0.05 * i;
    p.psnr_central = 22.0 + i;
    p.ssim_central = 0.6 + 0.05 * i;
    points.push_back(p);
  }
  const std::string prefix = (fs::temp_directory_path() / "mdc_eval_plot").string();
  const std::vector<std::string> files = plot_rd(points, prefix);
  REQUIRE(files.size() == 4);
  for (const std::string& f : files) {
    REQUIRE(fs::exists(f));
    std::ifstream in(f);
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string svg = ss.str();
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("polyline") != std::string::npos);
  }
  // x coordinates in the polyline follow the input order (ascending here)
  std::ifstream in(files[0]);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string svg = ss.str();
  const size_t start = svg.find("points=\"");
  REQUIRE(start != std::string::npos);
  const size_t end = svg.find('"', start + 8);
  std::istringstream pts(svg.substr(start + 8, end - start - 8));
  double prev_x = -1e300;
  std::string pair;
  int count = 0;
  while (pts >> pair) {
    const double x = std::stod(pair.substr(0, pair.find(',')));
    CHECK(x >= prev_x);
    prev_x = x;
    ++count;
  }
  CHECK(count == 4);

  CHECK_THROWS_AS(plot_rd({}, prefix), std::invalid_argument);
}
