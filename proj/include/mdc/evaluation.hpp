#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mdc/codec.hpp"
#include "mdc/imaging.hpp"
#include "mdc/networks.hpp"

namespace mdc {

// One rate-distortion row. Side metrics are means over descriptions A and B;
// central bpp is exactly the sum of the two side stream rates.
struct RDPoint {
  std::string method;
  std::string image;
  int qf = 0;
  double bpp_side = 0.0;
  double bpp_central = 0.0;
  double psnr_side = 0.0;
  double ssim_side = 0.0;
  double psnr_central = 0.0;
  double ssim_central = 0.0;
};

// Full per-outcome measurement of one image at one quality factor.
struct ImageEval {
  double bpp_a = 0.0, bpp_b = 0.0;
  double psnr_a = 0.0, ssim_a = 0.0;  // side reconstruction from A only
  double psnr_b = 0.0, ssim_b = 0.0;  // side reconstruction from B only
  double psnr_c = 0.0, ssim_c = 0.0;  // central reconstruction
};

// Runs the full pipeline on one image: descriptions (generator or poly-phase
// split), codec round trip, the three reconstructions, metrics.
ImageEval evaluate_one(const ModelBundle& bundle, const Image& img, int qf, bool use_generator,
                       const SsimConfig& ssim_cfg = {});

// RD sweep with generator-produced descriptions; one row per (image, qf) plus
// a corpus-mean row per qf (image id "mean").
std::vector<RDPoint> evaluate_model(const ModelBundle& bundle, const std::vector<Image>& images,
                                    const std::vector<std::string>& ids,
                                    const std::vector<int>& qf_list, int jobs = 1);

// Same sweep with poly-phase split descriptions (the reconstruction nets are
// expected to have been trained on poly-phase data).
std::vector<RDPoint> evaluate_ours_base(const ModelBundle& bundle, const std::vector<Image>& images,
                                        const std::vector<std::string>& ids,
                                        const std::vector<int>& qf_list, int jobs = 1);

// Default quality-factor grids.
std::vector<int> default_qf_grid();       // {2, 6, 10, 20, 40}
std::vector<int> default_qf_grid_base();  // {2, 3, 4, 10, 50}

// "28.577/0.803/0.292(s) and 31.410/0.842/0.585(c)" — PSNR/SSIM/bpp report.
std::string caption_report(const RDPoint& p);

// ---------------------------------------------------------------------------
// Two-channel erasure simulation. The decoder rule over the four outcomes:
// both arrive -> central; only A -> side A; only B -> side B; none -> outage.
// Quality means are conditional on at least one description arriving; the
// outage mass is reported separately.
// ---------------------------------------------------------------------------

struct ChannelScenario {
  double p_loss_a = 0.0;
  double p_loss_b = 0.0;
  long trials = 10000;
  uint64_t seed = 1;
};

struct ChannelReport {
  double expected_psnr = 0.0;  // conditional on >= 1 description received
  double expected_ssim = 0.0;
  double outage_probability = 0.0;
  double p_both = 0.0, p_a_only = 0.0, p_b_only = 0.0;
  ImageEval outcomes;
};

// Monte-Carlo estimate over scenario.trials.
ChannelReport simulate_channels(const ModelBundle& bundle, const Image& img, int qf,
                                const ChannelScenario& scenario, bool use_generator = true);

// Exhaustive four-outcome enumeration (closed form).
ChannelReport enumerate_channels(const ModelBundle& bundle, const Image& img, int qf,
                                 double p_loss_a, double p_loss_b, bool use_generator = true);

// ---------------------------------------------------------------------------
// Persistence: CSV with the fixed header and simple SVG rate-distortion
// panels (one file per metric/panel, one series per method, points kept in
// input order).
// ---------------------------------------------------------------------------

extern const char* const kRdCsvHeader;

void export_rd(const std::vector<RDPoint>& points, const std::string& path);
std::vector<RDPoint> import_rd(const std::string& path);

// Writes <prefix>_psnr_side.svg, _psnr_central.svg, _ssim_side.svg,
// _ssim_central.svg; returns the written paths.
std::vector<std::string> plot_rd(const std::vector<RDPoint>& points, const std::string& prefix);

}  // namespace mdc
