#include "mdc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <limits>
#include <random>
#include <sstream>

namespace mdc {

ImageEval evaluate_one(const ModelBundle& bundle, const Image& img, int qf, bool use_generator,
                       const SsimConfig& ssim_cfg) {
  if (qf < 1 || qf > 100) throw std::invalid_argument("evaluate_one: qf must be in [1,100]");
  if (img.height % 2 || img.width % 2) throw std::invalid_argument("evaluate_one: image dimensions must be even");

  const DescriptionPair desc =
      use_generator ? generator_infer(bundle.gen, img) : polyphase_split(img);
  const CodecConfig cc{qf};
  const Bitstream stream_a = jpeg_encode(desc.a, cc);
  const Bitstream stream_b = jpeg_encode(desc.b, cc);
  const Image dec_a = jpeg_decode(stream_a);
  const Image dec_b = jpeg_decode(stream_b);

  const Image side_a = recon_infer(bundle.recon_a, dec_a);
  const Image side_b = recon_infer(bundle.recon_b, dec_b);
  const Image central = recon_infer(bundle.recon_c, dec_a, dec_b);

  ImageEval ev;
  ev.bpp_a = bits_per_pixel({&stream_a}, img.height, img.width);
  ev.bpp_b = bits_per_pixel({&stream_b}, img.height, img.width);
  ev.psnr_a = psnr(side_a, img);
  ev.ssim_a = ssim(side_a, img, ssim_cfg);
  ev.psnr_b = psnr(side_b, img);
  ev.ssim_b = ssim(side_b, img, ssim_cfg);
  ev.psnr_c = psnr(central, img);
  ev.ssim_c = ssim(central, img, ssim_cfg);
  return ev;
}

namespace {

RDPoint point_from_eval(const std::string& method, const std::string& id, int qf,
                        const ImageEval& ev) {
  RDPoint p;
  p.method = method;
  p.image = id;
  p.qf = qf;
  p.bpp_side = 0.5 * (ev.bpp_a + ev.bpp_b);
  p.bpp_central = ev.bpp_a + ev.bpp_b;
  p.psnr_side = 0.5 * (ev.psnr_a + ev.psnr_b);
  p.ssim_side = 0.5 * (ev.ssim_a + ev.ssim_b);
  p.psnr_central = ev.psnr_c;
  p.ssim_central = ev.ssim_c;
  return p;
}

std::vector<RDPoint> evaluate_corpus(const ModelBundle& bundle, const std::vector<Image>& images,
                                     const std::vector<std::string>& ids,
                                     const std::vector<int>& qf_list, bool use_generator,
                                     const std::string& method, int jobs) {
  if (images.empty()) throw std::invalid_argument("evaluate: empty image list");
  if (images.size() != ids.size()) throw std::invalid_argument("evaluate: image/id count mismatch");
  for (int qf : qf_list) {
    if (qf < 1 || qf > 100) throw std::invalid_argument("evaluate: qf must be in [1,100]");
  }

  // one task per image; results merged by index so the worker count never
  // affects the output
  std::vector<std::vector<RDPoint>> per_image(images.size());
  auto run_image = [&](size_t i) {
    std::vector<RDPoint> rows;
    rows.reserve(qf_list.size());
    for (int qf : qf_list) {
      rows.push_back(point_from_eval(method, ids[i], qf, evaluate_one(bundle, images[i], qf, use_generator)));
    }
    per_image[i] = std::move(rows);
  };
  if (jobs <= 1 || images.size() == 1) {
    for (size_t i = 0; i < images.size(); ++i) run_image(i);
  } else {
    std::vector<std::future<void>> futures;
    futures.reserve(images.size());
    size_t next = 0;
    const int pool = std::min<int>(jobs, static_cast<int>(images.size()));
    std::atomic<size_t> cursor{0};
    for (int t = 0; t < pool; ++t) {
      futures.push_back(std::async(std::launch::async, [&]() {
        while (true) {
          const size_t i = cursor.fetch_add(1);
          if (i >= images.size()) return;
          run_image(i);
        }
      }));
    }
    for (auto& f : futures) f.get();
    (void)next;
  }

  std::vector<RDPoint> rows;
  for (const auto& r : per_image) rows.insert(rows.end(), r.begin(), r.end());

  // corpus means per qf
  for (size_t qi = 0; qi < qf_list.size(); ++qi) {
    RDPoint mean;
    mean.method = method;
    mean.image = "mean";
    mean.qf = qf_list[qi];
    for (const auto& r : per_image) {
      const RDPoint& p = r[qi];
      mean.bpp_side += p.bpp_side;
      mean.bpp_central += p.bpp_central;
      mean.psnr_side += p.psnr_side;
      mean.ssim_side += p.ssim_side;
      mean.psnr_central += p.psnr_central;
      mean.ssim_central += p.ssim_central;
    }
    const double inv = 1.0 / static_cast<double>(per_image.size());
    mean.bpp_side *= inv;
    mean.bpp_central *= inv;
    mean.psnr_side *= inv;
    mean.ssim_side *= inv;
    mean.psnr_central *= inv;
    mean.ssim_central *= inv;
    rows.push_back(std::move(mean));
  }
  return rows;
}

}  // namespace

std::vector<RDPoint> evaluate_model(const ModelBundle& bundle, const std::vector<Image>& images,
                                    const std::vector<std::string>& ids,
                                    const std::vector<int>& qf_list, int jobs) {
  return evaluate_corpus(bundle, images, ids, qf_list, true, "ours", jobs);
}

std::vector<RDPoint> evaluate_ours_base(const ModelBundle& bundle, const std::vector<Image>& images,
                                        const std::vector<std::string>& ids,
                                        const std::vector<int>& qf_list, int jobs) {
  return evaluate_corpus(bundle, images, ids, qf_list, false, "ours-base", jobs);
}

std::vector<int> default_qf_grid() { return {2, 6, 10, 20, 40}; }
std::vector<int> default_qf_grid_base() { return {2, 3, 4, 10, 50}; }

std::string caption_report(const RDPoint& p) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%.3f/%.3f/%.3f(s) and %.3f/%.3f/%.3f(c)", p.psnr_side,
                p.ssim_side, p.bpp_side, p.psnr_central, p.ssim_central, p.bpp_central);
  return buf;
}

// ---------------------------------------------------------------------------
// Channel simulation
// ---------------------------------------------------------------------------

namespace {

void check_scenario(double pa, double pb) {
  if (pa < 0.0 || pa > 1.0 || pb < 0.0 || pb > 1.0) {
    throw std::invalid_argument("channel simulation: loss probabilities must be in [0,1]");
  }
}

}  // namespace

ChannelReport enumerate_channels(const ModelBundle& bundle, const Image& img, int qf,
                                 double p_loss_a, double p_loss_b, bool use_generator) {
  check_scenario(p_loss_a, p_loss_b);
  const ImageEval ev = evaluate_one(bundle, img, qf, use_generator);
  ChannelReport rep;
  rep.outcomes = ev;
  rep.p_both = (1.0 - p_loss_a) * (1.0 - p_loss_b);
  rep.p_a_only = (1.0 - p_loss_a) * p_loss_b;
  rep.p_b_only = p_loss_a * (1.0 - p_loss_b);
  rep.outage_probability = p_loss_a * p_loss_b;
  const double received = rep.p_both + rep.p_a_only + rep.p_b_only;
  if (received > 0.0) {
    double psnr_mean = 0.0, ssim_mean = 0.0;
    if (rep.p_both > 0.0) {
      psnr_mean += (rep.p_both / received) * ev.psnr_c;
      ssim_mean += (rep.p_both / received) * ev.ssim_c;
    }
    if (rep.p_a_only > 0.0) {
      psnr_mean += (rep.p_a_only / received) * ev.psnr_a;
      ssim_mean += (rep.p_a_only / received) * ev.ssim_a;
    }
    if (rep.p_b_only > 0.0) {
      psnr_mean += (rep.p_b_only / received) * ev.psnr_b;
      ssim_mean += (rep.p_b_only / received) * ev.ssim_b;
    }
    rep.expected_psnr = psnr_mean;
    rep.expected_ssim = ssim_mean;
  } else {
    rep.expected_psnr = std::numeric_limits<double>::quiet_NaN();
    rep.expected_ssim = std::numeric_limits<double>::quiet_NaN();
  }
  return rep;
}

ChannelReport simulate_channels(const ModelBundle& bundle, const Image& img, int qf,
                                const ChannelScenario& scenario, bool use_generator) {
  check_scenario(scenario.p_loss_a, scenario.p_loss_b);
  if (scenario.trials < 1) throw std::invalid_argument("simulate_channels: trials must be >= 1");
  const ImageEval ev = evaluate_one(bundle, img, qf, use_generator);

  std::mt19937_64 rng(mix_seed(scenario.seed, 0xc4a22e1));
  auto coin = [&rng](double p) {
    return (static_cast<double>(rng() >> 11) * 0x1.0p-53) < p;  // true = lost
  };

  long both = 0, a_only = 0, b_only = 0, outage = 0;
  for (long t = 0; t < scenario.trials; ++t) {
    const bool lost_a = coin(scenario.p_loss_a);
    const bool lost_b = coin(scenario.p_loss_b);
    if (!lost_a && !lost_b) {
      ++both;
    } else if (!lost_a) {
      ++a_only;
    } else if (!lost_b) {
      ++b_only;
    } else {
      ++outage;
    }
  }

  ChannelReport rep;
  rep.outcomes = ev;
  const double inv = 1.0 / static_cast<double>(scenario.trials);
  rep.p_both = both * inv;
  rep.p_a_only = a_only * inv;
  rep.p_b_only = b_only * inv;
  rep.outage_probability = outage * inv;
  const long received = both + a_only + b_only;
  if (received > 0) {
    // count-weighted mean; zero-count outcomes contribute nothing (their
    // quality may be the infinite lossless sentinel)
    const double r = static_cast<double>(received);
    double psnr_mean = 0.0, ssim_mean = 0.0;
    if (both) {
      psnr_mean += (both / r) * ev.psnr_c;
      ssim_mean += (both / r) * ev.ssim_c;
    }
    if (a_only) {
      psnr_mean += (a_only / r) * ev.psnr_a;
      ssim_mean += (a_only / r) * ev.ssim_a;
    }
    if (b_only) {
      psnr_mean += (b_only / r) * ev.psnr_b;
      ssim_mean += (b_only / r) * ev.ssim_b;
    }
    rep.expected_psnr = psnr_mean;
    rep.expected_ssim = ssim_mean;
  } else {
    rep.expected_psnr = std::numeric_limits<double>::quiet_NaN();
    rep.expected_ssim = std::numeric_limits<double>::quiet_NaN();
  }
  return rep;
}

// ---------------------------------------------------------------------------
// CSV / SVG export
// ---------------------------------------------------------------------------

const char* const kRdCsvHeader =
    "method,image,qf,bpp_side,bpp_central,psnr_side,ssim_side,psnr_central,ssim_central";

void export_rd(const std::vector<RDPoint>& points, const std::string& path) {
  if (points.empty()) throw std::invalid_argument("export_rd: no points");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_rd: cannot open " + path);
  out << kRdCsvHeader << '\n';
  char buf[256];
  for (const RDPoint& p : points) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f", p.method.c_str(),
                  p.image.c_str(), p.qf, p.bpp_side, p.bpp_central, p.psnr_side, p.ssim_side,
                  p.psnr_central, p.ssim_central);
    out << buf << '\n';
  }
  if (!out) throw std::runtime_error("export_rd: write failed: " + path);
}

std::vector<RDPoint> import_rd(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("import_rd: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != kRdCsvHeader) {
    throw std::runtime_error("import_rd: unexpected CSV header in " + path);
  }
  std::vector<RDPoint> points;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    RDPoint p;
    auto next = [&]() {
      if (!std::getline(ss, field, ',')) throw std::runtime_error("import_rd: malformed row: " + line);
      return field;
    };
    p.method = next();
    p.image = next();
    p.qf = std::stoi(next());
    p.bpp_side = std::stod(next());
    p.bpp_central = std::stod(next());
    p.psnr_side = std::stod(next());
    p.ssim_side = std::stod(next());
    p.psnr_central = std::stod(next());
    p.ssim_central = std::stod(next());
    points.push_back(std::move(p));
  }
  return points;
}

namespace {

struct Series {
  std::string method;
  std::vector<double> x, y;
};

const char* kSeriesColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

void write_svg_panel(const std::string& path, const std::string& title, const std::string& x_label,
                     const std::string& y_label, const std::vector<Series>& series) {
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const Series& s : series) {
    for (double v : s.x) {
      xmin = std::min(xmin, v);
      xmax = std::max(xmax, v);
    }
    for (double v : s.y) {
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  }
  if (xmax <= xmin) xmax = xmin + 1.0;
  if (ymax <= ymin) ymax = ymin + 1.0;
  const double xpad = 0.05 * (xmax - xmin), ypad = 0.08 * (ymax - ymin);
  xmin -= xpad;
  xmax += xpad;
  ymin -= ypad;
  ymax += ypad;

  const int W = 640, H = 480, ML = 70, MR = 20, MT = 40, MB = 55;
  auto px = [&](double v) { return ML + (v - xmin) / (xmax - xmin) * (W - ML - MR); };
  auto py = [&](double v) { return H - MB - (v - ymin) / (ymax - ymin) * (H - MT - MB); };

  std::ofstream out(path);
  if (!out) throw std::runtime_error("plot_rd: cannot open " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title
      << "</text>\n";
  // axes
  out << "<rect x=\"" << ML << "\" y=\"" << MT << "\" width=\"" << W - ML - MR << "\" height=\""
      << H - MT - MB << "\" fill=\"none\" stroke=\"black\"/>\n";
  char buf[160];
  for (int i = 0; i <= 5; ++i) {
    const double xv = xmin + (xmax - xmin) * i / 5.0;
    const double yv = ymin + (ymax - ymin) * i / 5.0;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.1f\" y=\"%d\" text-anchor=\"middle\" font-size=\"11\">%.3f</text>\n",
                  px(xv), H - MB + 18, xv);
    out << buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%d\" y=\"%.1f\" text-anchor=\"end\" font-size=\"11\">%.3f</text>\n",
                  ML - 6, py(yv) + 4, yv);
    out << buf;
  }
  out << "<text x=\"" << W / 2 << "\" y=\"" << H - 12
      << "\" text-anchor=\"middle\" font-size=\"13\">" << x_label << "</text>\n";
  out << "<text x=\"16\" y=\"" << H / 2 << "\" text-anchor=\"middle\" font-size=\"13\" "
      << "transform=\"rotate(-90 16 " << H / 2 << ")\">" << y_label << "</text>\n";
  // series (points in input order)
  for (size_t si = 0; si < series.size(); ++si) {
    const Series& s = series[si];
    const char* color = kSeriesColors[si % 6];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (size_t i = 0; i < s.x.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", px(s.x[i]), py(s.y[i]));
      out << buf;
    }
    out << "\"/>\n";
    for (size_t i = 0; i < s.x.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\"/>\n",
                    px(s.x[i]), py(s.y[i]), color);
      out << buf;
    }
    std::snprintf(buf, sizeof(buf),
                  "<rect x=\"%d\" y=\"%zu\" width=\"14\" height=\"3\" fill=\"%s\"/>"
                  "<text x=\"%d\" y=\"%zu\" font-size=\"12\">%s</text>\n",
                  ML + 8, MT + 10 + si * 18, color, ML + 26, MT + 15 + si * 18, s.method.c_str());
    out << buf;
  }
  out << "</svg>\n";
}

}  // namespace

std::vector<std::string> plot_rd(const std::vector<RDPoint>& points, const std::string& prefix) {
  if (points.empty()) throw std::invalid_argument("plot_rd: no points");

  struct Panel {
    const char* suffix;
    const char* title;
    bool central;
    bool use_psnr;
  };
  const Panel panels[] = {
      {"_psnr_side.svg", "Side reconstruction PSNR", false, true},
      {"_psnr_central.svg", "Central reconstruction PSNR", true, true},
      {"_ssim_side.svg", "Side reconstruction SSIM", false, false},
      {"_ssim_central.svg", "Central reconstruction SSIM", true, false},
  };

  std::vector<std::string> written;
  for (const Panel& panel : panels) {
    // group corpus-mean rows (fall back to all rows when none are means)
    std::vector<Series> series;
    auto row_of = [&](const std::string& method) -> Series& {
      for (Series& s : series)
        if (s.method == method) return s;
      series.push_back({method, {}, {}});
      return series.back();
    };
    bool has_mean = false;
    for (const RDPoint& p : points)
      if (p.image == "mean") has_mean = true;
    for (const RDPoint& p : points) {
      if (has_mean && p.image != "mean") continue;
      Series& s = row_of(p.method);
      s.x.push_back(panel.central ? p.bpp_central : p.bpp_side);
      s.y.push_back(panel.use_psnr ? (panel.central ? p.psnr_central : p.psnr_side)
                                   : (panel.central ? p.ssim_central : p.ssim_side));
    }
    const std::string path = prefix + panel.suffix;
    write_svg_panel(path, panel.title, panel.central ? "bpp (central)" : "bpp (side)",
                    panel.use_psnr ? "PSNR [dB]" : "SSIM", series);
    written.push_back(path);
  }
  return written;
}

}  // namespace mdc
