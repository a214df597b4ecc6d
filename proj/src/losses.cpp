#include "mdc/losses.hpp"

#include <algorithm>
#include <cmath>

namespace mdc {

double LossValue::term(const std::string& name) const {
  for (const auto& [k, v] : terms)
    if (k == name) return v;
  throw std::invalid_argument("LossValue: no term named '" + name + "'");
}

namespace {

inline double sgn0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

double ssim_loss(const Image& x, const Image& y, const SsimConfig& cfg) {
  return -ssim(x, y, cfg);
}

double ssim_loss_grad(const Image& x, const Image& y, const SsimConfig& cfg, Image& grad_x) {
  const double value = -ssim(x, y, cfg);
  const int w = cfg.window;
  const int ny = x.height - w + 1;
  const int nx = x.width - w + 1;
  const double n = static_cast<double>(w) * w;
  const double window_count = static_cast<double>(ny) * nx;

  grad_x = Image(x.height, x.width);
  for (int wy = 0; wy < ny; ++wy) {
    for (int wx = 0; wx < nx; ++wx) {
      double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
      for (int dy = 0; dy < w; ++dy) {
        const double* px = &x.data[static_cast<size_t>(wy + dy) * x.width + wx];
        const double* py = &y.data[static_cast<size_t>(wy + dy) * y.width + wx];
        for (int dx = 0; dx < w; ++dx) {
          sx += px[dx];
          sy += py[dx];
          sxx += px[dx] * px[dx];
          syy += py[dx] * py[dx];
          sxy += px[dx] * py[dx];
        }
      }
      const double mux = sx / n;
      const double muy = sy / n;
      const double varx = sxx / n - mux * mux;
      const double vary = syy / n - muy * muy;
      const double cov = sxy / n - mux * muy;
      const double a1 = 2.0 * mux * muy + cfg.c1;
      const double a2 = 2.0 * cov + cfg.c2;
      const double b1 = mux * mux + muy * muy + cfg.c1;
      const double b2 = varx + vary + cfg.c2;
      // partials of the per-window SSIM with respect to its statistics
      const double d_mux = 2.0 * a2 * (muy * b1 - mux * a1) / (b1 * b1 * b2);
      const double d_varx = -a1 * a2 / (b1 * b2 * b2);
      const double d_cov = 2.0 * a1 / (b1 * b2);
      // chain to pixels; loss is the negated mean over windows
      const double scale = -1.0 / (window_count * n);
      for (int dy = 0; dy < w; ++dy) {
        const double* px = &x.data[static_cast<size_t>(wy + dy) * x.width + wx];
        const double* py = &y.data[static_cast<size_t>(wy + dy) * y.width + wx];
        double* g = &grad_x.data[static_cast<size_t>(wy + dy) * x.width + wx];
        for (int dx = 0; dx < w; ++dx) {
          g[dx] += scale * (d_mux + 2.0 * (px[dx] - mux) * d_varx + (py[dx] - muy) * d_cov);
        }
      }
    }
  }
  return value;
}

double content_loss(const Image& x, const Image& y) {
  require_same_size(x, y, "content_loss");
  double acc = 0.0;
  for (size_t i = 0; i < x.data.size(); ++i) acc += std::abs(x.data[i] - y.data[i]);
  return acc / static_cast<double>(x.pixel_count());
}

double content_loss_grad(const Image& x, const Image& y, Image& grad_x) {
  require_same_size(x, y, "content_loss");
  grad_x = Image(x.height, x.width);
  const double inv = 1.0 / static_cast<double>(x.pixel_count());
  double acc = 0.0;
  for (size_t i = 0; i < x.data.size(); ++i) {
    const double d = x.data[i] - y.data[i];
    acc += std::abs(d);
    grad_x.data[i] = sgn0(d) * inv;
  }
  return acc * inv;
}

double distance_loss(const Image& a, const Image& b) {
  require_same_size(a, b, "distance_loss");
  return -content_loss(a, b);
}

double distance_loss_grad(const Image& a, const Image& b, Image& grad_a) {
  const double v = -content_loss_grad(a, b, grad_a);
  for (double& g : grad_a.data) g = -g;
  return v;
}

namespace {

constexpr int kNeighborDy[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
constexpr int kNeighborDx[8] = {-1, 0, 1, -1, 1, -1, 0, 1};

}  // namespace

double gradient_difference_loss(const Image& x, const Image& y) {
  require_same_size(x, y, "gradient_difference_loss");
  double acc = 0.0;
  for (int i = 0; i < x.height; ++i) {
    for (int j = 0; j < x.width; ++j) {
      const double xc = x.at(i, j);
      const double yc = y.at(i, j);
      for (int s = 0; s < 8; ++s) {
        const int ni = i + kNeighborDy[s];
        const int nj = j + kNeighborDx[s];
        if (ni < 0 || ni >= x.height || nj < 0 || nj >= x.width) continue;
        acc += std::abs((xc - x.at(ni, nj)) - (yc - y.at(ni, nj)));
      }
    }
  }
  return acc / static_cast<double>(x.pixel_count());
}

double gradient_difference_loss_grad(const Image& x, const Image& y, Image& grad_x) {
  require_same_size(x, y, "gradient_difference_loss");
  grad_x = Image(x.height, x.width);
  const double inv = 1.0 / static_cast<double>(x.pixel_count());
  double acc = 0.0;
  for (int i = 0; i < x.height; ++i) {
    for (int j = 0; j < x.width; ++j) {
      const double xc = x.at(i, j);
      const double yc = y.at(i, j);
      for (int s = 0; s < 8; ++s) {
        const int ni = i + kNeighborDy[s];
        const int nj = j + kNeighborDx[s];
        if (ni < 0 || ni >= x.height || nj < 0 || nj >= x.width) continue;
        const double d = (xc - x.at(ni, nj)) - (yc - y.at(ni, nj));
        acc += std::abs(d);
        const double g = sgn0(d) * inv;
        grad_x.at(i, j) += g;
        grad_x.at(ni, nj) -= g;
      }
    }
  }
  return acc * inv;
}

double beta_for_qf(int qf, const LossConfig& cfg) {
  if (qf < 1) throw std::invalid_argument("beta_for_qf: QF must be >= 1, got " + std::to_string(qf));
  return std::clamp(0.2 / static_cast<double>(qf), cfg.kappa1, cfg.kappa2);
}

LossValue mdgn_loss(const DescriptionPair& pair, const Image& source, int qf,
                    const LossConfig& cfg) {
  require_same_size(pair.a, pair.b, "mdgn_loss");
  if (pair.a.height * 2 != source.height || pair.a.width * 2 != source.width) {
    throw std::invalid_argument("mdgn_loss: descriptions must be half the source resolution");
  }
  const double beta = beta_for_qf(qf, cfg);
  LossValue lv;
  lv.terms.emplace_back("ssim_a", ssim_loss(upsample2x_raw(pair.a), source, cfg.ssim));
  lv.terms.emplace_back("ssim_b", ssim_loss(upsample2x_raw(pair.b), source, cfg.ssim));
  lv.terms.emplace_back("distance", beta * distance_loss(pair.a, pair.b));
  for (const auto& [k, v] : lv.terms) lv.total += v;
  return lv;
}

namespace {

LossValue content_gd_triple(const Image& ref_a, const Image& ref_b, const Image& ref_c,
                            const Image& out_a, const Image& out_b, const Image& out_c) {
  LossValue lv;
  lv.terms.emplace_back("content_a", content_loss(ref_a, out_a));
  lv.terms.emplace_back("grad_diff_a", gradient_difference_loss(ref_a, out_a));
  lv.terms.emplace_back("content_b", content_loss(ref_b, out_b));
  lv.terms.emplace_back("grad_diff_b", gradient_difference_loss(ref_b, out_b));
  lv.terms.emplace_back("content_c", content_loss(ref_c, out_c));
  lv.terms.emplace_back("grad_diff_c", gradient_difference_loss(ref_c, out_c));
  for (const auto& [k, v] : lv.terms) lv.total += v;
  return lv;
}

}  // namespace

LossValue mdrn_loss(const Image& source, const Image& out_a, const Image& out_b,
                    const Image& out_c) {
  return content_gd_triple(source, source, source, out_a, out_b, out_c);
}

LossValue mdvcn_loss(const Image& target_a, const Image& target_b, const Image& target_c,
                     const Image& virt_a, const Image& virt_b, const Image& virt_c) {
  return content_gd_triple(target_a, target_b, target_c, virt_a, virt_b, virt_c);
}

}  // namespace mdc
