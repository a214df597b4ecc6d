// Convolution primitives and the three model families. All arithmetic is in
// double precision; loops are ordered so every output element is accumulated
// in a fixed order (results are reproducible regardless of thread count).

#include "mdc/networks.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include <json.hpp>

namespace mdc {

FeatureMap feature_from_image(const Image& img) {
  FeatureMap f(1, img.height, img.width);
  f.v = img.data;
  return f;
}

FeatureMap feature_from_pair(const Image& a, const Image& b) {
  require_same_size(a, b, "feature_from_pair");
  FeatureMap f(2, a.height, a.width);
  std::copy(a.data.begin(), a.data.end(), f.v.begin());
  std::copy(b.data.begin(), b.data.end(), f.v.begin() + a.data.size());
  return f;
}

Image image_from_feature(const FeatureMap& f) {
  if (f.channels != 1) throw std::invalid_argument("image_from_feature: expected 1 channel");
  Image img(f.height, f.width);
  img.data = f.v;
  return img;
}

namespace {

inline int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }
inline int ceil_div(int a, int b) { return a >= 0 ? (a + b - 1) / b : -((-a) / b); }

// Fixed-order 4-way unrolled dot product; b is read with the given stride.
inline double dot_strided(const double* a, const double* b, int n, int bstride) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  int i = 0;
  if (bstride == 1) {
    for (; i + 4 <= n; i += 4) {
      s0 += a[i] * b[i];
      s1 += a[i + 1] * b[i + 1];
      s2 += a[i + 2] * b[i + 2];
      s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
  } else {
    const double* bp = b;
    for (; i + 4 <= n; i += 4, bp += 4 * bstride) {
      s0 += a[i] * bp[0];
      s1 += a[i + 1] * bp[bstride];
      s2 += a[i + 2] * bp[2 * bstride];
      s3 += a[i + 3] * bp[3 * bstride];
    }
    for (; i < n; ++i, bp += bstride) s0 += a[i] * bp[0];
  }
  return (s0 + s1) + (s2 + s3);
}

inline size_t widx(const ConvSpec& s, int co, int ci, int ky, int kx) {
  return ((static_cast<size_t>(co) * s.c_in + ci) * s.kernel + ky) * s.kernel + kx;
}

FeatureMap conv_fwd(const ConvLayer& L, const FeatureMap& in) {
  const int k = L.spec.kernel, s = L.spec.stride, p = k / 2;
  const int H = in.height, W = in.width;
  if (s == 2 && (H % 2 || W % 2)) {
    throw std::invalid_argument("conv: stride-2 layer requires even input dimensions");
  }
  const int OH = (s == 1) ? H : H / 2;
  const int OW = (s == 1) ? W : W / 2;
  FeatureMap out(L.spec.c_out, OH, OW);
  const size_t plane = static_cast<size_t>(OH) * OW;
#pragma omp parallel for schedule(static)
  for (int co = 0; co < L.spec.c_out; ++co) {
    double* oc = out.channel(co);
    std::fill(oc, oc + plane, L.b[co]);
    for (int ci = 0; ci < L.spec.c_in; ++ci) {
      const double* icn = in.channel(ci);
      for (int ky = 0; ky < k; ++ky) {
        const int oy_lo = std::max(0, ceil_div(p - ky, s));
        const int oy_hi = std::min(OH - 1, floor_div(H - 1 + p - ky, s));
        for (int kx = 0; kx < k; ++kx) {
          const double wv = L.w[widx(L.spec, co, ci, ky, kx)];
          const int ox_lo = std::max(0, ceil_div(p - kx, s));
          const int ox_hi = std::min(OW - 1, floor_div(W - 1 + p - kx, s));
          const int n = ox_hi - ox_lo + 1;
          if (n <= 0) continue;
          for (int oy = oy_lo; oy <= oy_hi; ++oy) {
            const int iy = oy * s + ky - p;
            double* orow = oc + static_cast<size_t>(oy) * OW + ox_lo;
            const double* irow = icn + static_cast<size_t>(iy) * W + (ox_lo * s + kx - p);
            if (s == 1) {
              for (int j = 0; j < n; ++j) orow[j] += wv * irow[j];
            } else {
              for (int j = 0; j < n; ++j) orow[j] += wv * irow[2 * j];
            }
          }
        }
      }
    }
    if (L.spec.act == Act::Relu) {
      for (size_t i = 0; i < plane; ++i) oc[i] = oc[i] > 0.0 ? oc[i] : 0.0;
    }
  }
  return out;
}

FeatureMap deconv_fwd(const ConvLayer& L, const FeatureMap& in) {
  const int k = L.spec.kernel, p = k / 2;
  const int H = in.height, W = in.width;
  const int OH = 2 * H, OW = 2 * W;
  FeatureMap out(L.spec.c_out, OH, OW);
  const size_t plane = static_cast<size_t>(OH) * OW;
#pragma omp parallel for schedule(static)
  for (int co = 0; co < L.spec.c_out; ++co) {
    double* oc = out.channel(co);
    std::fill(oc, oc + plane, L.b[co]);
    for (int ci = 0; ci < L.spec.c_in; ++ci) {
      const double* icn = in.channel(ci);
      for (int ky = 0; ky < k; ++ky) {
        const int iy_lo = std::max(0, ceil_div(p - ky, 2));
        const int iy_hi = std::min(H - 1, floor_div(OH - 1 + p - ky, 2));
        for (int kx = 0; kx < k; ++kx) {
          const double wv = L.w[widx(L.spec, co, ci, ky, kx)];
          const int ix_lo = std::max(0, ceil_div(p - kx, 2));
          const int ix_hi = std::min(W - 1, floor_div(OW - 1 + p - kx, 2));
          const int n = ix_hi - ix_lo + 1;
          if (n <= 0) continue;
          for (int iy = iy_lo; iy <= iy_hi; ++iy) {
            const int oy = 2 * iy + ky - p;
            const double* irow = icn + static_cast<size_t>(iy) * W + ix_lo;
            double* orow = oc + static_cast<size_t>(oy) * OW + (2 * ix_lo + kx - p);
            for (int j = 0; j < n; ++j) orow[2 * j] += wv * irow[j];
          }
        }
      }
    }
    if (L.spec.act == Act::Relu) {
      for (size_t i = 0; i < plane; ++i) oc[i] = oc[i] > 0.0 ? oc[i] : 0.0;
    }
  }
  return out;
}

FeatureMap conv_bwd_input(const ConvLayer& L, const FeatureMap& in_shape, const FeatureMap& dpre) {
  const int k = L.spec.kernel, s = L.spec.stride, p = k / 2;
  const int H = in_shape.height, W = in_shape.width;
  const int OH = dpre.height, OW = dpre.width;
  FeatureMap din(L.spec.c_in, H, W);
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < L.spec.c_in; ++ci) {
    double* dic = din.channel(ci);
    for (int co = 0; co < L.spec.c_out; ++co) {
      const double* dc = dpre.channel(co);
      for (int ky = 0; ky < k; ++ky) {
        const int oy_lo = std::max(0, ceil_div(p - ky, s));
        const int oy_hi = std::min(OH - 1, floor_div(H - 1 + p - ky, s));
        for (int kx = 0; kx < k; ++kx) {
          const double wv = L.w[widx(L.spec, co, ci, ky, kx)];
          const int ox_lo = std::max(0, ceil_div(p - kx, s));
          const int ox_hi = std::min(OW - 1, floor_div(W - 1 + p - kx, s));
          const int n = ox_hi - ox_lo + 1;
          if (n <= 0) continue;
          for (int oy = oy_lo; oy <= oy_hi; ++oy) {
            const int iy = oy * s + ky - p;
            const double* drow = dc + static_cast<size_t>(oy) * OW + ox_lo;
            double* trow = dic + static_cast<size_t>(iy) * W + (ox_lo * s + kx - p);
            if (s == 1) {
              for (int j = 0; j < n; ++j) trow[j] += wv * drow[j];
            } else {
              for (int j = 0; j < n; ++j) trow[2 * j] += wv * drow[j];
            }
          }
        }
      }
    }
  }
  return din;
}

FeatureMap deconv_bwd_input(const ConvLayer& L, const FeatureMap& in_shape, const FeatureMap& dpre) {
  const int k = L.spec.kernel, p = k / 2;
  const int H = in_shape.height, W = in_shape.width;
  const int OH = dpre.height, OW = dpre.width;
  FeatureMap din(L.spec.c_in, H, W);
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < L.spec.c_in; ++ci) {
    double* dic = din.channel(ci);
    for (int co = 0; co < L.spec.c_out; ++co) {
      const double* dc = dpre.channel(co);
      for (int ky = 0; ky < k; ++ky) {
        const int iy_lo = std::max(0, ceil_div(p - ky, 2));
        const int iy_hi = std::min(H - 1, floor_div(OH - 1 + p - ky, 2));
        for (int kx = 0; kx < k; ++kx) {
          const double wv = L.w[widx(L.spec, co, ci, ky, kx)];
          const int ix_lo = std::max(0, ceil_div(p - kx, 2));
          const int ix_hi = std::min(W - 1, floor_div(OW - 1 + p - kx, 2));
          const int n = ix_hi - ix_lo + 1;
          if (n <= 0) continue;
          for (int iy = iy_lo; iy <= iy_hi; ++iy) {
            const int oy = 2 * iy + ky - p;
            const double* drow = dc + static_cast<size_t>(oy) * OW + (2 * ix_lo + kx - p);
            double* trow = dic + static_cast<size_t>(iy) * W + ix_lo;
            for (int j = 0; j < n; ++j) trow[j] += wv * drow[2 * j];
          }
        }
      }
    }
  }
  return din;
}

void conv_bwd_weights(const ConvLayer& L, const FeatureMap& in, const FeatureMap& dpre,
                      LayerGrads& g) {
  const int k = L.spec.kernel, s = L.spec.stride, p = k / 2;
  const int H = in.height, W = in.width;
  const int OH = dpre.height, OW = dpre.width;
#pragma omp parallel for schedule(static)
  for (int co = 0; co < L.spec.c_out; ++co) {
    const double* dc = dpre.channel(co);
    double bias_acc = 0.0;
    for (size_t i = 0; i < static_cast<size_t>(OH) * OW; ++i) bias_acc += dc[i];
    g.b[co] += bias_acc;
    for (int ci = 0; ci < L.spec.c_in; ++ci) {
      const double* icn = in.channel(ci);
      for (int ky = 0; ky < k; ++ky) {
        const int oy_lo = std::max(0, ceil_div(p - ky, s));
        const int oy_hi = std::min(OH - 1, floor_div(H - 1 + p - ky, s));
        for (int kx = 0; kx < k; ++kx) {
          const int ox_lo = std::max(0, ceil_div(p - kx, s));
          const int ox_hi = std::min(OW - 1, floor_div(W - 1 + p - kx, s));
          const int n = ox_hi - ox_lo + 1;
          if (n <= 0) continue;
          double acc = 0.0;
          for (int oy = oy_lo; oy <= oy_hi; ++oy) {
            const int iy = oy * s + ky - p;
            const double* drow = dc + static_cast<size_t>(oy) * OW + ox_lo;
            const double* irow = icn + static_cast<size_t>(iy) * W + (ox_lo * s + kx - p);
            acc += dot_strided(drow, irow, n, s);
          }
          g.w[widx(L.spec, co, ci, ky, kx)] += acc;
        }
      }
    }
  }
}

void deconv_bwd_weights(const ConvLayer& L, const FeatureMap& in, const FeatureMap& dpre,
                        LayerGrads& g) {
  const int k = L.spec.kernel, p = k / 2;
  const int H = in.height, W = in.width;
  const int OH = dpre.height, OW = dpre.width;
#pragma omp parallel for schedule(static)
  for (int co = 0; co < L.spec.c_out; ++co) {
    const double* dc = dpre.channel(co);
    double bias_acc = 0.0;
    for (size_t i = 0; i < static_cast<size_t>(OH) * OW; ++i) bias_acc += dc[i];
    g.b[co] += bias_acc;
    for (int ci = 0; ci < L.spec.c_in; ++ci) {
      const double* icn = in.channel(ci);
      for (int ky = 0; ky < k; ++ky) {
        const int iy_lo = std::max(0, ceil_div(p - ky, 2));
        const int iy_hi = std::min(H - 1, floor_div(OH - 1 + p - ky, 2));
        for (int kx = 0; kx < k; ++kx) {
          const int ix_lo = std::max(0, ceil_div(p - kx, 2));
          const int ix_hi = std::min(W - 1, floor_div(OW - 1 + p - kx, 2));
          const int n = ix_hi - ix_lo + 1;
          if (n <= 0) continue;
          double acc = 0.0;
          for (int iy = iy_lo; iy <= iy_hi; ++iy) {
            const int oy = 2 * iy + ky - p;
            const double* irow = icn + static_cast<size_t>(iy) * W + ix_lo;
            const double* drow = dc + static_cast<size_t>(oy) * OW + (2 * ix_lo + kx - p);
            acc += dot_strided(irow, drow, n, 2);
          }
          g.w[widx(L.spec, co, ci, ky, kx)] += acc;
        }
      }
    }
  }
}

}  // namespace

ConvLayer make_layer(const ConvSpec& spec) {
  if (spec.kernel != 3 && spec.kernel != 9) throw std::invalid_argument("make_layer: kernel must be 3 or 9");
  if (spec.stride != 1 && spec.stride != 2) throw std::invalid_argument("make_layer: stride must be 1 or 2");
  if (spec.kind == LayerKind::Deconv && spec.stride != 2)
    throw std::invalid_argument("make_layer: transposed convolution uses stride 2");
  if (spec.c_in < 1 || spec.c_out < 1) throw std::invalid_argument("make_layer: bad channel count");
  ConvLayer layer;
  layer.spec = spec;
  layer.w.assign(static_cast<size_t>(spec.c_out) * spec.c_in * spec.kernel * spec.kernel, 0.0);
  layer.b.assign(static_cast<size_t>(spec.c_out), 0.0);
  return layer;
}

FeatureMap layer_forward(const ConvLayer& layer, const FeatureMap& in) {
  if (in.channels != layer.spec.c_in) {
    throw std::invalid_argument("layer_forward: expected " + std::to_string(layer.spec.c_in) +
                                " input channels, got " + std::to_string(in.channels));
  }
  return layer.spec.kind == LayerKind::Conv ? conv_fwd(layer, in) : deconv_fwd(layer, in);
}

NetGrads make_grads(const std::vector<ConvLayer>& layers) {
  NetGrads g(layers.size());
  for (size_t i = 0; i < layers.size(); ++i) {
    g[i].w.assign(layers[i].w.size(), 0.0);
    g[i].b.assign(layers[i].b.size(), 0.0);
  }
  return g;
}

void zero_grads(NetGrads& grads) {
  for (LayerGrads& g : grads) {
    std::fill(g.w.begin(), g.w.end(), 0.0);
    std::fill(g.b.begin(), g.b.end(), 0.0);
  }
}

void scale_grads(NetGrads& grads, double s) {
  for (LayerGrads& g : grads) {
    for (double& v : g.w) v *= s;
    for (double& v : g.b) v *= s;
  }
}

FeatureMap layer_backward(const ConvLayer& layer, const FeatureMap& in, const FeatureMap& out,
                          const FeatureMap& grad_out, LayerGrads* grads, bool need_input_grad) {
  if (grad_out.v.size() != out.v.size()) {
    throw std::invalid_argument("layer_backward: gradient shape mismatch");
  }
  FeatureMap dpre = grad_out;
  if (layer.spec.act == Act::Relu) {
    for (size_t i = 0; i < dpre.v.size(); ++i) {
      if (out.v[i] <= 0.0) dpre.v[i] = 0.0;
    }
  }
  if (grads) {
    if (layer.spec.kind == LayerKind::Conv) {
      conv_bwd_weights(layer, in, dpre, *grads);
    } else {
      deconv_bwd_weights(layer, in, dpre, *grads);
    }
  }
  if (!need_input_grad) return FeatureMap();
  return layer.spec.kind == LayerKind::Conv ? conv_bwd_input(layer, in, dpre)
                                            : deconv_bwd_input(layer, in, dpre);
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

namespace {

// Deterministic Box-Muller normals from a seeded engine (kept independent of
// the standard library's distribution implementations).
struct Gaussian {
  std::mt19937_64 rng;
  bool has_spare = false;
  double spare = 0.0;

  explicit Gaussian(uint64_t seed) : rng(seed) {}
  double uniform01() { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
  double next() {
    if (has_spare) {
      has_spare = false;
      return spare;
    }
    const double r = std::sqrt(-2.0 * std::log1p(-uniform01()));
    const double t = 2.0 * 3.14159265358979323846 * uniform01();
    spare = r * std::sin(t);
    has_spare = true;
    return r * std::cos(t);
  }
};

ConvLayer init_layer(const ConvSpec& spec, Gaussian& g) {
  ConvLayer layer = make_layer(spec);
  const double fan_in = static_cast<double>(spec.c_in) * spec.kernel * spec.kernel;
  const double stddev = std::sqrt((spec.act == Act::Relu ? 2.0 : 1.0) / fan_in);
  for (double& w : layer.w) w = stddev * g.next();
  return layer;
}

}  // namespace

GeneratorNet make_generator(int width, uint64_t seed) {
  if (width < 1) throw std::invalid_argument("make_generator: width must be >= 1");
  GeneratorNet net;
  net.width = width;
  Gaussian g(seed);
  auto add = [&](ConvSpec s) { net.layers.push_back(init_layer(s, g)); };
  add({9, 1, 1, width, LayerKind::Conv, Act::Relu});
  add({3, 2, width, width, LayerKind::Conv, Act::Relu});
  add({3, 1, width, width, LayerKind::Conv, Act::Relu});
  add({3, 1, width, width, LayerKind::Conv, Act::Relu});
  for (int branch = 0; branch < 2; ++branch) {
    add({3, 1, width, width, LayerKind::Conv, Act::Relu});
    add({3, 1, width, width, LayerKind::Conv, Act::Relu});
    add({3, 1, width, width, LayerKind::Conv, Act::Relu});
    add({9, 1, width, 1, LayerKind::Conv, Act::None});
  }
  return net;
}

ReconNet make_recon(int width, int in_channels, uint64_t seed) {
  if (width < 1) throw std::invalid_argument("make_recon: width must be >= 1");
  if (in_channels != 1 && in_channels != 2)
    throw std::invalid_argument("make_recon: in_channels must be 1 or 2");
  ReconNet net;
  net.width = width;
  net.in_channels = in_channels;
  Gaussian g(seed);
  auto add = [&](ConvSpec s) { net.layers.push_back(init_layer(s, g)); };
  add({9, 1, in_channels, width, LayerKind::Conv, Act::Relu});
  for (int i = 0; i < 6; ++i) add({3, 1, width, width, LayerKind::Conv, Act::Relu});
  add({9, 2, width, 1, LayerKind::Deconv, Act::None});
  return net;
}

// ---------------------------------------------------------------------------
// Generator forward / backward
// ---------------------------------------------------------------------------

DescriptionPair generator_forward(const GeneratorNet& net, const Image& img, GenTrace* trace) {
  if (img.height % 2 || img.width % 2) {
    throw std::invalid_argument("generator_forward: input dimensions must be even");
  }
  std::vector<FeatureMap> sh;
  sh.reserve(GeneratorNet::kSharedCount + 1);
  sh.push_back(feature_from_image(img));
  for (int i = 0; i < GeneratorNet::kSharedCount; ++i) {
    sh.push_back(layer_forward(net.layers[i], sh.back()));
  }
  std::vector<FeatureMap> ba, bb;
  ba.reserve(GeneratorNet::kBranchCount);
  bb.reserve(GeneratorNet::kBranchCount);
  for (int i = 0; i < GeneratorNet::kBranchCount; ++i) {
    const FeatureMap& in_a = i == 0 ? sh.back() : ba.back();
    ba.push_back(layer_forward(net.layers[GeneratorNet::kSharedCount + i], in_a));
    const FeatureMap& in_b = i == 0 ? sh.back() : bb.back();
    bb.push_back(layer_forward(
        net.layers[GeneratorNet::kSharedCount + GeneratorNet::kBranchCount + i], in_b));
  }
  DescriptionPair out{image_from_feature(ba.back()), image_from_feature(bb.back())};
  if (trace) {
    trace->shared = std::move(sh);
    trace->branch_a = std::move(ba);
    trace->branch_b = std::move(bb);
  }
  return out;
}

DescriptionPair generator_infer(const GeneratorNet& net, const Image& img) {
  DescriptionPair pair = generator_forward(net, img, nullptr);
  pair.a = clamp01(std::move(pair.a));
  pair.b = clamp01(std::move(pair.b));
  return pair;
}

void generator_backward(const GeneratorNet& net, const GenTrace& trace, const Image& grad_a,
                        const Image& grad_b, NetGrads& grads) {
  if (grads.size() != net.layers.size()) throw std::invalid_argument("generator_backward: grad buffer mismatch");
  const int S = GeneratorNet::kSharedCount;
  const int B = GeneratorNet::kBranchCount;
  auto branch_back = [&](const std::vector<FeatureMap>& outs, int base,
                         const Image& grad_img) -> FeatureMap {
    FeatureMap cur = feature_from_image(grad_img);
    for (int i = B - 1; i >= 0; --i) {
      const FeatureMap& in = i == 0 ? trace.shared.back() : outs[i - 1];
      cur = layer_backward(net.layers[base + i], in, outs[i], cur, &grads[base + i], true);
    }
    return cur;
  };
  FeatureMap da = branch_back(trace.branch_a, S, grad_a);
  FeatureMap db = branch_back(trace.branch_b, S + B, grad_b);
  for (size_t i = 0; i < da.v.size(); ++i) da.v[i] += db.v[i];
  FeatureMap cur = std::move(da);
  for (int i = S - 1; i >= 0; --i) {
    cur = layer_backward(net.layers[i], trace.shared[i], trace.shared[i + 1], cur, &grads[i], i > 0);
  }
}

// ---------------------------------------------------------------------------
// Reconstruction tower forward / backward
// ---------------------------------------------------------------------------

Image recon_forward(const ReconNet& net, const FeatureMap& in, ReconTrace* trace) {
  if (in.channels != net.in_channels) {
    throw std::invalid_argument("recon_forward: expected " + std::to_string(net.in_channels) +
                                " input channels");
  }
  std::vector<FeatureMap> io;
  io.reserve(net.layers.size() + 1);
  io.push_back(in);
  for (const ConvLayer& layer : net.layers) io.push_back(layer_forward(layer, io.back()));
  Image out = image_from_feature(io.back());
  if (trace) trace->io = std::move(io);
  return out;
}

Image recon_infer(const ReconNet& net, const Image& in) {
  return clamp01(recon_forward(net, feature_from_image(in), nullptr));
}

Image recon_infer(const ReconNet& net, const Image& a, const Image& b) {
  return clamp01(recon_forward(net, feature_from_pair(a, b), nullptr));
}

FeatureMap recon_backward(const ReconNet& net, const ReconTrace& trace, const Image& grad_out,
                          NetGrads* grads, bool need_input_grad) {
  if (grads && grads->size() != net.layers.size())
    throw std::invalid_argument("recon_backward: grad buffer mismatch");
  FeatureMap cur = feature_from_image(grad_out);
  for (int i = static_cast<int>(net.layers.size()) - 1; i >= 0; --i) {
    const bool need_in = need_input_grad || i > 0;
    cur = layer_backward(net.layers[i], trace.io[i], trace.io[i + 1], cur,
                         grads ? &(*grads)[i] : nullptr, need_in);
  }
  return cur;
}

// ---------------------------------------------------------------------------
// Bundle init and checkpoint archive
// ---------------------------------------------------------------------------

ModelBundle init_bundle(uint64_t seed, int width) {
  ModelBundle b;
  b.gen = make_generator(width, mix_seed(seed, 1));
  b.recon_a = make_recon(width, 1, mix_seed(seed, 2));
  b.recon_b = make_recon(width, 1, mix_seed(seed, 3));
  b.recon_c = make_recon(width, 2, mix_seed(seed, 4));
  b.virt_a = make_recon(width, 1, mix_seed(seed, 5));
  b.virt_b = make_recon(width, 1, mix_seed(seed, 6));
  b.virt_c = make_recon(width, 2, mix_seed(seed, 7));
  b.meta.seed = seed;
  b.meta.width = width;
  return b;
}

uint64_t params_fingerprint(const std::vector<ConvLayer>& layers) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const ConvLayer& l : layers) {
    const uint64_t hw = fnv1a64(l.w.data(), l.w.size() * sizeof(double));
    const uint64_t hb = fnv1a64(l.b.data(), l.b.size() * sizeof(double));
    h ^= hw + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    h ^= hb + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  }
  return h;
}

namespace {

constexpr char kMagic[8] = {'M', 'D', 'C', 'B', 'N', 'D', 'L', '1'};
constexpr uint32_t kFormatVersion = 1;

struct ByteWriter {
  std::vector<unsigned char> buf;
  void raw(const void* p, size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    buf.insert(buf.end(), b, b + n);
  }
  void u8(uint8_t v) { raw(&v, 1); }
  void u32(uint32_t v) { raw(&v, 4); }
  void u64(uint64_t v) { raw(&v, 8); }
  void i32(int32_t v) { raw(&v, 4); }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void doubles(const std::vector<double>& d) {
    u64(d.size());
    raw(d.data(), d.size() * sizeof(double));
  }
};

struct ByteReader {
  const unsigned char* p;
  size_t n;
  size_t pos = 0;
  void raw(void* out, size_t count) {
    if (pos + count > n) throw std::runtime_error("checkpoint: truncated file");
    std::memcpy(out, p + pos, count);
    pos += count;
  }
  uint8_t u8() { uint8_t v; raw(&v, 1); return v; }
  uint32_t u32() { uint32_t v; raw(&v, 4); return v; }
  uint64_t u64() { uint64_t v; raw(&v, 8); return v; }
  int32_t i32() { int32_t v; raw(&v, 4); return v; }
  std::string str() {
    const uint32_t len = u32();
    if (len > n - pos) throw std::runtime_error("checkpoint: truncated string");
    std::string s(reinterpret_cast<const char*>(p + pos), len);
    pos += len;
    return s;
  }
  std::vector<double> doubles() {
    const uint64_t count = u64();
    if (count * sizeof(double) > n - pos) throw std::runtime_error("checkpoint: truncated tensor");
    std::vector<double> d(count);
    raw(d.data(), count * sizeof(double));
    return d;
  }
};

void write_param_set(ByteWriter& w, const std::string& role, const std::vector<ConvLayer>& layers) {
  w.str(role);
  w.u32(static_cast<uint32_t>(layers.size()));
  for (const ConvLayer& l : layers) {
    w.u8(static_cast<uint8_t>(l.spec.kind));
    w.u8(static_cast<uint8_t>(l.spec.act));
    w.i32(l.spec.kernel);
    w.i32(l.spec.stride);
    w.i32(l.spec.c_in);
    w.i32(l.spec.c_out);
    w.doubles(l.w);
    w.doubles(l.b);
  }
}

std::vector<ConvLayer> read_param_set(ByteReader& r, const std::string& expect_role,
                                      size_t expect_layers) {
  const std::string role = r.str();
  if (role != expect_role) {
    throw std::runtime_error("checkpoint: expected parameter set '" + expect_role + "', found '" + role + "'");
  }
  const uint32_t count = r.u32();
  if (count != expect_layers) throw std::runtime_error("checkpoint: layer count mismatch for " + role);
  std::vector<ConvLayer> layers;
  layers.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    ConvSpec spec;
    spec.kind = static_cast<LayerKind>(r.u8());
    spec.act = static_cast<Act>(r.u8());
    spec.kernel = r.i32();
    spec.stride = r.i32();
    spec.c_in = r.i32();
    spec.c_out = r.i32();
    ConvLayer layer = make_layer(spec);
    layer.w = r.doubles();
    layer.b = r.doubles();
    if (layer.w.size() != static_cast<size_t>(spec.c_out) * spec.c_in * spec.kernel * spec.kernel ||
        layer.b.size() != static_cast<size_t>(spec.c_out)) {
      throw std::runtime_error("checkpoint: tensor shape disagrees with layer spec in " + role);
    }
    layers.push_back(std::move(layer));
  }
  return layers;
}

}  // namespace

void save_checkpoint(const ModelBundle& bundle, const std::string& path) {
  ByteWriter w;
  w.u32(kFormatVersion);
  nlohmann::json meta{{"format_version", bundle.meta.format_version},
                      {"qf", bundle.meta.qf},
                      {"seed", bundle.meta.seed},
                      {"width", bundle.meta.width},
                      {"alignment", bundle.meta.alignment},
                      {"algorithm", bundle.meta.algorithm},
                      {"steps_generator", bundle.meta.steps_generator},
                      {"steps_recon", bundle.meta.steps_recon},
                      {"steps_virtual", bundle.meta.steps_virtual}};
  w.str(meta.dump());
  w.u32(7);
  write_param_set(w, "generator", bundle.gen.layers);
  write_param_set(w, "recon_side_a", bundle.recon_a.layers);
  write_param_set(w, "recon_side_b", bundle.recon_b.layers);
  write_param_set(w, "recon_central", bundle.recon_c.layers);
  write_param_set(w, "virtual_side_a", bundle.virt_a.layers);
  write_param_set(w, "virtual_side_b", bundle.virt_b.layers);
  write_param_set(w, "virtual_central", bundle.virt_c.layers);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out.write(kMagic, sizeof(kMagic));
  out.write(reinterpret_cast<const char*>(w.buf.data()), static_cast<std::streamsize>(w.buf.size()));
  const uint64_t checksum = fnv1a64(w.buf.data(), w.buf.size());
  out.write(reinterpret_cast<const char*>(&checksum), sizeof(checksum));
  if (!out) throw std::runtime_error("save_checkpoint: write failed: " + path);
}

ModelBundle load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(kMagic) + 12 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("load_checkpoint: not a checkpoint file: " + path);
  }
  const size_t payload_len = bytes.size() - sizeof(kMagic) - sizeof(uint64_t);
  uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + sizeof(kMagic) + payload_len, sizeof(stored));
  if (stored != fnv1a64(bytes.data() + sizeof(kMagic), payload_len)) {
    throw std::runtime_error("load_checkpoint: checksum mismatch (corrupted file): " + path);
  }
  ByteReader r{bytes.data() + sizeof(kMagic), payload_len};
  const uint32_t version = r.u32();
  if (version != kFormatVersion) {
    throw std::runtime_error("load_checkpoint: unsupported format version " + std::to_string(version));
  }
  const nlohmann::json meta = nlohmann::json::parse(r.str());
  ModelBundle b;
  b.meta.format_version = meta.value("format_version", 1);
  b.meta.qf = meta.value("qf", 0);
  b.meta.seed = meta.value("seed", uint64_t{0});
  b.meta.width = meta.value("width", 128);
  b.meta.alignment = meta.value("alignment", std::string());
  b.meta.algorithm = meta.value("algorithm", std::string());
  b.meta.steps_generator = meta.value("steps_generator", 0L);
  b.meta.steps_recon = meta.value("steps_recon", 0L);
  b.meta.steps_virtual = meta.value("steps_virtual", 0L);
  if (r.u32() != 7) throw std::runtime_error("load_checkpoint: expected 7 parameter sets");

  const int width = b.meta.width;
  b.gen.width = width;
  b.gen.layers = read_param_set(r, "generator", 12);
  auto read_recon = [&](const char* role, int c_in) {
    ReconNet net;
    net.width = width;
    net.in_channels = c_in;
    net.layers = read_param_set(r, role, 8);
    return net;
  };
  b.recon_a = read_recon("recon_side_a", 1);
  b.recon_b = read_recon("recon_side_b", 1);
  b.recon_c = read_recon("recon_central", 2);
  b.virt_a = read_recon("virtual_side_a", 1);
  b.virt_b = read_recon("virtual_side_b", 1);
  b.virt_c = read_recon("virtual_central", 2);
  return b;
}

}  // namespace mdc
