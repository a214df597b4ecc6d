#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mdc/image.hpp"

namespace mdc {

// ---------------------------------------------------------------------------
// Minimal dense tensor for network activations, channel-major (c, h, w).
// ---------------------------------------------------------------------------

struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> v;

  FeatureMap() = default;
  FeatureMap(int c, int h, int w)
      : channels(c), height(h), width(w),
        v(static_cast<size_t>(c) * h * w, 0.0) {}

  double& at(int c, int y, int x) {
    return v[(static_cast<size_t>(c) * height + y) * width + x];
  }
  double at(int c, int y, int x) const {
    return v[(static_cast<size_t>(c) * height + y) * width + x];
  }
  double* channel(int c) { return &v[static_cast<size_t>(c) * height * width]; }
  const double* channel(int c) const { return &v[static_cast<size_t>(c) * height * width]; }
};

FeatureMap feature_from_image(const Image& img);
FeatureMap feature_from_pair(const Image& a, const Image& b);  // 2-channel stack
Image image_from_feature(const FeatureMap& f);                 // requires 1 channel

// ---------------------------------------------------------------------------
// Convolutional layers. "Same" zero padding (pad = kernel/2); stride-2
// convolution halves even dimensions; stride-2 transposed convolution doubles
// them (pad 4, output padding 1 for the 9x9 kernel).
// ---------------------------------------------------------------------------

enum class LayerKind : uint8_t { Conv = 0, Deconv = 1 };
enum class Act : uint8_t { Relu = 0, None = 1 };

struct ConvSpec {
  int kernel = 3;
  int stride = 1;
  int c_in = 1;
  int c_out = 1;
  LayerKind kind = LayerKind::Conv;
  Act act = Act::Relu;
};

struct ConvLayer {
  ConvSpec spec;
  std::vector<double> w;  // [c_out][c_in][k][k]
  std::vector<double> b;  // [c_out]
};

ConvLayer make_layer(const ConvSpec& spec);  // zero-initialized, validates the spec

FeatureMap layer_forward(const ConvLayer& layer, const FeatureMap& in);

// Per-layer gradient buffers, aligned with a layer list.
struct LayerGrads {
  std::vector<double> w;
  std::vector<double> b;
};
using NetGrads = std::vector<LayerGrads>;

NetGrads make_grads(const std::vector<ConvLayer>& layers);
void zero_grads(NetGrads& grads);
void scale_grads(NetGrads& grads, double s);

// Accumulates parameter gradients (if grads != nullptr) and returns the
// gradient with respect to the layer input (when need_input_grad).
// `out` must be the activation produced by layer_forward for `in`.
FeatureMap layer_backward(const ConvLayer& layer, const FeatureMap& in, const FeatureMap& out,
                          const FeatureMap& grad_out, LayerGrads* grads, bool need_input_grad);

// ---------------------------------------------------------------------------
// Description generator: a four-layer shared feature stack (stride 2 at the
// second layer) feeding two sibling branches that each emit one half-
// resolution description.
// ---------------------------------------------------------------------------

struct GeneratorNet {
  int width = 128;
  std::vector<ConvLayer> layers;  // [0..3] shared, [4..7] branch A, [8..11] branch B

  static constexpr int kSharedCount = 4;
  static constexpr int kBranchCount = 4;
  ConvLayer& shared(int i) { return layers[i]; }
  ConvLayer& branch_a(int i) { return layers[kSharedCount + i]; }
  ConvLayer& branch_b(int i) { return layers[kSharedCount + kBranchCount + i]; }
};

struct GenTrace {
  std::vector<FeatureMap> shared;    // [input, f1..f4]
  std::vector<FeatureMap> branch_a;  // [a5..a8]
  std::vector<FeatureMap> branch_b;  // [b5..b8]
};

// Raw forward (no clamping); trace may be null when no backward is needed.
DescriptionPair generator_forward(const GeneratorNet& net, const Image& img, GenTrace* trace);
// Inference boundary: forward + clamp to [0,1].
DescriptionPair generator_infer(const GeneratorNet& net, const Image& img);
// Accumulates parameter gradients for the given output gradients.
void generator_backward(const GeneratorNet& net, const GenTrace& trace, const Image& grad_a,
                        const Image& grad_b, NetGrads& grads);

// ---------------------------------------------------------------------------
// Reconstruction tower shared by the side (1 input), central (2 inputs) and
// their virtual-codec counterparts: seven convolutions plus one stride-2
// transposed convolution back to full resolution.
// ---------------------------------------------------------------------------

struct ReconNet {
  int width = 128;
  int in_channels = 1;
  std::vector<ConvLayer> layers;  // 8 layers
};

struct ReconTrace {
  std::vector<FeatureMap> io;  // [input, h1..h8]
};

Image recon_forward(const ReconNet& net, const FeatureMap& in, ReconTrace* trace);
Image recon_infer(const ReconNet& net, const Image& in);                   // clamped
Image recon_infer(const ReconNet& net, const Image& a, const Image& b);    // clamped, 2-ch
// Returns the gradient with respect to the input feature map.
FeatureMap recon_backward(const ReconNet& net, const ReconTrace& trace, const Image& grad_out,
                          NetGrads* grads, bool need_input_grad);

// ---------------------------------------------------------------------------
// Model bundle: generator, the three reconstruction networks and the three
// virtual-codec networks, plus run metadata.
// ---------------------------------------------------------------------------

struct BundleMeta {
  int format_version = 1;
  int qf = 0;
  uint64_t seed = 0;
  int width = 128;
  std::string alignment = "deconv_k9s2_pad4_outpad1";
  std::string algorithm;
  long steps_generator = 0;
  long steps_recon = 0;
  long steps_virtual = 0;
};

struct ModelBundle {
  GeneratorNet gen;
  ReconNet recon_a, recon_b, recon_c;  // side A, side B, central
  ReconNet virt_a, virt_b, virt_c;     // their virtual-codec counterparts
  BundleMeta meta;
};

GeneratorNet make_generator(int width, uint64_t seed);
ReconNet make_recon(int width, int in_channels, uint64_t seed);

// Deterministic fan-in-scaled initialization of all seven parameter sets.
ModelBundle init_bundle(uint64_t seed, int width = 128);

void save_checkpoint(const ModelBundle& bundle, const std::string& path);
ModelBundle load_checkpoint(const std::string& path);

// Fingerprint of a parameter list (tests use this to assert phase isolation).
uint64_t params_fingerprint(const std::vector<ConvLayer>& layers);

}  // namespace mdc
