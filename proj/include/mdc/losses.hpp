#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mdc/image.hpp"
#include "mdc/imaging.hpp"

namespace mdc {

struct LossConfig {
  double kappa1 = 5e-3;  // lower clip of the distance-term weight
  double kappa2 = 5e-2;  // upper clip
  SsimConfig ssim;
};

// A composite loss with its named components. total is the sum of terms.
struct LossValue {
  double total = 0.0;
  std::vector<std::pair<std::string, double>> terms;

  double term(const std::string& name) const;
};

// ---------------------------------------------------------------------------
// Elementary losses. Each *_grad variant also fills the gradient with respect
// to the FIRST image argument (the L1 subgradient at a kink is taken as 0).
// For the L1-based losses the gradient with respect to the second argument is
// the negation; SSIM is symmetric, so swap the arguments instead.
// ---------------------------------------------------------------------------

// Negative mean per-window SSIM, so minimizing increases similarity.
double ssim_loss(const Image& x, const Image& y, const SsimConfig& cfg = {});
double ssim_loss_grad(const Image& x, const Image& y, const SsimConfig& cfg, Image& grad_x);

// Mean absolute difference.
double content_loss(const Image& x, const Image& y);
double content_loss_grad(const Image& x, const Image& y, Image& grad_x);

// Negated mean absolute difference between the two descriptions; minimizing
// pushes them apart.
double distance_loss(const Image& a, const Image& b);
double distance_loss_grad(const Image& a, const Image& b, Image& grad_a);

// Mean absolute mismatch of the 8-neighborhood pixel differences. Border
// pixels sum only the neighbors that exist.
double gradient_difference_loss(const Image& x, const Image& y);
double gradient_difference_loss_grad(const Image& x, const Image& y, Image& grad_x);

// Distance-term weight clip(0.2/QF, kappa1, kappa2).
double beta_for_qf(int qf, const LossConfig& cfg = {});

// ---------------------------------------------------------------------------
// Composite training objectives (values with named terms; the training loop
// assembles the gradients from the elementary pieces above).
// ---------------------------------------------------------------------------

// Generator objective: SSIM of each up-sampled description against the source
// plus the weighted description distance.
LossValue mdgn_loss(const DescriptionPair& pair, const Image& source, int qf,
                    const LossConfig& cfg = {});

// Reconstruction objective: content + gradient-difference for the two side
// outputs and the central output against the source.
LossValue mdrn_loss(const Image& source, const Image& out_a, const Image& out_b,
                    const Image& out_c);

// Virtual-codec objective: content + gradient-difference between each virtual
// output and its reconstruction target (targets are constants).
LossValue mdvcn_loss(const Image& target_a, const Image& target_b, const Image& target_c,
                     const Image& virt_a, const Image& virt_b, const Image& virt_c);

}  // namespace mdc
