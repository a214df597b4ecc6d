#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mdc/imaging.hpp"
#include "mdc/losses.hpp"
#include "mdc/networks.hpp"

namespace mdc {

struct TrainingConfig {
  int iterations = 3;       // outer iterations (R for algorithm 1, T for algorithm 2)
  int epochs = 2;           // reconstruction / virtual epochs (p), or l for algorithm 2
  int epochs_generator = 0; // generator epochs q; 0 means "same as epochs"
  int batch = 8;            // m
  double lr0 = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  int qf = 10;
  uint64_t seed = 1;
  int width = 128;
  LossConfig loss;
  double mimic_warn_threshold = 0.25;  // algorithm 2: warn when the virtual nets track poorly
  double divergence_threshold = 1e8;   // batch losses beyond this count as diverged
  std::string diagnostic_checkpoint;   // written before the divergence guard aborts

  int generator_epochs() const { return epochs_generator > 0 ? epochs_generator : epochs; }
  void validate() const;
};

// Piecewise learning-rate decay: full rate until 3/5 of the total steps, half
// until 4/5, then a quarter.
double lr_at_step(long step, long total_steps, double lr0);

// ---------------------------------------------------------------------------
// Adam (bias-corrected) over a layer list.
// ---------------------------------------------------------------------------

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long t = 0;
  NetGrads m, v;
};

AdamState make_adam(const std::vector<ConvLayer>& layers, double beta1, double beta2);
void adam_step(std::vector<ConvLayer>& layers, const NetGrads& grads, AdamState& state, double lr);

// ---------------------------------------------------------------------------
// Training log: one record per optimizer step plus begin/end dataset losses
// per phase. Serialized as JSON lines.
// ---------------------------------------------------------------------------

struct TrainStepRecord {
  long step = 0;  // global, monotone across the whole run
  std::string phase;
  int iteration = 0;
  int epoch = 0;
  double lr = 0.0;
  double total = 0.0;
  std::vector<std::pair<std::string, double>> terms;
};

struct PhaseSummary {
  std::string phase;
  int iteration = 0;
  double loss_begin = 0.0;
  double loss_end = 0.0;
};

struct TrainLog {
  std::vector<TrainStepRecord> steps;
  std::vector<PhaseSummary> phases;
  std::vector<std::string> warnings;

  void write_jsonl(const std::string& path) const;
};

// Observation points for tests; snapshots are read-only.
struct TrainHooks {
  std::function<void(const std::string& phase, int iteration, const ModelBundle&)> on_phase_start;
  std::function<void(const std::string& phase, int iteration, const ModelBundle&)> on_phase_end;
};

// ---------------------------------------------------------------------------
// Generator-step gradient helpers (also used by the test suites).
// ---------------------------------------------------------------------------

// Appearance objective: SSIM of both up-sampled descriptions against the
// source plus beta times the description distance. Accumulates d/d(generator
// params) into grads and returns the loss terms.
LossValue generator_objective_gradients(const GeneratorNet& gen, const Image& source, double beta,
                                        const SsimConfig& ssim_cfg, NetGrads& grads);

// Reconstruction objective routed through the given triple on the LOSSLESS
// descriptions (the codec never appears in this graph). The triple's own
// parameters are treated as constants. Used with the virtual-codec triple in
// training; using the reconstruction triple instead gives the codec-bypassed
// oracle path.
LossValue generator_recon_path_gradients(const GeneratorNet& gen, const ReconNet& ra,
                                         const ReconNet& rb, const ReconNet& rc,
                                         const Image& source, NetGrads& grads);

// ---------------------------------------------------------------------------
// Dataset-level objective values (means over all patches).
// ---------------------------------------------------------------------------

double dataset_recon_loss(const ModelBundle& bundle, const std::vector<DescriptionPair>& decoded,
                          const std::vector<Image>& truth);
double dataset_virtual_loss(const ModelBundle& bundle, const std::vector<DescriptionPair>& lossless,
                            const std::vector<Image>& target_a, const std::vector<Image>& target_b,
                            const std::vector<Image>& target_c);

// ---------------------------------------------------------------------------
// The learning procedures. All are deterministic for a fixed (patches,
// config) pair; a non-finite loss aborts with PipelineError after writing the
// diagnostic checkpoint (when configured).
// ---------------------------------------------------------------------------

// Alternating three-phase training with a frozen virtual codec inside the
// generator phase; ends with one more reconstruction pass.
ModelBundle train_algorithm1(const PatchSet& patches, const TrainingConfig& cfg,
                             TrainLog* log = nullptr, const TrainHooks* hooks = nullptr,
                             const ModelBundle* init = nullptr);

// Joint training: the generator update substitutes the virtual-codec gradient
// for the codec+reconstruction path while the reconstruction nets train on
// the real decoded descriptions in the same step.
ModelBundle train_algorithm2(const PatchSet& patches, const TrainingConfig& cfg,
                             TrainLog* log = nullptr, const TrainHooks* hooks = nullptr,
                             const ModelBundle* init = nullptr);

// Poly-phase baseline: trains only the reconstruction networks on poly-phase
// split descriptions (the generator and virtual nets stay at initialization).
ModelBundle train_baseline(const PatchSet& patches, const TrainingConfig& cfg,
                           TrainLog* log = nullptr, const TrainHooks* hooks = nullptr,
                           const ModelBundle* init = nullptr);

}  // namespace mdc
