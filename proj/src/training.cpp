// The learning procedures: alternating three-phase training (algorithm 1),
// joint training with virtual-codec gradient substitution (algorithm 2), and
// the poly-phase baseline trainer. The codec sits outside every
// differentiable graph; the generator only ever receives gradients through
// the virtual networks or the appearance objective.

#include "mdc/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include <json.hpp>

#include "mdc/codec.hpp"

namespace mdc {

void TrainingConfig::validate() const {
  if (iterations < 1) throw std::invalid_argument("TrainingConfig: iterations must be >= 1");
  if (epochs < 1) throw std::invalid_argument("TrainingConfig: epochs must be >= 1");
  if (epochs_generator < 0) throw std::invalid_argument("TrainingConfig: negative generator epochs");
  if (batch < 1) throw std::invalid_argument("TrainingConfig: batch must be >= 1");
  if (!(lr0 > 0.0)) throw std::invalid_argument("TrainingConfig: lr0 must be positive");
  if (qf < 1 || qf > 100) throw std::invalid_argument("TrainingConfig: qf must be in [1,100]");
  if (width < 1) throw std::invalid_argument("TrainingConfig: width must be >= 1");
}

double lr_at_step(long step, long total_steps, double lr0) {
  if (step < 0 || step >= total_steps) throw std::invalid_argument("lr_at_step: step out of range");
  if (5 * step < 3 * total_steps) return lr0;
  if (5 * step < 4 * total_steps) return lr0 / 2.0;
  return lr0 / 4.0;
}

AdamState make_adam(const std::vector<ConvLayer>& layers, double beta1, double beta2) {
  AdamState st;
  st.beta1 = beta1;
  st.beta2 = beta2;
  st.m = make_grads(layers);
  st.v = make_grads(layers);
  return st;
}

void adam_step(std::vector<ConvLayer>& layers, const NetGrads& grads, AdamState& st, double lr) {
  st.t += 1;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  for (size_t li = 0; li < layers.size(); ++li) {
    auto update = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                      std::vector<double>& v) {
      for (size_t i = 0; i < p.size(); ++i) {
        m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g[i];
        v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * g[i] * g[i];
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + st.eps);
      }
    };
    update(layers[li].w, grads[li].w, st.m[li].w, st.v[li].w);
    update(layers[li].b, grads[li].b, st.m[li].b, st.v[li].b);
  }
}

void TrainLog::write_jsonl(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("TrainLog: cannot open " + path);
  for (const TrainStepRecord& r : steps) {
    nlohmann::ordered_json j;
    j["type"] = "step";
    j["step"] = r.step;
    j["phase"] = r.phase;
    j["iteration"] = r.iteration;
    j["epoch"] = r.epoch;
    j["lr"] = r.lr;
    j["total"] = r.total;
    nlohmann::ordered_json terms;
    for (const auto& [k, v] : r.terms) terms[k] = v;
    j["terms"] = terms;
    out << j.dump() << '\n';
  }
  for (const PhaseSummary& p : phases) {
    nlohmann::ordered_json j;
    j["type"] = "phase";
    j["phase"] = p.phase;
    j["iteration"] = p.iteration;
    j["loss_begin"] = p.loss_begin;
    j["loss_end"] = p.loss_end;
    out << j.dump() << '\n';
  }
  for (const std::string& w : warnings) {
    nlohmann::ordered_json j;
    j["type"] = "warning";
    j["message"] = w;
    out << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Gradient helpers
// ---------------------------------------------------------------------------

namespace {

void add_into(Image& dst, const Image& src, double scale = 1.0) {
  for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += scale * src.data[i];
}

Image channel_image(const FeatureMap& f, int c) {
  Image img(f.height, f.width);
  const double* p = f.channel(c);
  std::copy(p, p + img.data.size(), img.data.begin());
  return img;
}

void accumulate_loss(LossValue& into, const LossValue& lv) {
  if (into.terms.empty()) {
    into.terms = lv.terms;
  } else {
    for (size_t i = 0; i < lv.terms.size(); ++i) into.terms[i].second += lv.terms[i].second;
  }
  into.total += lv.total;
}

void scale_loss(LossValue& lv, double s) {
  lv.total *= s;
  for (auto& [k, v] : lv.terms) v *= s;
}

// content + gradient-difference pass for one reconstruction-style network;
// accumulates parameter gradients when grads is non-null and returns the
// input gradient when requested.
struct ReconPass {
  double content = 0.0;
  double grad_diff = 0.0;
  FeatureMap input_grad;
};

ReconPass recon_pass(const ReconNet& net, const FeatureMap& input, const Image& target,
                     NetGrads* grads, bool need_input_grad) {
  ReconTrace trace;
  const Image out = recon_forward(net, input, &trace);
  ReconPass pass;
  Image g_content, g_gd;
  pass.content = content_loss_grad(out, target, g_content);
  pass.grad_diff = gradient_difference_loss_grad(out, target, g_gd);
  add_into(g_content, g_gd);
  pass.input_grad = recon_backward(net, trace, g_content, grads, need_input_grad);
  return pass;
}

}  // namespace

LossValue generator_objective_gradients(const GeneratorNet& gen, const Image& source, double beta,
                                        const SsimConfig& ssim_cfg, NetGrads& grads) {
  GenTrace trace;
  const DescriptionPair pair = generator_forward(gen, source, &trace);

  Image grad_ua;
  const double loss_a = ssim_loss_grad(upsample2x_raw(pair.a), source, ssim_cfg, grad_ua);
  Image da = upsample2x_adjoint(grad_ua);

  Image grad_ub;
  const double loss_b = ssim_loss_grad(upsample2x_raw(pair.b), source, ssim_cfg, grad_ub);
  Image db = upsample2x_adjoint(grad_ub);

  Image grad_dist;
  const double dist = distance_loss_grad(pair.a, pair.b, grad_dist);
  add_into(da, grad_dist, beta);
  add_into(db, grad_dist, -beta);

  generator_backward(gen, trace, da, db, grads);

  LossValue lv;
  lv.terms.emplace_back("ssim_a", loss_a);
  lv.terms.emplace_back("ssim_b", loss_b);
  lv.terms.emplace_back("distance", beta * dist);
  for (const auto& [k, v] : lv.terms) lv.total += v;
  return lv;
}

LossValue generator_recon_path_gradients(const GeneratorNet& gen, const ReconNet& ra,
                                         const ReconNet& rb, const ReconNet& rc,
                                         const Image& source, NetGrads& grads) {
  GenTrace trace;
  const DescriptionPair pair = generator_forward(gen, source, &trace);

  ReconPass pa = recon_pass(ra, feature_from_image(pair.a), source, nullptr, true);
  ReconPass pb = recon_pass(rb, feature_from_image(pair.b), source, nullptr, true);
  ReconPass pc = recon_pass(rc, feature_from_pair(pair.a, pair.b), source, nullptr, true);

  Image da = channel_image(pa.input_grad, 0);
  Image db = channel_image(pb.input_grad, 0);
  add_into(da, channel_image(pc.input_grad, 0));
  add_into(db, channel_image(pc.input_grad, 1));

  generator_backward(gen, trace, da, db, grads);

  LossValue lv;
  lv.terms.emplace_back("content_a", pa.content);
  lv.terms.emplace_back("grad_diff_a", pa.grad_diff);
  lv.terms.emplace_back("content_b", pb.content);
  lv.terms.emplace_back("grad_diff_b", pb.grad_diff);
  lv.terms.emplace_back("content_c", pc.content);
  lv.terms.emplace_back("grad_diff_c", pc.grad_diff);
  for (const auto& [k, v] : lv.terms) lv.total += v;
  return lv;
}

double dataset_recon_loss(const ModelBundle& bundle, const std::vector<DescriptionPair>& decoded,
                          const std::vector<Image>& truth) {
  double acc = 0.0;
  for (size_t i = 0; i < truth.size(); ++i) {
    const Image out_a = recon_forward(bundle.recon_a, feature_from_image(decoded[i].a), nullptr);
    const Image out_b = recon_forward(bundle.recon_b, feature_from_image(decoded[i].b), nullptr);
    const Image out_c =
        recon_forward(bundle.recon_c, feature_from_pair(decoded[i].a, decoded[i].b), nullptr);
    acc += mdrn_loss(truth[i], out_a, out_b, out_c).total;
  }
  return acc / static_cast<double>(truth.size());
}

double dataset_virtual_loss(const ModelBundle& bundle, const std::vector<DescriptionPair>& lossless,
                            const std::vector<Image>& target_a, const std::vector<Image>& target_b,
                            const std::vector<Image>& target_c) {
  double acc = 0.0;
  for (size_t i = 0; i < lossless.size(); ++i) {
    const Image va = recon_forward(bundle.virt_a, feature_from_image(lossless[i].a), nullptr);
    const Image vb = recon_forward(bundle.virt_b, feature_from_image(lossless[i].b), nullptr);
    const Image vc =
        recon_forward(bundle.virt_c, feature_from_pair(lossless[i].a, lossless[i].b), nullptr);
    acc += mdvcn_loss(target_a[i], target_b[i], target_c[i], va, vb, vc).total;
  }
  return acc / static_cast<double>(lossless.size());
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

namespace {

struct Trainer {
  const TrainingConfig& cfg;
  TrainLog* log;
  const TrainHooks* hooks;
  ModelBundle bundle;

  std::vector<Image> truth;
  std::vector<DescriptionPair> desc;     // current lossless descriptions (clamped)
  std::vector<DescriptionPair> decoded;  // after the codec round trip
  std::vector<Image> tgt_a, tgt_b, tgt_c;

  AdamState opt_gen, opt_ra, opt_rb, opt_rc, opt_va, opt_vb, opt_vc;
  NetGrads g_gen, g_ra, g_rb, g_rc, g_va, g_vb, g_vc;

  long total_recon = 0, total_virtual = 0, total_gen = 0;
  long step_recon = 0, step_virtual = 0, step_gen = 0;
  long log_step_counter = 0;
  uint64_t phase_ordinal = 0;
  bool warned_mimicry = false;

  Trainer(const TrainingConfig& c, TrainLog* lg, const TrainHooks* hk) : cfg(c), log(lg), hooks(hk) {}

  size_t n() const { return truth.size(); }
  int batch_count() const { return static_cast<int>(n()) / cfg.batch; }

  void setup(const PatchSet& patches, const ModelBundle* init) {
    cfg.validate();
    if (patches.patches.empty()) throw std::invalid_argument("train: empty patch set");
    for (const Image& img : patches.patches) {
      if (img.height % 2 || img.width % 2) {
        throw std::invalid_argument("train: patch dimensions must be even");
      }
    }
    if (static_cast<size_t>(cfg.batch) > patches.patches.size()) {
      throw std::invalid_argument("train: batch size exceeds patch count");
    }
    truth = patches.patches;
    if (init) {
      if (init->meta.width != cfg.width) {
        throw std::invalid_argument("train: checkpoint width differs from configured width");
      }
      bundle = *init;
    } else {
      bundle = init_bundle(cfg.seed, cfg.width);
    }
    opt_gen = make_adam(bundle.gen.layers, cfg.adam_beta1, cfg.adam_beta2);
    opt_ra = make_adam(bundle.recon_a.layers, cfg.adam_beta1, cfg.adam_beta2);
    opt_rb = make_adam(bundle.recon_b.layers, cfg.adam_beta1, cfg.adam_beta2);
    opt_rc = make_adam(bundle.recon_c.layers, cfg.adam_beta1, cfg.adam_beta2);
    opt_va = make_adam(bundle.virt_a.layers, cfg.adam_beta1, cfg.adam_beta2);
    opt_vb = make_adam(bundle.virt_b.layers, cfg.adam_beta1, cfg.adam_beta2);
    opt_vc = make_adam(bundle.virt_c.layers, cfg.adam_beta1, cfg.adam_beta2);
    g_gen = make_grads(bundle.gen.layers);
    g_ra = make_grads(bundle.recon_a.layers);
    g_rb = make_grads(bundle.recon_b.layers);
    g_rc = make_grads(bundle.recon_c.layers);
    g_va = make_grads(bundle.virt_a.layers);
    g_vb = make_grads(bundle.virt_b.layers);
    g_vc = make_grads(bundle.virt_c.layers);
    split_descriptions();
  }

  void split_descriptions() {
    desc.clear();
    desc.reserve(n());
    for (const Image& img : truth) desc.push_back(polyphase_split(img));
  }

  void compress_dataset() {
    const CodecConfig cc{cfg.qf};
    decoded.clear();
    decoded.reserve(n());
    for (const DescriptionPair& d : desc) {
      decoded.push_back({jpeg_decode(jpeg_encode(d.a, cc)), jpeg_decode(jpeg_encode(d.b, cc))});
    }
  }

  // reconstruction outputs on the decoded dataset; kept raw so the virtual
  // networks mimic the network function rather than the clamped boundary
  void regen_targets() {
    tgt_a.clear();
    tgt_b.clear();
    tgt_c.clear();
    for (const DescriptionPair& d : decoded) {
      tgt_a.push_back(recon_forward(bundle.recon_a, feature_from_image(d.a), nullptr));
      tgt_b.push_back(recon_forward(bundle.recon_b, feature_from_image(d.b), nullptr));
      tgt_c.push_back(recon_forward(bundle.recon_c, feature_from_pair(d.a, d.b), nullptr));
    }
  }

  void regen_descriptions() {
    desc.clear();
    desc.reserve(n());
    for (const Image& img : truth) desc.push_back(generator_infer(bundle.gen, img));
  }

  std::vector<size_t> shuffled_order() {
    std::mt19937_64 rng(mix_seed(cfg.seed, 0xba7c4e5 + phase_ordinal++));
    std::vector<size_t> order(n());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (size_t i = order.size() - 1; i > 0; --i) {
      const size_t j = rng() % (i + 1);
      std::swap(order[i], order[j]);
    }
    return order;
  }

  void hook_start(const std::string& phase, int iteration) {
    if (hooks && hooks->on_phase_start) hooks->on_phase_start(phase, iteration, bundle);
  }
  void hook_end(const std::string& phase, int iteration) {
    if (hooks && hooks->on_phase_end) hooks->on_phase_end(phase, iteration, bundle);
  }

  // Deep narrow relu towers can collapse to a constant under aggressive
  // learning rates (every unit of some layer dies). Training continues, but
  // the operator is told which network flatlined.
  void warn_if_constant(const Image& out, const std::string& which) {
    double mn = out.data[0], mx = out.data[0];
    for (double v : out.data) {
      mn = std::min(mn, v);
      mx = std::max(mx, v);
    }
    if (mx - mn > 1e-9) return;
    const std::string msg = which + " produces a constant output (dead units); consider a lower "
                            "learning rate or a larger width";
    if (log) log->warnings.push_back(msg);
    std::fprintf(stderr, "warning: %s\n", msg.c_str());
  }

  void health_check_recon() {
    if (decoded.empty()) return;
    warn_if_constant(recon_forward(bundle.recon_a, feature_from_image(decoded[0].a), nullptr),
                     "side reconstruction net A");
    warn_if_constant(recon_forward(bundle.recon_b, feature_from_image(decoded[0].b), nullptr),
                     "side reconstruction net B");
    warn_if_constant(
        recon_forward(bundle.recon_c, feature_from_pair(decoded[0].a, decoded[0].b), nullptr),
        "central reconstruction net");
  }

  void record(const std::string& phase, int iteration, int epoch, double lr, LossValue lv) {
    check_finite(lv.total, phase);
    if (!log) return;
    TrainStepRecord r;
    r.step = log_step_counter++;
    r.phase = phase;
    r.iteration = iteration;
    r.epoch = epoch;
    r.lr = lr;
    r.total = lv.total;
    r.terms = std::move(lv.terms);
    log->steps.push_back(std::move(r));
  }

  // Adam's normalized steps keep exploding losses finite in double precision,
  // so the guard also trips on absurd magnitudes, not just non-finite values.
  void check_finite(double total, const std::string& phase) {
    if (std::isfinite(total) && std::fabs(total) <= cfg.divergence_threshold) return;
    if (!cfg.diagnostic_checkpoint.empty()) save_checkpoint(bundle, cfg.diagnostic_checkpoint);
    throw PipelineError("training diverged: loss " + std::to_string(total) + " in phase '" + phase +
                        "'" +
                        (cfg.diagnostic_checkpoint.empty()
                             ? std::string()
                             : " (diagnostic checkpoint: " + cfg.diagnostic_checkpoint + ")"));
  }

  LossValue recon_batch(const std::vector<size_t>& order, int k) {
    zero_grads(g_ra);
    zero_grads(g_rb);
    zero_grads(g_rc);
    LossValue mean;
    for (int s = 0; s < cfg.batch; ++s) {
      const size_t idx = order[static_cast<size_t>(k) * cfg.batch + s];
      const ReconPass pa = recon_pass(bundle.recon_a, feature_from_image(decoded[idx].a), truth[idx], &g_ra, false);
      const ReconPass pb = recon_pass(bundle.recon_b, feature_from_image(decoded[idx].b), truth[idx], &g_rb, false);
      const ReconPass pc = recon_pass(bundle.recon_c, feature_from_pair(decoded[idx].a, decoded[idx].b), truth[idx], &g_rc, false);
      LossValue lv;
      lv.terms = {{"content_a", pa.content}, {"grad_diff_a", pa.grad_diff},
                  {"content_b", pb.content}, {"grad_diff_b", pb.grad_diff},
                  {"content_c", pc.content}, {"grad_diff_c", pc.grad_diff}};
      for (const auto& [kk, v] : lv.terms) lv.total += v;
      accumulate_loss(mean, lv);
    }
    const double inv = 1.0 / cfg.batch;
    scale_loss(mean, inv);
    scale_grads(g_ra, inv);
    scale_grads(g_rb, inv);
    scale_grads(g_rc, inv);
    return mean;
  }

  void recon_phase(int iteration, int epochs) {
    hook_start("recon", iteration);
    size_t summary = 0;
    if (log) {
      log->phases.push_back({"recon", iteration, dataset_recon_loss(bundle, decoded, truth), 0.0});
      summary = log->phases.size() - 1;
    }
    for (int e = 1; e <= epochs; ++e) {
      const std::vector<size_t> order = shuffled_order();
      for (int k = 0; k < batch_count(); ++k) {
        LossValue mean = recon_batch(order, k);
        const double lr = lr_at_step(step_recon, total_recon, cfg.lr0);
        adam_step(bundle.recon_a.layers, g_ra, opt_ra, lr);
        adam_step(bundle.recon_b.layers, g_rb, opt_rb, lr);
        adam_step(bundle.recon_c.layers, g_rc, opt_rc, lr);
        ++step_recon;
        bundle.meta.steps_recon += 1;
        record("recon", iteration, e, lr, std::move(mean));
      }
    }
    if (log) log->phases[summary].loss_end = dataset_recon_loss(bundle, decoded, truth);
    health_check_recon();
    hook_end("recon", iteration);
  }

  LossValue virtual_batch(const std::vector<size_t>& order, int k) {
    zero_grads(g_va);
    zero_grads(g_vb);
    zero_grads(g_vc);
    LossValue mean;
    for (int s = 0; s < cfg.batch; ++s) {
      const size_t idx = order[static_cast<size_t>(k) * cfg.batch + s];
      const ReconPass pa = recon_pass(bundle.virt_a, feature_from_image(desc[idx].a), tgt_a[idx], &g_va, false);
      const ReconPass pb = recon_pass(bundle.virt_b, feature_from_image(desc[idx].b), tgt_b[idx], &g_vb, false);
      const ReconPass pc = recon_pass(bundle.virt_c, feature_from_pair(desc[idx].a, desc[idx].b), tgt_c[idx], &g_vc, false);
      LossValue lv;
      lv.terms = {{"content_a", pa.content}, {"grad_diff_a", pa.grad_diff},
                  {"content_b", pb.content}, {"grad_diff_b", pb.grad_diff},
                  {"content_c", pc.content}, {"grad_diff_c", pc.grad_diff}};
      for (const auto& [kk, v] : lv.terms) lv.total += v;
      accumulate_loss(mean, lv);
    }
    const double inv = 1.0 / cfg.batch;
    scale_loss(mean, inv);
    scale_grads(g_va, inv);
    scale_grads(g_vb, inv);
    scale_grads(g_vc, inv);
    return mean;
  }

  void virtual_phase(int iteration, int epochs) {
    hook_start("virtual", iteration);
    size_t summary = 0;
    if (log) {
      log->phases.push_back(
          {"virtual", iteration, dataset_virtual_loss(bundle, desc, tgt_a, tgt_b, tgt_c), 0.0});
      summary = log->phases.size() - 1;
    }
    for (int e = 1; e <= epochs; ++e) {
      const std::vector<size_t> order = shuffled_order();
      for (int k = 0; k < batch_count(); ++k) {
        LossValue mean = virtual_batch(order, k);
        const double lr = lr_at_step(step_virtual, total_virtual, cfg.lr0);
        adam_step(bundle.virt_a.layers, g_va, opt_va, lr);
        adam_step(bundle.virt_b.layers, g_vb, opt_vb, lr);
        adam_step(bundle.virt_c.layers, g_vc, opt_vc, lr);
        ++step_virtual;
        bundle.meta.steps_virtual += 1;
        record("virtual", iteration, e, lr, std::move(mean));
      }
    }
    if (log) {
      log->phases[summary].loss_end = dataset_virtual_loss(bundle, desc, tgt_a, tgt_b, tgt_c);
    }
    hook_end("virtual", iteration);
  }

  double dataset_generator_loss() {
    const double beta = beta_for_qf(cfg.qf, cfg.loss);
    double acc = 0.0;
    for (size_t i = 0; i < n(); ++i) {
      const DescriptionPair pair = generator_forward(bundle.gen, truth[i], nullptr);
      LossValue lv = mdgn_loss(pair, truth[i], cfg.qf, cfg.loss);
      const Image va = recon_forward(bundle.virt_a, feature_from_image(pair.a), nullptr);
      const Image vb = recon_forward(bundle.virt_b, feature_from_image(pair.b), nullptr);
      const Image vc = recon_forward(bundle.virt_c, feature_from_pair(pair.a, pair.b), nullptr);
      acc += lv.total + mdrn_loss(truth[i], va, vb, vc).total;
    }
    (void)beta;
    return acc / static_cast<double>(n());
  }

  void generator_phase(int iteration, int epochs) {
    hook_start("generator", iteration);
    size_t summary = 0;
    if (log) {
      log->phases.push_back({"generator", iteration, dataset_generator_loss(), 0.0});
      summary = log->phases.size() - 1;
    }
    const double beta = beta_for_qf(cfg.qf, cfg.loss);
    for (int e = 1; e <= epochs; ++e) {
      const std::vector<size_t> order = shuffled_order();
      for (int k = 0; k < batch_count(); ++k) {
        zero_grads(g_gen);
        LossValue mean;
        for (int s = 0; s < cfg.batch; ++s) {
          const size_t idx = order[static_cast<size_t>(k) * cfg.batch + s];
          LossValue lv = generator_objective_gradients(bundle.gen, truth[idx], beta, cfg.loss.ssim, g_gen);
          const LossValue lr_path = generator_recon_path_gradients(
              bundle.gen, bundle.virt_a, bundle.virt_b, bundle.virt_c, truth[idx], g_gen);
          for (const auto& [kk, v] : lr_path.terms) lv.terms.emplace_back(kk, v);
          lv.total += lr_path.total;
          accumulate_loss(mean, lv);
        }
        const double inv = 1.0 / cfg.batch;
        scale_loss(mean, inv);
        scale_grads(g_gen, inv);
        const double lr = lr_at_step(step_gen, total_gen, cfg.lr0);
        adam_step(bundle.gen.layers, g_gen, opt_gen, lr);
        ++step_gen;
        bundle.meta.steps_generator += 1;
        record("generator", iteration, e, lr, std::move(mean));
      }
    }
    if (log) log->phases[summary].loss_end = dataset_generator_loss();
    hook_end("generator", iteration);
  }

  // Algorithm-2 inner step: simultaneous generator + reconstruction updates,
  // then a virtual update against the refreshed targets.
  void joint_epoch(int iteration, int epoch) {
    const double beta = beta_for_qf(cfg.qf, cfg.loss);
    const CodecConfig cc{cfg.qf};
    const std::vector<size_t> order = shuffled_order();
    for (int k = 0; k < batch_count(); ++k) {
      std::vector<size_t> batch(order.begin() + static_cast<size_t>(k) * cfg.batch,
                                order.begin() + static_cast<size_t>(k + 1) * cfg.batch);
      std::vector<DescriptionPair> batch_desc;   // clamped, codec-ready
      std::vector<DescriptionPair> batch_decoded;
      batch_desc.reserve(batch.size());
      batch_decoded.reserve(batch.size());
      for (const size_t idx : batch) {
        DescriptionPair d = generator_infer(bundle.gen, truth[idx]);
        batch_decoded.push_back({jpeg_decode(jpeg_encode(d.a, cc)), jpeg_decode(jpeg_encode(d.b, cc))});
        batch_desc.push_back(std::move(d));
      }

      // reconstruction update on the real decoded descriptions
      zero_grads(g_ra);
      zero_grads(g_rb);
      zero_grads(g_rc);
      LossValue mean_recon;
      for (size_t s = 0; s < batch.size(); ++s) {
        const size_t idx = batch[s];
        const ReconPass pa = recon_pass(bundle.recon_a, feature_from_image(batch_decoded[s].a), truth[idx], &g_ra, false);
        const ReconPass pb = recon_pass(bundle.recon_b, feature_from_image(batch_decoded[s].b), truth[idx], &g_rb, false);
        const ReconPass pc = recon_pass(bundle.recon_c, feature_from_pair(batch_decoded[s].a, batch_decoded[s].b), truth[idx], &g_rc, false);
        LossValue lv;
        lv.terms = {{"content_a", pa.content}, {"grad_diff_a", pa.grad_diff},
                    {"content_b", pb.content}, {"grad_diff_b", pb.grad_diff},
                    {"content_c", pc.content}, {"grad_diff_c", pc.grad_diff}};
        for (const auto& [kk, v] : lv.terms) lv.total += v;
        accumulate_loss(mean_recon, lv);
      }

      // generator update through the virtual path (lossless descriptions)
      zero_grads(g_gen);
      LossValue mean_gen;
      for (const size_t idx : batch) {
        LossValue lv = generator_objective_gradients(bundle.gen, truth[idx], beta, cfg.loss.ssim, g_gen);
        const LossValue lr_path = generator_recon_path_gradients(
            bundle.gen, bundle.virt_a, bundle.virt_b, bundle.virt_c, truth[idx], g_gen);
        for (const auto& [kk, v] : lr_path.terms) lv.terms.emplace_back(kk, v);
        lv.total += lr_path.total;
        accumulate_loss(mean_gen, lv);
      }

      const double inv = 1.0 / cfg.batch;
      scale_loss(mean_recon, inv);
      scale_loss(mean_gen, inv);
      scale_grads(g_ra, inv);
      scale_grads(g_rb, inv);
      scale_grads(g_rc, inv);
      scale_grads(g_gen, inv);

      // both updates are applied in the same step
      const double lr_rec = lr_at_step(step_recon, total_recon, cfg.lr0);
      adam_step(bundle.recon_a.layers, g_ra, opt_ra, lr_rec);
      adam_step(bundle.recon_b.layers, g_rb, opt_rb, lr_rec);
      adam_step(bundle.recon_c.layers, g_rc, opt_rc, lr_rec);
      ++step_recon;
      bundle.meta.steps_recon += 1;
      const double lr_gen = lr_at_step(step_gen, total_gen, cfg.lr0);
      adam_step(bundle.gen.layers, g_gen, opt_gen, lr_gen);
      ++step_gen;
      bundle.meta.steps_generator += 1;
      record("recon", iteration, epoch, lr_rec, std::move(mean_recon));
      record("generator", iteration, epoch, lr_gen, std::move(mean_gen));

      // refresh the batch reconstruction targets with the updated weights,
      // then update the virtual networks
      zero_grads(g_va);
      zero_grads(g_vb);
      zero_grads(g_vc);
      LossValue mean_virtual;
      for (size_t s = 0; s < batch.size(); ++s) {
        const Image ta = recon_forward(bundle.recon_a, feature_from_image(batch_decoded[s].a), nullptr);
        const Image tb = recon_forward(bundle.recon_b, feature_from_image(batch_decoded[s].b), nullptr);
        const Image tc = recon_forward(bundle.recon_c, feature_from_pair(batch_decoded[s].a, batch_decoded[s].b), nullptr);
        const ReconPass pa = recon_pass(bundle.virt_a, feature_from_image(batch_desc[s].a), ta, &g_va, false);
        const ReconPass pb = recon_pass(bundle.virt_b, feature_from_image(batch_desc[s].b), tb, &g_vb, false);
        const ReconPass pc = recon_pass(bundle.virt_c, feature_from_pair(batch_desc[s].a, batch_desc[s].b), tc, &g_vc, false);
        LossValue lv;
        lv.terms = {{"content_a", pa.content}, {"grad_diff_a", pa.grad_diff},
                    {"content_b", pb.content}, {"grad_diff_b", pb.grad_diff},
                    {"content_c", pc.content}, {"grad_diff_c", pc.grad_diff}};
        for (const auto& [kk, v] : lv.terms) lv.total += v;
        accumulate_loss(mean_virtual, lv);
      }
      scale_loss(mean_virtual, inv);
      scale_grads(g_va, inv);
      scale_grads(g_vb, inv);
      scale_grads(g_vc, inv);
      const double lr_vrt = lr_at_step(step_virtual, total_virtual, cfg.lr0);
      adam_step(bundle.virt_a.layers, g_va, opt_va, lr_vrt);
      adam_step(bundle.virt_b.layers, g_vb, opt_vb, lr_vrt);
      adam_step(bundle.virt_c.layers, g_vc, opt_vc, lr_vrt);
      ++step_virtual;
      bundle.meta.steps_virtual += 1;

      if (mean_virtual.total > cfg.mimic_warn_threshold && !warned_mimicry) {
        warned_mimicry = true;
        const std::string msg = "virtual-codec mimicry loss " + std::to_string(mean_virtual.total) +
                                " exceeds threshold " + std::to_string(cfg.mimic_warn_threshold) +
                                "; the substituted generator gradient may be unreliable";
        if (log) log->warnings.push_back(msg);
        std::fprintf(stderr, "warning: %s\n", msg.c_str());
      }
      record("virtual", iteration, epoch, lr_vrt, std::move(mean_virtual));
    }
  }
};

}  // namespace

ModelBundle train_algorithm1(const PatchSet& patches, const TrainingConfig& cfg, TrainLog* log,
                             const TrainHooks* hooks, const ModelBundle* init) {
  Trainer tr(cfg, log, hooks);
  tr.setup(patches, init);
  const long B = tr.batch_count();
  if (B < 1) throw std::invalid_argument("train: batch size exceeds patch count");
  tr.total_recon = static_cast<long>(cfg.iterations + 1) * cfg.epochs * B;
  tr.total_virtual = static_cast<long>(cfg.iterations) * cfg.epochs * B;
  tr.total_gen = static_cast<long>(cfg.iterations) * cfg.generator_epochs() * B;

  for (int r = 1; r <= cfg.iterations; ++r) {
    tr.compress_dataset();
    tr.recon_phase(r, cfg.epochs);
    tr.regen_targets();
    tr.virtual_phase(r, cfg.epochs);
    tr.generator_phase(r, cfg.generator_epochs());
    tr.regen_descriptions();
  }
  tr.compress_dataset();
  tr.recon_phase(cfg.iterations + 1, cfg.epochs);

  tr.bundle.meta.qf = cfg.qf;
  tr.bundle.meta.seed = cfg.seed;
  tr.bundle.meta.algorithm = "algorithm1";
  return tr.bundle;
}

ModelBundle train_algorithm2(const PatchSet& patches, const TrainingConfig& cfg, TrainLog* log,
                             const TrainHooks* hooks, const ModelBundle* init) {
  Trainer tr(cfg, log, hooks);
  tr.setup(patches, init);
  const long B = tr.batch_count();
  if (B < 1) throw std::invalid_argument("train: batch size exceeds patch count");
  tr.total_recon = static_cast<long>(cfg.iterations + 1) * cfg.epochs * B;
  tr.total_virtual = static_cast<long>(cfg.iterations + 1) * cfg.epochs * B;
  tr.total_gen = static_cast<long>(cfg.iterations) * cfg.epochs * B;

  // pre-train the reconstruction nets, then the virtual nets, on poly-phase
  // descriptions
  tr.compress_dataset();
  tr.recon_phase(0, cfg.epochs);
  tr.regen_targets();
  tr.virtual_phase(0, cfg.epochs);

  for (int t = 1; t <= cfg.iterations; ++t) {
    for (int e = 1; e <= cfg.epochs; ++e) tr.joint_epoch(t, e);
  }

  tr.bundle.meta.qf = cfg.qf;
  tr.bundle.meta.seed = cfg.seed;
  tr.bundle.meta.algorithm = "algorithm2";
  return tr.bundle;
}

ModelBundle train_baseline(const PatchSet& patches, const TrainingConfig& cfg, TrainLog* log,
                           const TrainHooks* hooks, const ModelBundle* init) {
  Trainer tr(cfg, log, hooks);
  tr.setup(patches, init);
  const long B = tr.batch_count();
  if (B < 1) throw std::invalid_argument("train: batch size exceeds patch count");
  tr.total_recon = static_cast<long>(cfg.epochs) * B;
  tr.compress_dataset();
  tr.recon_phase(1, cfg.epochs);
  tr.bundle.meta.qf = cfg.qf;
  tr.bundle.meta.seed = cfg.seed;
  tr.bundle.meta.algorithm = "base";
  return tr.bundle;
}

}  // namespace mdc
