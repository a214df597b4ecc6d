// Command-line front end: data preparation, training, encoding/decoding
// descriptions, rate-distortion evaluation, channel simulation and plotting.
//
// Exit codes: 0 success, 2 usage/input error, 3 pipeline state error.

#include <CLI11.hpp>

#include <algorithm>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "mdc/codec.hpp"
#include "mdc/evaluation.hpp"
#include "mdc/imaging.hpp"
#include "mdc/losses.hpp"
#include "mdc/networks.hpp"
#include "mdc/training.hpp"

namespace fs = std::filesystem;

namespace {

std::string trim_copy(const std::string& s) {
  const size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Flat key=value config support: keys map to the subcommand's long options,
// explicit command-line flags win, unknown keys are rejected. Returns the
// token list with the config-derived flags spliced in after the subcommand.
std::vector<std::string> splice_config_tokens(CLI::App& app, const std::vector<std::string>& args) {
  std::string config_path;
  for (size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config_path = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    }
  }
  if (config_path.empty() || args.empty()) return args;
  CLI::App* sub = app.get_subcommand_no_throw(args[0]);
  if (!sub) return args;

  std::ifstream in(config_path);
  if (!in) throw std::runtime_error("config file not found: " + config_path);
  auto user_has = [&args](const std::string& flag) {
    for (const std::string& a : args) {
      if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    }
    return false;
  };
  std::vector<std::string> injected;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim_copy(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("config: malformed line " + std::to_string(lineno) + " in " + config_path);
    }
    const std::string key = trim_copy(line.substr(0, eq));
    const std::string value = trim_copy(line.substr(eq + 1));
    const std::string flag = "--" + key;
    if (key == "config" || !sub->get_option_no_throw(flag)) {
      throw std::runtime_error("config: unknown key '" + key + "' (line " + std::to_string(lineno) + ")");
    }
    if (user_has(flag)) continue;
    injected.push_back(flag);
    injected.push_back(value);
  }
  std::vector<std::string> out;
  out.push_back(args[0]);
  out.insert(out.end(), injected.begin(), injected.end());
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

std::string resolve_checkpoint(const std::string& path) {
  if (fs::exists(path)) return path;
  if (const char* dir = std::getenv("MDC_CHECKPOINT_DIR")) {
    const fs::path candidate = fs::path(dir) / path;
    if (fs::exists(candidate)) return candidate.string();
  }
  throw std::runtime_error("checkpoint not found: " + path);
}

struct Corpus {
  std::vector<mdc::Image> images;
  std::vector<std::string> ids;
};

Corpus load_corpus(const std::string& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("corpus directory not found: " + dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = entry.path().extension().string();
    if (ext == ".png" || ext == ".pgm" || ext == ".bmp") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no images (.png/.pgm/.bmp) in " + dir);
  Corpus corpus;
  for (const fs::path& f : files) {
    corpus.images.push_back(mdc::load_image(f.string()));
    corpus.ids.push_back(f.stem().string());
  }
  return corpus;
}

std::vector<int> parse_qfs(const std::string& csv) {
  std::vector<int> qfs;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) qfs.push_back(std::stoi(tok));
  }
  if (qfs.empty()) throw std::runtime_error("empty qf list");
  return qfs;
}

// --- prepare-data ---

int cmd_prepare_data(const std::string& corpus_dir, int patch, int total, uint64_t seed,
                     const std::string& out_dir, bool no_flip, bool no_rotate) {
  const Corpus corpus = load_corpus(corpus_dir);
  mdc::AugmentationPolicy aug;
  aug.flip = !no_flip;
  aug.rotate = !no_rotate;
  const mdc::PatchSet set = mdc::prepare_patches(corpus.images, corpus.ids, patch, total, aug, seed);
  mdc::save_patchset(set, out_dir);
  std::printf("wrote %zu patches of %dx%d to %s\n", set.patches.size(), patch, patch, out_dir.c_str());
  return 0;
}

// --- train ---

int cmd_train(const std::string& algorithm, const std::string& data_dir,
              const mdc::TrainingConfig& cfg_in, const std::string& out_path,
              const std::string& log_path, const std::string& init_path) {
  const mdc::PatchSet patches = mdc::load_patchset(data_dir);
  mdc::TrainingConfig cfg = cfg_in;
  cfg.diagnostic_checkpoint = out_path + ".diverged";

  mdc::ModelBundle init_bundle;
  const mdc::ModelBundle* init = nullptr;
  if (!init_path.empty()) {
    init_bundle = mdc::load_checkpoint(resolve_checkpoint(init_path));
    init = &init_bundle;
  }

  mdc::TrainLog log;
  mdc::ModelBundle bundle;
  if (algorithm == "1") {
    bundle = mdc::train_algorithm1(patches, cfg, &log, nullptr, init);
  } else if (algorithm == "2") {
    bundle = mdc::train_algorithm2(patches, cfg, &log, nullptr, init);
  } else {  // validated by CLI11: "base"
    bundle = mdc::train_baseline(patches, cfg, &log, nullptr, init);
  }
  mdc::save_checkpoint(bundle, out_path);
  log.write_jsonl(log_path);
  std::printf("checkpoint: %s\ntrain log: %s\n", out_path.c_str(), log_path.c_str());
  for (const mdc::PhaseSummary& p : log.phases) {
    std::printf("phase %-10s iter %d: %.6f -> %.6f\n", p.phase.c_str(), p.iteration, p.loss_begin,
                p.loss_end);
  }
  return 0;
}

// --- encode / decode ---

int cmd_encode(const std::string& image_path, const std::string& checkpoint, int qf,
               const std::string& out_dir) {
  const mdc::Image img = mdc::load_image(image_path);
  const mdc::ModelBundle bundle = mdc::load_checkpoint(resolve_checkpoint(checkpoint));
  const mdc::DescriptionPair desc = mdc::generator_infer(bundle.gen, img);
  const mdc::CodecConfig cc{qf};
  const mdc::Bitstream sa = mdc::jpeg_encode(desc.a, cc);
  const mdc::Bitstream sb = mdc::jpeg_encode(desc.b, cc);

  fs::create_directories(out_dir);
  const std::string stem = fs::path(image_path).stem().string();
  const std::string fa = stem + "_A.jpg";
  const std::string fb = stem + "_B.jpg";
  mdc::save_bitstream(sa, (fs::path(out_dir) / fa).string());
  mdc::save_bitstream(sb, (fs::path(out_dir) / fb).string());

  nlohmann::ordered_json meta{{"format", 1},
                              {"checkpoint", checkpoint},
                              {"checkpoint_steps_generator", bundle.meta.steps_generator},
                              {"qf", qf},
                              {"source_height", img.height},
                              {"source_width", img.width},
                              {"description_height", desc.a.height},
                              {"description_width", desc.a.width},
                              {"stream_a", fa},
                              {"stream_b", fb}};
  const std::string meta_path = (fs::path(out_dir) / (stem + "_meta.json")).string();
  std::ofstream ms(meta_path);
  ms << meta.dump(2) << '\n';
  const double bpp_a = mdc::bits_per_pixel({&sa}, img.height, img.width);
  const double bpp_b = mdc::bits_per_pixel({&sb}, img.height, img.width);
  std::printf("%s: %zu bytes (%.6f bpp)\n%s: %zu bytes (%.6f bpp)\nsidecar: %s\n", fa.c_str(),
              sa.byte_count(), bpp_a, fb.c_str(), sb.byte_count(), bpp_b, meta_path.c_str());
  return 0;
}

int cmd_decode(const std::string& meta_path, const std::string& checkpoint, const std::string& mode,
               const std::string& out_path, std::string stream_a, std::string stream_b) {
  std::ifstream ms(meta_path);
  if (!ms) throw std::runtime_error("cannot open sidecar: " + meta_path);
  const nlohmann::json meta = nlohmann::json::parse(ms);
  const fs::path base = fs::path(meta_path).parent_path();
  if (stream_a.empty()) stream_a = (base / meta.value("stream_a", std::string())).string();
  if (stream_b.empty()) stream_b = (base / meta.value("stream_b", std::string())).string();

  const bool need_a = mode == "sideA" || mode == "central";
  const bool need_b = mode == "sideB" || mode == "central";
  if (need_a && !fs::exists(stream_a)) {
    throw mdc::PipelineError("missing description: stream A not found (" + stream_a + ")");
  }
  if (need_b && !fs::exists(stream_b)) {
    throw mdc::PipelineError("missing description: stream B not found (" + stream_b + ")");
  }

  const mdc::ModelBundle bundle = mdc::load_checkpoint(resolve_checkpoint(checkpoint));
  mdc::Image out;
  if (mode == "sideA") {
    out = mdc::recon_infer(bundle.recon_a, mdc::jpeg_decode(mdc::load_bitstream(stream_a)));
  } else if (mode == "sideB") {
    out = mdc::recon_infer(bundle.recon_b, mdc::jpeg_decode(mdc::load_bitstream(stream_b)));
  } else {
    out = mdc::recon_infer(bundle.recon_c, mdc::jpeg_decode(mdc::load_bitstream(stream_a)),
                           mdc::jpeg_decode(mdc::load_bitstream(stream_b)));
  }
  mdc::save_image(out, out_path);
  std::printf("wrote %s (%dx%d, %s)\n", out_path.c_str(), out.height, out.width, mode.c_str());
  return 0;
}

// --- evaluate / simulate / plot ---

int cmd_evaluate(const std::string& checkpoint, const std::string& corpus_dir,
                 const std::string& qfs_csv, const std::string& method, const std::string& out_csv,
                 const std::string& plot_prefix, int jobs) {
  const Corpus corpus = load_corpus(corpus_dir);
  const mdc::ModelBundle bundle = mdc::load_checkpoint(resolve_checkpoint(checkpoint));
  std::vector<int> qfs;
  if (!qfs_csv.empty()) {
    qfs = parse_qfs(qfs_csv);
  } else {
    qfs = (method == "base") ? mdc::default_qf_grid_base() : mdc::default_qf_grid();
  }
  const std::vector<mdc::RDPoint> points =
      method == "base" ? mdc::evaluate_ours_base(bundle, corpus.images, corpus.ids, qfs, jobs)
                       : mdc::evaluate_model(bundle, corpus.images, corpus.ids, qfs, jobs);
  mdc::export_rd(points, out_csv);
  std::printf("wrote %zu rows to %s\n", points.size(), out_csv.c_str());
  for (const mdc::RDPoint& p : points) {
    if (p.image == "mean") {
      std::printf("qf %3d: %s\n", p.qf, mdc::caption_report(p).c_str());
    }
  }
  if (!plot_prefix.empty()) {
    for (const std::string& f : mdc::plot_rd(points, plot_prefix)) std::printf("plot: %s\n", f.c_str());
  }
  return 0;
}

int cmd_simulate(const std::string& checkpoint, const std::string& image_path, int qf,
                 double ploss_a, double ploss_b, long trials, uint64_t seed,
                 const std::string& json_out) {
  const mdc::Image img = mdc::load_image(image_path);
  const mdc::ModelBundle bundle = mdc::load_checkpoint(resolve_checkpoint(checkpoint));
  mdc::ChannelScenario scenario{ploss_a, ploss_b, trials, seed};
  const mdc::ChannelReport mc = mdc::simulate_channels(bundle, img, qf, scenario);
  const mdc::ChannelReport ex = mdc::enumerate_channels(bundle, img, qf, ploss_a, ploss_b);

  std::printf("outcomes: central %.3f dB / %.4f | side A %.3f dB / %.4f | side B %.3f dB / %.4f\n",
              ex.outcomes.psnr_c, ex.outcomes.ssim_c, ex.outcomes.psnr_a, ex.outcomes.ssim_a,
              ex.outcomes.psnr_b, ex.outcomes.ssim_b);
  std::printf("closed form : expected %.4f dB / %.5f, outage %.6f\n", ex.expected_psnr,
              ex.expected_ssim, ex.outage_probability);
  std::printf("monte carlo : expected %.4f dB / %.5f, outage %.6f (%ld trials)\n", mc.expected_psnr,
              mc.expected_ssim, mc.outage_probability, trials);
  if (!json_out.empty()) {
    nlohmann::ordered_json j{{"p_loss_a", ploss_a},
                             {"p_loss_b", ploss_b},
                             {"trials", trials},
                             {"closed_form", {{"psnr", ex.expected_psnr}, {"ssim", ex.expected_ssim}, {"outage", ex.outage_probability}}},
                             {"monte_carlo", {{"psnr", mc.expected_psnr}, {"ssim", mc.expected_ssim}, {"outage", mc.outage_probability}}}};
    std::ofstream out(json_out);
    out << j.dump(2) << '\n';
  }
  return 0;
}

int cmd_plot(const std::string& csv, const std::string& prefix) {
  const std::vector<mdc::RDPoint> points = mdc::import_rd(csv);
  for (const std::string& f : mdc::plot_rd(points, prefix)) std::printf("plot: %s\n", f.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-channel multiple-description image codec with learned generator and reconstruction"};
  app.require_subcommand(1);

  // prepare-data
  auto* prep = app.add_subcommand("prepare-data", "cut augmented training patches from a corpus");
  std::string prep_corpus, prep_out;
  int prep_patch = 160, prep_total = 3200;
  uint64_t prep_seed = 1;
  bool prep_no_flip = false, prep_no_rotate = false;
  prep->add_option("--corpus", prep_corpus, "directory of source images")->required();
  prep->add_option("--patch", prep_patch, "patch side length");
  prep->add_option("--total", prep_total, "number of patches");
  prep->add_option("--seed", prep_seed, "rng seed");
  prep->add_option("--out", prep_out, "output patch directory")->required();
  prep->add_flag("--no-flip", prep_no_flip, "disable flip augmentation");
  prep->add_flag("--no-rotate", prep_no_rotate, "disable rotation augmentation");

  // train
  auto* train = app.add_subcommand("train", "train a model bundle");
  std::string tr_config;
  train->add_option("--config", tr_config, "key=value file with option defaults (flags win)");
  std::string tr_algorithm, tr_data, tr_out, tr_log, tr_init;
  mdc::TrainingConfig tcfg;
  train->add_option("--algorithm", tr_algorithm, "learning procedure: 1, 2 or base")
      ->required()
      ->check(CLI::IsMember({"1", "2", "base"}));
  train->add_option("--data", tr_data, "patch directory from prepare-data")->required();
  train->add_option("--qf", tcfg.qf, "JPEG quality factor")->required();
  train->add_option("--iters", tcfg.iterations, "outer iterations");
  train->add_option("--epochs", tcfg.epochs, "epochs per phase");
  train->add_option("--epochs-gen", tcfg.epochs_generator, "generator epochs (default: --epochs)");
  train->add_option("--batch", tcfg.batch, "batch size");
  train->add_option("--widths", tcfg.width, "channel width of every hidden layer");
  train->add_option("--lr0", tcfg.lr0, "initial learning rate");
  train->add_option("--seed", tcfg.seed, "rng seed");
  train->add_option("--out", tr_out, "output checkpoint path")->required();
  train->add_option("--log", tr_log, "train log path (default: <out>.log.jsonl)");
  train->add_option("--init", tr_init, "checkpoint to resume from");

  // encode
  auto* enc = app.add_subcommand("encode", "split an image into two JPEG description streams");
  std::string en_image, en_ck, en_out = ".";
  int en_qf = 10;
  enc->add_option("--image", en_image, "input image")->required();
  enc->add_option("--checkpoint", en_ck, "model checkpoint")->required();
  enc->add_option("--qf", en_qf, "JPEG quality factor")->required();
  enc->add_option("--out", en_out, "output directory");

  // decode
  auto* dec = app.add_subcommand("decode", "reconstruct from received description streams");
  std::string de_meta, de_ck, de_mode, de_out, de_sa, de_sb;
  dec->add_option("--meta", de_meta, "sidecar json written by encode")->required();
  dec->add_option("--checkpoint", de_ck, "model checkpoint")->required();
  dec->add_option("--mode", de_mode, "sideA, sideB or central")
      ->required()
      ->check(CLI::IsMember({"sideA", "sideB", "central"}));
  dec->add_option("--out", de_out, "output image (.png or .pgm)")->required();
  dec->add_option("--stream-a", de_sa, "override stream A path");
  dec->add_option("--stream-b", de_sb, "override stream B path");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "rate-distortion sweep over a corpus");
  std::string ev_config;
  ev->add_option("--config", ev_config, "key=value file with option defaults (flags win)");
  std::string ev_ck, ev_corpus, ev_qfs, ev_method = "ours", ev_csv, ev_plots;
  int ev_jobs = 1;
  ev->add_option("--checkpoint", ev_ck, "model checkpoint")->required();
  ev->add_option("--corpus", ev_corpus, "directory of test images")->required();
  ev->add_option("--qfs", ev_qfs, "comma-separated quality factors (default per method)");
  ev->add_option("--method", ev_method, "ours (generator) or base (poly-phase)")
      ->check(CLI::IsMember({"ours", "base"}));
  ev->add_option("--out", ev_csv, "output CSV path")->required();
  ev->add_option("--plots", ev_plots, "also write SVG panels with this prefix");
  ev->add_option("--jobs", ev_jobs, "worker threads")->check(CLI::PositiveNumber);

  // simulate
  auto* sim = app.add_subcommand("simulate", "two-channel erasure simulation for one image");
  std::string si_ck, si_image, si_json;
  int si_qf = 10;
  double si_pa = 0.0, si_pb = 0.0;
  long si_trials = 10000;
  uint64_t si_seed = 1;
  sim->add_option("--checkpoint", si_ck, "model checkpoint")->required();
  sim->add_option("--image", si_image, "input image")->required();
  sim->add_option("--qf", si_qf, "JPEG quality factor")->required();
  sim->add_option("--ploss-a", si_pa, "loss probability of channel A")->required();
  sim->add_option("--ploss-b", si_pb, "loss probability of channel B")->required();
  sim->add_option("--trials", si_trials, "Monte-Carlo trials");
  sim->add_option("--seed", si_seed, "rng seed");
  sim->add_option("--json", si_json, "also write a json report");

  // plot
  auto* pl = app.add_subcommand("plot", "render SVG panels from an evaluation CSV");
  std::string pl_csv, pl_prefix;
  pl->add_option("--csv", pl_csv, "evaluation CSV")->required();
  pl->add_option("--out", pl_prefix, "output file prefix")->required();

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = splice_config_tokens(app, args);
    std::reverse(args.begin(), args.end());  // CLI11 consumes tokens back to front
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }

  try {
    if (*prep) {
      return cmd_prepare_data(prep_corpus, prep_patch, prep_total, prep_seed, prep_out,
                              prep_no_flip, prep_no_rotate);
    }
    if (*train) {
      if (tr_log.empty()) tr_log = tr_out + ".log.jsonl";
      if (tr_algorithm == "2") {  // joint training defaults: one pass, more epochs
        if (!train->count("--iters")) tcfg.iterations = 1;
        if (!train->count("--epochs")) tcfg.epochs = 4;
      }
      return cmd_train(tr_algorithm, tr_data, tcfg, tr_out, tr_log, tr_init);
    }
    if (*enc) return cmd_encode(en_image, en_ck, en_qf, en_out);
    if (*dec) return cmd_decode(de_meta, de_ck, de_mode, de_out, de_sa, de_sb);
    if (*ev) return cmd_evaluate(ev_ck, ev_corpus, ev_qfs, ev_method, ev_csv, ev_plots, ev_jobs);
    if (*sim) return cmd_simulate(si_ck, si_image, si_qf, si_pa, si_pb, si_trials, si_seed, si_json);
    if (*pl) return cmd_plot(pl_csv, pl_prefix);
  } catch (const mdc::PipelineError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
