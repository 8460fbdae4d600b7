#include <chrono>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "run_config.hpp"
#include "stc/checkpoint.hpp"
#include "stc/explain.hpp"
#include "stc/gradcheck.hpp"
#include "stc/kernels.hpp"
#include "stc/train.hpp"

namespace {

using namespace stc;

void write_text(const std::filesystem::path& path, const std::string& text) {
  io::write_file(path, std::vector<uint8_t>(text.begin(), text.end()));
}

int cmd_synth(const std::string& out, int clips, int frames, int resolution, double mix,
              uint64_t seed) {
  video::SyntheticSpec spec{clips, frames, resolution, mix, seed};
  video::ClipDataset ds = video::synth_generate(spec);
  video::save_dataset(ds, out);
  std::cout << "wrote " << ds.clips.size() << " clips to " << out << "\n";
  return 0;
}

// Preprocessed set: magic "STCP1", u32 clip count; per clip u8 label,
// u32 source_id length + UTF-8, then two tensor records: sampled RGB frames
// (raw 0..255) and residual frames (0..beta), both [N,3,H,W] f64.
int cmd_preprocess(const std::string& in, const std::string& out, int segments,
                   double alpha, double beta, const std::string& mode) {
  video::ClipDataset ds = video::load_dataset(in);
  video::SamplerSpec sampler{segments};
  video::ResidualSpec residual{alpha, beta};
  video::SampleMode smode = mode == "center" ? video::SampleMode::Center
                                             : video::SampleMode::Random;
  if (mode != "center" && mode != "random")
    throw ValidationError(strfmt("preprocess: mode '%s' not center|random", mode.c_str()));
  io::ByteWriter w;
  w.str("STCP1");
  w.u32(static_cast<uint32_t>(ds.clips.size()));
  int skipped = 0;
  for (size_t i = 0; i < ds.clips.size(); ++i) {
    const video::Clip& clip = ds.clips[i];
    if (clip.t < segments) {
      std::cerr << "warning: clip " << clip.source_id << " too short, skipped\n";
      skipped++;
      continue;
    }
    auto indices = video::sample_frames(clip.t, sampler, smode,
                                        mix_seed(0x9E9Eu, static_cast<uint64_t>(i)));
    w.u8(clip.label);
    w.u32(static_cast<uint32_t>(clip.source_id.size()));
    w.str(clip.source_id);
    io::write_tensor(w, video::rgb_frames(clip, indices));
    io::write_tensor(w, video::residual_frames(clip, indices, residual));
  }
  io::write_file(out, w.buffer());
  std::cout << "preprocessed " << (ds.clips.size() - skipped) << " clips to " << out << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& dataset_override,
              const std::string& out_dir_override, int holdout_every) {
  cli::RunConfig cfg = cli::load_run_config(config_path);
  if (!dataset_override.empty()) cfg.dataset = dataset_override;
  if (!out_dir_override.empty()) cfg.out_dir = out_dir_override;
  if (cfg.dataset.empty())
    throw ValidationError("train: no dataset (config paths.dataset or --dataset)");

  video::ClipDataset ds = video::load_dataset(cfg.dataset);
  auto [train_set, test_set] = train::split_dataset(ds, holdout_every);
  std::filesystem::create_directories(cfg.out_dir);

  train::TrainState state =
      train::make_train_state(build_model(cfg.model, cfg.variant, cfg.seed), cfg.optimizer);
  train::PreprocessSpec pre = cfg.preprocess();

  std::string log;
  for (int e = 0; e < cfg.optimizer.epochs; ++e) {
    double loss = train::train_epoch(state, train_set, pre, &std::cerr);
    train::EvalReport report = train::evaluate(state.model, test_set, pre);
    std::string line = strfmt("%d,%.6f,%s", state.epoch, loss,
                              train::format_metric(report.macro_fscore).c_str());
    log += line + "\n";
    std::cout << line << "\n";
    state.history.push_back({state.epoch, loss, report.macro_fscore});
  }
  write_text(std::filesystem::path(cfg.out_dir) / "train.log", log);

  auto ckpt = std::filesystem::path(cfg.out_dir) / "checkpoint.stcw";
  save_checkpoint(state.model, state.epoch, ckpt);

  train::AblationRun run;
  run.variant = cfg.variant;
  run.seed = cfg.seed;
  run.report = train::evaluate(state.model, test_set, pre);
  write_text(std::filesystem::path(cfg.out_dir) / "metrics.csv", train::metrics_csv({run}));
  std::cout << "checkpoint: " << ckpt.string() << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& dataset_path,
             const std::string& out, int segments, double alpha, double beta) {
  STCNetModel model = load_checkpoint(ckpt_path);
  video::ClipDataset ds = video::load_dataset(dataset_path);
  train::PreprocessSpec pre;
  pre.sampler.n_segments = segments;
  pre.residual = {alpha, beta};
  train::EvalReport report = train::evaluate(model, ds, pre);

  train::AblationRun run;
  run.variant = model.variant;
  run.seed = model.seed;
  run.report = report;
  std::string csv = train::metrics_csv({run});
  if (out.empty())
    std::cout << csv;
  else
    write_text(out, csv);
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& dataset_override,
               const std::string& out_dir_override, const std::string& variants_arg,
               const std::string& seeds_arg, int holdout_every) {
  cli::RunConfig cfg = cli::load_run_config(config_path);
  if (!dataset_override.empty()) cfg.dataset = dataset_override;
  if (!out_dir_override.empty()) cfg.out_dir = out_dir_override;
  if (cfg.dataset.empty())
    throw ValidationError("ablate: no dataset (config paths.dataset or --dataset)");

  std::vector<FusionVariant> variants;
  for (size_t pos = 0; pos < variants_arg.size();) {
    size_t comma = variants_arg.find(',', pos);
    if (comma == std::string::npos) comma = variants_arg.size();
    variants.push_back(variant_from_name(variants_arg.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  std::vector<uint64_t> seeds;
  for (size_t pos = 0; pos < seeds_arg.size();) {
    size_t comma = seeds_arg.find(',', pos);
    if (comma == std::string::npos) comma = seeds_arg.size();
    seeds.push_back(std::stoull(seeds_arg.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  if (variants.empty() || seeds.empty())
    throw ValidationError("ablate: need at least one variant and one seed");

  video::ClipDataset ds = video::load_dataset(cfg.dataset);
  auto [train_set, test_set] = train::split_dataset(ds, holdout_every);
  std::filesystem::create_directories(cfg.out_dir);

  train::AblationTable table =
      train::run_ablation(cfg.model, cfg.optimizer, train_set, test_set, variants, seeds,
                          cfg.preprocess(), cfg.out_dir, &std::cerr);
  write_text(std::filesystem::path(cfg.out_dir) / "metrics.csv",
             train::metrics_csv(table.runs));
  std::string summary = train::ablation_summary_csv(table);
  write_text(std::filesystem::path(cfg.out_dir) / "summary.csv", summary);
  std::cout << summary;
  return 0;
}

int cmd_gradcheck(int seeds, double eps) {
  double tolerance = 1e-4;
  auto results = gradcheck::run_op_suite(seeds, eps);
  results.push_back(gradcheck::run_model_check(0xACCE55u, eps));
  bool ok = true;
  std::cout << strfmt("%-24s %s\n", "op", "max_rel_err");
  for (auto& r : results) {
    std::cout << strfmt("%-24s %.3e %s\n", r.name.c_str(), r.max_rel_err,
                        r.max_rel_err <= tolerance ? "ok" : "FAIL");
    ok = ok && r.max_rel_err <= tolerance;
  }
  return ok ? 0 : 2;
}

int cmd_gradcam(const std::string& ckpt_path, const std::string& dataset_path,
                const std::string& clip_id, const std::string& path_arg, int target_class,
                const std::string& out_dir, int segments, double alpha, double beta) {
  STCNetModel model = load_checkpoint(ckpt_path);
  video::ClipDataset ds = video::load_dataset(dataset_path);
  const video::Clip* clip = nullptr;
  for (const auto& c : ds.clips)
    if (c.source_id == clip_id) {
      clip = &c;
      break;
    }
  if (!clip)
    throw ValidationError(strfmt("gradcam: clip '%s' not found in %s", clip_id.c_str(),
                                 dataset_path.c_str()));
  explain::PathSel path = explain::path_from_name(path_arg);

  train::PreprocessSpec pre;
  pre.sampler.n_segments = segments;
  pre.residual = {alpha, beta};
  train::ModelInput in =
      train::preprocess_clip(*clip, pre, model.config.input_resolution, false, 0);
  explain::GradCamResult cam = explain::grad_cam(model, in.rgb, in.res, target_class, path);

  std::filesystem::create_directories(out_dir);
  auto dir = std::filesystem::path(out_dir);
  int res = model.config.input_resolution;
  for (size_t f = 0; f < cam.frames.size(); ++f)
    explain::export_heatmap(cam.frames[f], res, dir / strfmt("heatmap_f%zu.pgm", f),
                            dir / strfmt("heatmap_f%zu.json", f));
  explain::export_heatmap(cam.aggregate, res, dir / "heatmap_aggregate.pgm",
                          dir / "heatmap_aggregate.json");
  auto [cy, cx] = explain::argmax_cell(cam.aggregate);
  std::cout << "wrote " << cam.frames.size() << "+1 heatmaps to " << out_dir
            << " (aggregate argmax cell " << cy << "," << cx << ")\n";
  return 0;
}

int cmd_bench(const std::string& config_path, int iters) {
  cli::RunConfig cfg = cli::load_run_config(config_path);
  STCNetModel model = build_model(cfg.model, cfg.variant, cfg.seed);
  model.set_training(false);
  int r = cfg.model.input_resolution;
  int t = cfg.model.n_frames;
  Rng rng(cfg.seed);
  std::vector<double> buf(static_cast<size_t>(t) * 3 * r * r);
  for (auto& v : buf) v = rng.uniform();
  Tensor rgb(Shape{t, 3, r, r}, buf);
  for (auto& v : buf) v = rng.uniform();
  Tensor res(Shape{t, 3, r, r}, std::move(buf));

  for (int i = 0; i < 5; ++i) model.forward(nullptr, rgb, res);  // warmup
  auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < iters; ++i) model.forward(nullptr, rgb, res);
  auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start);
  double ms = elapsed.count() * 1000.0 / iters;
  std::cout << strfmt("variant=%s isa=%s iters=%d\n", variant_name(cfg.variant),
                      kernels::isa_name(kernels::active_isa()), iters);
  std::cout << strfmt("latency_ms=%.3f throughput_clips_per_s=%.2f\n", ms, 1000.0 / ms);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"STCNet: two-path video smoke detection on residual frames"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic smoke/distractor dataset");
  std::string synth_out;
  int synth_clips = 400, synth_frames = 16, synth_res = 56;
  double synth_mix = 0.5;
  uint64_t synth_seed = 0;
  synth->add_option("--out", synth_out, "output container file")->required();
  synth->add_option("--clips", synth_clips, "number of clips");
  synth->add_option("--frames", synth_frames, "frames per clip");
  synth->add_option("--resolution", synth_res, "frame resolution");
  synth->add_option("--mix", synth_mix, "positive class fraction");
  synth->add_option("--seed", synth_seed, "generator seed");

  // preprocess
  auto* prep = app.add_subcommand("preprocess", "sample frames and compute residuals");
  std::string prep_in, prep_out, prep_mode = "center";
  int prep_segments = 8;
  double prep_alpha = 5.0, prep_beta = 255.0;
  prep->add_option("--in", prep_in, "input clip container")->required();
  prep->add_option("--out", prep_out, "output preprocessed file")->required();
  prep->add_option("--segments", prep_segments, "segments per clip");
  prep->add_option("--alpha", prep_alpha, "residual expanding coefficient");
  prep->add_option("--beta", prep_beta, "residual clip ceiling");
  prep->add_option("--mode", prep_mode, "center|random sampling");

  // train
  auto* tr = app.add_subcommand("train", "train a model from a run config");
  std::string tr_config, tr_dataset, tr_outdir;
  int tr_holdout = 5;
  tr->add_option("--config", tr_config, "run config JSON")->required();
  tr->add_option("--dataset", tr_dataset, "dataset override");
  tr->add_option("--out-dir", tr_outdir, "output directory override");
  tr->add_option("--holdout-every", tr_holdout, "every k-th clip goes to the eval split");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  std::string ev_ckpt, ev_dataset, ev_out;
  int ev_segments = 8;
  double ev_alpha = 5.0, ev_beta = 255.0;
  ev->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
  ev->add_option("--dataset", ev_dataset, "clip container")->required();
  ev->add_option("--out", ev_out, "metrics CSV file (stdout when omitted)");
  ev->add_option("--segments", ev_segments, "segments per clip");
  ev->add_option("--alpha", ev_alpha, "residual expanding coefficient");
  ev->add_option("--beta", ev_beta, "residual clip ceiling");

  // ablate
  auto* ab = app.add_subcommand("ablate", "train and compare fusion variants");
  std::string ab_config, ab_dataset, ab_outdir;
  std::string ab_variants = "full,a,b,c,spatial_only", ab_seeds = "1,2,3";
  int ab_holdout = 5;
  ab->add_option("--config", ab_config, "run config JSON")->required();
  ab->add_option("--dataset", ab_dataset, "dataset override");
  ab->add_option("--out-dir", ab_outdir, "output directory override");
  ab->add_option("--variants", ab_variants, "comma list: full,a,b,c,spatial_only");
  ab->add_option("--seeds", ab_seeds, "comma list of training seeds");
  ab->add_option("--holdout-every", ab_holdout, "every k-th clip goes to the eval split");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  int gc_seeds = 20;
  double gc_eps = 1e-4;
  gc->add_option("--seeds", gc_seeds, "random seeds per op")->check(CLI::PositiveNumber);
  gc->add_option("--eps", gc_eps, "central difference step");

  // gradcam
  auto* gcam = app.add_subcommand("gradcam", "export Grad-CAM heatmaps for one clip");
  std::string gcam_ckpt, gcam_dataset, gcam_clip, gcam_path = "temporal", gcam_out = ".";
  int gcam_class = 1, gcam_segments = 8;
  double gcam_alpha = 5.0, gcam_beta = 255.0;
  gcam->add_option("--checkpoint", gcam_ckpt, "model checkpoint")->required();
  gcam->add_option("--dataset", gcam_dataset, "clip container")->required();
  gcam->add_option("--clip", gcam_clip, "clip source_id")->required();
  gcam->add_option("--path", gcam_path, "spatial|temporal");
  gcam->add_option("--class", gcam_class, "target class index");
  gcam->add_option("--out", gcam_out, "output directory");
  gcam->add_option("--segments", gcam_segments, "segments per clip");
  gcam->add_option("--alpha", gcam_alpha, "residual expanding coefficient");
  gcam->add_option("--beta", gcam_beta, "residual clip ceiling");

  // bench
  auto* bench = app.add_subcommand("bench", "forward latency and throughput");
  std::string bench_config;
  int bench_iters = 50;
  bench->add_option("--config", bench_config, "run config JSON")->required();
  bench->add_option("--iters", bench_iters, "timed iterations (>= 50)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;  // bad flags are validation errors
  }

  try {
    if (synth->parsed())
      return cmd_synth(synth_out, synth_clips, synth_frames, synth_res, synth_mix, synth_seed);
    if (prep->parsed())
      return cmd_preprocess(prep_in, prep_out, prep_segments, prep_alpha, prep_beta, prep_mode);
    if (tr->parsed()) return cmd_train(tr_config, tr_dataset, tr_outdir, tr_holdout);
    if (ev->parsed())
      return cmd_eval(ev_ckpt, ev_dataset, ev_out, ev_segments, ev_alpha, ev_beta);
    if (ab->parsed())
      return cmd_ablate(ab_config, ab_dataset, ab_outdir, ab_variants, ab_seeds, ab_holdout);
    if (gc->parsed()) return cmd_gradcheck(gc_seeds, gc_eps);
    if (gcam->parsed())
      return cmd_gradcam(gcam_ckpt, gcam_dataset, gcam_clip, gcam_path, gcam_class, gcam_out,
                         gcam_segments, gcam_alpha, gcam_beta);
    if (bench->parsed()) {
      if (bench_iters < 50) throw stc::ValidationError("bench: --iters must be >= 50");
      return cmd_bench(bench_config, bench_iters);
    }
  } catch (const stc::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
