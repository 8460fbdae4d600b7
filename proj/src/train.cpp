#include "stc/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "stc/checkpoint.hpp"
#include "stc/nn.hpp"
#include "stc/threadpool.hpp"

namespace stc::train {

void SGDConfig::validate() const {
  // lr 0 is allowed: a frozen optimizer is the identity on weights.
  if (!(lr >= 0.0)) throw ValidationError(strfmt("sgd: lr %g must be >= 0", lr));
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw ValidationError(strfmt("sgd: momentum %g outside [0,1)", momentum));
  if (!(weight_decay >= 0.0))
    throw ValidationError(strfmt("sgd: weight_decay %g must be >= 0", weight_decay));
  if (batch_size < 1) throw ValidationError("sgd: batch_size must be >= 1");
  if (epochs < 1) throw ValidationError("sgd: epochs must be >= 1");
}

Metrics metrics_from_counts(int64_t tp, int64_t fp, int64_t fn, int64_t tn) {
  if (tp < 0 || fp < 0 || fn < 0 || tn < 0)
    throw ValidationError("metrics: negative confusion counts");
  Metrics m;
  m.tp = tp;
  m.fp = fp;
  m.fn = fn;
  m.tn = tn;
  if (tp + fp > 0) m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (m.precision && m.recall && *m.precision + *m.recall > 0.0)
    m.fscore = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
  return m;
}

TrainState make_train_state(STCNetModel model, const SGDConfig& cfg) {
  cfg.validate();
  TrainState state;
  state.model = std::move(model);
  state.cfg = cfg;
  for (auto& p : state.model.parameters())
    state.velocity.emplace_back(p.tensor.numel(), 0.0);
  return state;
}

bool sgd_step(TrainState& state) {
  auto params = state.model.parameters();
  for (auto& p : params)
    for (double g : p.tensor.grad())
      if (!std::isfinite(g)) {
        state.skipped_steps++;
        state.model.zero_grads();
        return false;
      }
  for (size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].tensor.mutable_data();
    auto g = params[i].tensor.grad();
    auto& v = state.velocity[i];
    double wd = params[i].decay ? state.cfg.weight_decay : 0.0;
    for (size_t j = 0; j < v.size(); ++j) {
      v[j] = state.cfg.momentum * v[j] + g[j] + wd * w[j];
      w[j] -= state.cfg.lr * v[j];
    }
  }
  state.model.zero_grads();
  return true;
}

ModelInput preprocess_clip(const video::Clip& clip, const PreprocessSpec& pre,
                           int input_resolution, bool training, uint64_t stream_seed) {
  const video::Clip* src = &clip;
  video::Clip augmented;
  if (training) {
    video::AugmentSpec aug = pre.augment;
    aug.out_resolution = input_resolution;
    aug.rng_seed = mix_seed(stream_seed, 0xA06u);
    augmented = video::augment(clip, aug);
    src = &augmented;
  }
  auto indices = video::sample_frames(
      src->t, pre.sampler, training ? pre.train_sample_mode : video::SampleMode::Center,
      mix_seed(stream_seed, 0x5A3Bu));
  ModelInput input;
  input.rgb = ops::scale(nullptr, video::rgb_frames(*src, indices), 1.0 / 255.0);
  input.res = ops::scale(nullptr, video::residual_frames(*src, indices, pre.residual),
                         1.0 / 255.0);
  input.label = src->label;
  return input;
}

double train_epoch(TrainState& state, const video::ClipDataset& dataset,
                   const PreprocessSpec& pre, std::ostream* log) {
  if (dataset.clips.empty()) throw ValidationError("train_epoch: empty dataset");
  STCNetModel& model = state.model;
  model.set_training(true);
  int r = model.config.input_resolution;

  std::vector<int> order;
  order.reserve(dataset.clips.size());
  for (int i = 0; i < static_cast<int>(dataset.clips.size()); ++i) {
    if (dataset.clips[i].t < pre.sampler.n_segments) {
      state.skipped_clips++;
      if (log)
        *log << "warning: clip " << dataset.clips[i].source_id << " has "
             << dataset.clips[i].t << " frames < " << pre.sampler.n_segments
             << " segments, skipped\n";
      continue;
    }
    order.push_back(i);
  }
  if (order.empty()) throw ValidationError("train_epoch: no clip is long enough to sample");

  // Seeded Fisher-Yates; the permutation depends on (seed, epoch) only so
  // every variant sees identical data order.
  Rng shuffle_rng(mix_seed(state.cfg.seed, static_cast<uint64_t>(state.epoch), 0xE30Cu));
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[shuffle_rng.uniform_int(0, static_cast<int64_t>(i) - 1)]);

  double loss_sum = 0.0;
  int64_t n_clips = 0;
  for (size_t b0 = 0; b0 < order.size(); b0 += state.cfg.batch_size) {
    size_t b1 = std::min(order.size(), b0 + state.cfg.batch_size);
    int bn = static_cast<int>(b1 - b0);

    // Per-clip preprocessing is pure and seed-indexed, so the batch can fan
    // out across the pool.
    std::vector<ModelInput> inputs(bn);
    ThreadPool::global().parallel_for(0, bn, [&](int64_t i0, int64_t i1) {
      for (int64_t i = i0; i < i1; ++i) {
        int clip_idx = order[b0 + i];
        inputs[i] = preprocess_clip(
            dataset.clips[clip_idx], pre, r, true,
            mix_seed(state.cfg.seed, static_cast<uint64_t>(state.epoch),
                     static_cast<uint64_t>(clip_idx)));
      }
    });

    for (int i = 0; i < bn; ++i) {
      Tape tape;
      Tensor logits = model.forward(&tape, inputs[i].rgb, inputs[i].res);
      std::array<int, 1> label{inputs[i].label};
      Tensor loss = nn::softmax_cross_entropy(&tape, logits, label);
      loss_sum += loss.value();
      ++n_clips;
      // Mean over the batch: scale each clip loss before backprop.
      tape.backward(ops::scale(&tape, loss, 1.0 / bn));
    }
    if (!sgd_step(state) && log)
      *log << "warning: non-finite gradient, step " << state.skipped_steps
           << " rejected\n";
  }
  state.epoch++;
  return loss_sum / static_cast<double>(n_clips);
}

EvalReport evaluate(STCNetModel& model, const video::ClipDataset& dataset,
                    const PreprocessSpec& pre) {
  bool was_training = model.training();
  model.set_training(false);
  int r = model.config.input_resolution;
  int n = static_cast<int>(dataset.clips.size());

  std::vector<int8_t> predictions(n, -1);
  ThreadPool::global().parallel_for(0, n, [&](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) {
      const video::Clip& clip = dataset.clips[i];
      if (clip.t < pre.sampler.n_segments) continue;  // unsampleable, skipped
      ModelInput in = preprocess_clip(clip, pre, r, false, 0);
      Tensor logits = model.forward(nullptr, in.rgb, in.res);
      int best = 0;
      for (int k = 1; k < model.config.n_classes; ++k)
        if (logits[k] > logits[best]) best = k;
      predictions[i] = static_cast<int8_t>(best);
    }
  });

  std::map<std::string, std::array<int64_t, 4>> counts;  // tp, fp, fn, tn
  std::array<int64_t, 4> total{};
  for (int i = 0; i < n; ++i) {
    if (predictions[i] < 0) continue;
    const video::Clip& clip = dataset.clips[i];
    std::string split = clip.source_id.substr(0, clip.source_id.find('/'));
    int truth = clip.label;
    int pred = predictions[i];
    int slot = truth == 1 ? (pred == 1 ? 0 : 2) : (pred == 1 ? 1 : 3);
    counts[split][slot]++;
    total[slot]++;
  }

  EvalReport report;
  double psum = 0, rsum = 0, fsum = 0;
  int pn = 0, rn = 0, fn_ = 0;
  for (auto& [split, c] : counts) {
    EvalRow row{split, metrics_from_counts(c[0], c[1], c[2], c[3])};
    if (row.m.precision) { psum += *row.m.precision; pn++; }
    if (row.m.recall) { rsum += *row.m.recall; rn++; }
    if (row.m.fscore) { fsum += *row.m.fscore; fn_++; }
    report.splits.push_back(std::move(row));
  }
  report.totals = metrics_from_counts(total[0], total[1], total[2], total[3]);
  if (pn) report.macro_precision = psum / pn;
  if (rn) report.macro_recall = rsum / rn;
  if (fn_) report.macro_fscore = fsum / fn_;

  model.set_training(was_training);
  return report;
}

std::string format_metric(const std::optional<double>& v) {
  return v ? strfmt("%.6f", *v) : "NA";
}

AblationTable run_ablation(const BackboneConfig& config, const SGDConfig& sgd,
                           const video::ClipDataset& train_set,
                           const video::ClipDataset& test_set,
                           std::span<const FusionVariant> variants,
                           std::span<const uint64_t> seeds, const PreprocessSpec& pre,
                           const std::filesystem::path& out_dir, std::ostream* log) {
  if (seeds.empty()) throw ValidationError("run_ablation: needs at least one seed");
  AblationTable table;
  for (FusionVariant variant : variants) {
    for (uint64_t seed : seeds) {
      SGDConfig run_cfg = sgd;
      run_cfg.seed = seed;
      TrainState state = make_train_state(build_model(config, variant, seed), run_cfg);
      AblationRun run;
      run.variant = variant;
      run.seed = seed;
      for (int e = 0; e < run_cfg.epochs; ++e) {
        double loss = train_epoch(state, train_set, pre, log);
        state.history.push_back({state.epoch, loss, std::nullopt});
        if (log)
          *log << variant_name(variant) << " seed " << seed << " epoch " << state.epoch
               << " loss " << strfmt("%.6f", loss) << "\n";
        if (!std::isfinite(loss)) {
          run.diverged = true;
          break;
        }
      }
      if (!run.diverged) run.report = evaluate(state.model, test_set, pre);
      if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        auto file = out_dir / strfmt("ckpt_%s_s%llu.stcw", variant_name(variant),
                                     (unsigned long long)seed);
        save_checkpoint(state.model, state.epoch, file);
        run.checkpoint_file = file.string();
      }
      table.runs.push_back(std::move(run));
    }
  }
  return table;
}

std::string metrics_csv(const std::vector<AblationRun>& runs) {
  std::string csv = "variant,seed,split,tp,fp,fn,tn,precision,recall,fscore\n";
  for (const AblationRun& run : runs) {
    auto row = [&](const std::string& split, const Metrics& m,
                   const std::optional<double>& p, const std::optional<double>& r,
                   const std::optional<double>& f) {
      csv += strfmt("%s,%llu,%s,%lld,%lld,%lld,%lld,%s,%s,%s\n", variant_name(run.variant),
                    (unsigned long long)run.seed, split.c_str(), (long long)m.tp,
                    (long long)m.fp, (long long)m.fn, (long long)m.tn,
                    format_metric(p).c_str(), format_metric(r).c_str(),
                    format_metric(f).c_str());
    };
    if (run.diverged) {
      csv += strfmt("%s,%llu,diverged,0,0,0,0,NA,NA,NA\n", variant_name(run.variant),
                    (unsigned long long)run.seed);
      continue;
    }
    for (const EvalRow& er : run.report.splits)
      row(er.split, er.m, er.m.precision, er.m.recall, er.m.fscore);
    row("average", run.report.totals, run.report.macro_precision,
        run.report.macro_recall, run.report.macro_fscore);
  }
  return csv;
}

std::string ablation_summary_csv(const AblationTable& table) {
  // Collect split names and group runs per variant.
  std::vector<std::string> split_names;
  std::map<std::string, std::vector<const AblationRun*>> by_variant;
  std::vector<std::string> variant_order;
  for (const AblationRun& run : table.runs) {
    std::string v = variant_name(run.variant);
    if (!by_variant.count(v)) variant_order.push_back(v);
    by_variant[v].push_back(&run);
    for (const EvalRow& er : run.report.splits)
      if (std::find(split_names.begin(), split_names.end(), er.split) == split_names.end())
        split_names.push_back(er.split);
  }
  std::sort(split_names.begin(), split_names.end());

  std::string csv = "variant";
  for (auto& s : split_names) csv += "," + s;
  csv += ",average_mean,average_stddev,diverged_runs\n";
  for (const std::string& v : variant_order) {
    csv += v;
    auto& runs = by_variant[v];
    for (auto& split : split_names) {
      double sum = 0;
      int cnt = 0;
      for (const AblationRun* run : runs) {
        if (run->diverged) continue;
        for (const EvalRow& er : run->report.splits)
          if (er.split == split && er.m.fscore) {
            sum += *er.m.fscore;
            cnt++;
          }
      }
      csv += "," + (cnt ? strfmt("%.6f", sum / cnt) : std::string("NA"));
    }
    std::vector<double> averages;
    int diverged = 0;
    for (const AblationRun* run : runs) {
      if (run->diverged)
        diverged++;
      else if (run->report.macro_fscore)
        averages.push_back(*run->report.macro_fscore);
    }
    if (averages.empty()) {
      csv += ",NA,NA";
    } else {
      double mean = 0;
      for (double a : averages) mean += a;
      mean /= static_cast<double>(averages.size());
      double var = 0;
      for (double a : averages) var += (a - mean) * (a - mean);
      var /= static_cast<double>(averages.size());
      csv += strfmt(",%.6f,%.6f", mean, std::sqrt(var));
    }
    csv += strfmt(",%d\n", diverged);
  }
  return csv;
}

std::pair<video::ClipDataset, video::ClipDataset> split_dataset(
    const video::ClipDataset& ds, int holdout_every) {
  if (holdout_every < 2) throw ValidationError("split_dataset: holdout_every must be >= 2");
  video::ClipDataset train_set, test_set;
  for (size_t i = 0; i < ds.clips.size(); ++i) {
    if (static_cast<int>(i % holdout_every) == holdout_every - 1)
      test_set.clips.push_back(ds.clips[i]);
    else
      train_set.clips.push_back(ds.clips[i]);
  }
  return {std::move(train_set), std::move(test_set)};
}

}  // namespace stc::train
