#pragma once

#include <optional>
#include <ostream>

#include "stc/stcnet.hpp"
#include "stc/video.hpp"

namespace stc::train {

struct SGDConfig {
  double lr = 0.001;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  int batch_size = 3;
  int epochs = 10;
  uint64_t seed = 0;

  void validate() const;
};

// Binary confusion counts for the positive (smoke) class plus the derived
// ratios. Ratios are empty when their denominator is zero.
struct Metrics {
  int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::optional<double> precision, recall, fscore;
};

Metrics metrics_from_counts(int64_t tp, int64_t fp, int64_t fn, int64_t tn);

struct EvalRow {
  std::string split;
  Metrics m;
};

struct EvalReport {
  std::vector<EvalRow> splits;  // sorted by split name
  Metrics totals;               // counts summed over splits, ratios from totals
  // Macro means over splits whose metric is defined (the paper's "Average").
  std::optional<double> macro_precision, macro_recall, macro_fscore;
};

struct EpochStats {
  int epoch;
  double loss;
  std::optional<double> eval_fscore;
};

struct TrainState {
  STCNetModel model;
  SGDConfig cfg;
  std::vector<std::vector<double>> velocity;  // parallel to model.parameters()
  int epoch = 0;
  int skipped_steps = 0;  // rejected non-finite-gradient steps
  int skipped_clips = 0;  // clips shorter than the sampler segment count
  std::vector<EpochStats> history;
};

TrainState make_train_state(STCNetModel model, const SGDConfig& cfg);

// Classic momentum with coupled weight decay: v <- momentum*v + g + wd*w
// (decay on conv/linear weights only), then w <- w - lr*v. Gradients are
// zeroed afterwards. A non-finite gradient rejects the whole step, leaving
// weights and velocities untouched; returns false in that case.
bool sgd_step(TrainState& state);

struct PreprocessSpec {
  video::SamplerSpec sampler;
  video::ResidualSpec residual;
  video::AugmentSpec augment;  // training only; out_resolution is forced to the model input
  video::SampleMode train_sample_mode = video::SampleMode::Random;
};

struct ModelInput {
  Tensor rgb, res;  // [T,3,R,R], scaled to [0,1]
  int label = 0;
};

// Augment (training only) -> segment-sample -> residual -> scale to [0,1].
// stream_seed isolates the clip's RNG so batches can preprocess in parallel.
ModelInput preprocess_clip(const video::Clip& clip, const PreprocessSpec& pre,
                           int input_resolution, bool training, uint64_t stream_seed);

// One pass over the dataset: seeded shuffle, batches of cfg.batch_size, one
// sgd_step per batch with the batch-mean loss. Returns the mean loss over all
// processed clips. Clips shorter than the segment count are skipped with a
// warning on `log` (when given).
double train_epoch(TrainState& state, const video::ClipDataset& dataset,
                   const PreprocessSpec& pre, std::ostream* log = nullptr);

// Deterministic evaluation: center sampling, no augmentation, BN running
// stats; never mutates the model. Splits group clips by the source_id prefix
// before the first '/'.
EvalReport evaluate(STCNetModel& model, const video::ClipDataset& dataset,
                    const PreprocessSpec& pre);

struct AblationRun {
  FusionVariant variant;
  uint64_t seed;
  bool diverged = false;
  EvalReport report;
  std::string checkpoint_file;
};

struct AblationTable {
  std::vector<AblationRun> runs;
};

// Trains every (variant, seed) pair with identical data order and evaluates
// on the test split. Checkpoints are persisted under out_dir (empty path
// disables persistence). Divergence (non-finite epoch loss) is recorded on
// the run, not fatal.
AblationTable run_ablation(const BackboneConfig& config, const SGDConfig& sgd,
                           const video::ClipDataset& train_set,
                           const video::ClipDataset& test_set,
                           std::span<const FusionVariant> variants,
                           std::span<const uint64_t> seeds, const PreprocessSpec& pre,
                           const std::filesystem::path& out_dir,
                           std::ostream* log = nullptr);

// CSV with header variant,seed,split,tp,fp,fn,tn,precision,recall,fscore;
// undefined ratios print NA. One row per split plus an "average" row carrying
// total counts and macro-averaged ratios.
std::string metrics_csv(const std::vector<AblationRun>& runs);

// Per-variant summary in the shape of the paper's variant table: mean F-score
// per split over seeds, then mean and stddev of the per-seed averages.
std::string ablation_summary_csv(const AblationTable& table);

// Deterministic train/test split: every clip whose index satisfies
// i % holdout_every == holdout_every - 1 goes to the test set.
std::pair<video::ClipDataset, video::ClipDataset> split_dataset(
    const video::ClipDataset& ds, int holdout_every);

std::string format_metric(const std::optional<double>& v);

}  // namespace stc::train
