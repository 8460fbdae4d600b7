#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "stc/checkpoint.hpp"
#include "stc/train.hpp"

using namespace stc;
using namespace stc::train;

namespace {

TrainState nano_state(SGDConfig cfg, FusionVariant variant = FusionVariant::Full,
                      uint64_t seed = 1) {
  return make_train_state(build_model(BackboneConfig::nano(), variant, seed), cfg);
}

void fill_params(STCNetModel& model, double w, double g) {
  for (auto& p : model.parameters()) {
    std::fill(p.tensor.mutable_data().begin(), p.tensor.mutable_data().end(), w);
    std::fill(p.tensor.grad().begin(), p.tensor.grad().end(), g);
  }
}

PreprocessSpec nano_preprocess() {
  PreprocessSpec pre;
  pre.sampler.n_segments = 2;
  pre.augment.crop_scale_range = {0.9, 1.0};
  pre.augment.flip_prob = 0.5;
  return pre;
}

video::ClipDataset nano_dataset(int n, uint64_t seed, double mix = 0.5) {
  return video::synth_generate({n, 6, 32, mix, seed});
}

std::vector<double> snapshot(STCNetModel& model) {
  std::vector<double> all;
  for (auto& p : model.parameters())
    all.insert(all.end(), p.tensor.data().begin(), p.tensor.data().end());
  for (auto& b : model.buffers()) all.insert(all.end(), b.data->begin(), b.data->end());
  return all;
}

}  // namespace

TEST_SUITE_BEGIN("train");

TEST_CASE("sgd_step: plain step, momentum recurrence, velocity decay") {
  SGDConfig cfg;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.0;
  cfg.lr = 0.1;
  TrainState state = nano_state(cfg);
  fill_params(state.model, 1.0, 0.5);
  REQUIRE(sgd_step(state));
  for (auto& p : state.model.parameters())
    for (double w : p.tensor.data()) CHECK(w == doctest::Approx(0.95).epsilon(1e-15));

  // Hand-unrolled two-step momentum: v1=1, w1=-0.1; v2=1.9, w2=-0.29.
  cfg.momentum = 0.9;
  TrainState m = nano_state(cfg);
  fill_params(m.model, 0.0, 1.0);
  REQUIRE(sgd_step(m));
  for (auto& p : m.model.parameters())
    for (double w : p.tensor.data()) CHECK(w == doctest::Approx(-0.1).epsilon(1e-12));
  for (auto& p : m.model.parameters())
    std::fill(p.tensor.grad().begin(), p.tensor.grad().end(), 1.0);
  REQUIRE(sgd_step(m));
  for (auto& p : m.model.parameters())
    for (double w : p.tensor.data()) CHECK(w == doctest::Approx(-0.29).epsilon(1e-12));

  // g = 0: velocity (and the step) decays geometrically by the momentum.
  TrainState d = nano_state(cfg);
  fill_params(d.model, 0.0, 0.0);
  std::fill(d.velocity[0].begin(), d.velocity[0].end(), 1.0);
  double expected_w = 0.0, v = 1.0;
  for (int step = 0; step < 5; ++step) {
    REQUIRE(sgd_step(d));
    v *= cfg.momentum;
    expected_w -= cfg.lr * v;
    CHECK(d.velocity[0][0] == doctest::Approx(v).epsilon(1e-12));
  }
  CHECK(d.model.parameters()[0].tensor.data()[0] ==
        doctest::Approx(expected_w).epsilon(1e-12));
}

TEST_CASE("sgd_step with lr=0 is the identity on weights") {
  SGDConfig cfg;
  cfg.lr = 0.0;
  TrainState state = nano_state(cfg);
  auto before = snapshot(state.model);
  for (auto& p : state.model.parameters())
    std::fill(p.tensor.grad().begin(), p.tensor.grad().end(), 0.35);
  REQUIRE(sgd_step(state));
  CHECK(snapshot(state.model) == before);
}

TEST_CASE("weight decay applies to conv/linear weights only") {
  SGDConfig cfg;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.1;
  cfg.lr = 1.0;
  TrainState state = nano_state(cfg);
  fill_params(state.model, 1.0, 0.0);
  REQUIRE(sgd_step(state));
  for (auto& p : state.model.parameters()) {
    double expect = p.decay ? 0.9 : 1.0;
    for (double w : p.tensor.data()) CHECK(w == doctest::Approx(expect).epsilon(1e-15));
    bool is_norm_or_bias = p.name.find("gamma") != std::string::npos ||
                           p.name.find("beta") != std::string::npos ||
                           p.name.find("bias") != std::string::npos;
    CHECK(p.decay == !is_norm_or_bias);
  }
}

TEST_CASE("non-finite gradient rejects the whole step") {
  SGDConfig cfg;
  TrainState state = nano_state(cfg);
  std::fill(state.velocity[3].begin(), state.velocity[3].end(), 0.5);
  auto before = snapshot(state.model);
  auto params = state.model.parameters();
  for (auto& p : params) std::fill(p.tensor.grad().begin(), p.tensor.grad().end(), 1.0);
  params[5].tensor.grad()[0] = std::nan("");
  CHECK_FALSE(sgd_step(state));
  CHECK(snapshot(state.model) == before);
  CHECK(state.velocity[3][0] == 0.5);
  CHECK(state.skipped_steps == 1);
  for (auto& p : state.model.parameters())
    for (double g : p.tensor.grad()) CHECK(g == 0.0);
}

TEST_CASE("fscore arithmetic and degenerate markers") {
  Metrics perfect = metrics_from_counts(10, 0, 0, 0);
  CHECK(*perfect.fscore == doctest::Approx(1.0));
  Metrics m = metrics_from_counts(8, 2, 4, 1);
  CHECK(*m.precision == doctest::Approx(0.8));
  CHECK(*m.recall == doctest::Approx(8.0 / 12.0).epsilon(1e-12));
  CHECK(*m.fscore == doctest::Approx(0.727272727).epsilon(1e-6));
  Metrics degenerate = metrics_from_counts(0, 0, 5, 0);
  CHECK_FALSE(degenerate.precision.has_value());
  CHECK(degenerate.recall.has_value());
  CHECK_FALSE(degenerate.fscore.has_value());
  CHECK_THROWS_AS(metrics_from_counts(-1, 0, 0, 0), ValidationError);
}

TEST_CASE("fscore is invariant under scaling the confusion counts") {
  Rng rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    int64_t tp = rng.uniform_int(1, 50), fp = rng.uniform_int(0, 50),
            fn = rng.uniform_int(0, 50);
    int64_t k = rng.uniform_int(2, 9);
    Metrics a = metrics_from_counts(tp, fp, fn, 0);
    Metrics b = metrics_from_counts(k * tp, k * fp, k * fn, 0);
    CHECK(*a.fscore == doctest::Approx(*b.fscore).epsilon(1e-12));
  }
}

TEST_CASE("train_epoch with lr=0 leaves parameters bit-identical") {
  SGDConfig cfg;
  cfg.lr = 0.0;
  cfg.epochs = 1;
  cfg.batch_size = 3;
  TrainState state = nano_state(cfg);
  video::ClipDataset ds = nano_dataset(8, 3);
  auto params_before = snapshot(state.model);
  train_epoch(state, ds, nano_preprocess());
  // BN running stats do update in train mode; compare parameters only.
  std::vector<double> params_after;
  for (auto& p : state.model.parameters())
    params_after.insert(params_after.end(), p.tensor.data().begin(), p.tensor.data().end());
  CHECK(std::equal(params_after.begin(), params_after.end(), params_before.begin()));
}

TEST_CASE("training is bit-reproducible for a fixed seed") {
  SGDConfig cfg;
  cfg.lr = 0.01;
  cfg.batch_size = 3;
  cfg.seed = 7;
  video::ClipDataset ds = nano_dataset(10, 4);
  TrainState a = nano_state(cfg, FusionVariant::Full, 5);
  TrainState b = nano_state(cfg, FusionVariant::Full, 5);
  double la = train_epoch(a, ds, nano_preprocess());
  double lb = train_epoch(b, ds, nano_preprocess());
  CHECK(la == lb);
  CHECK(snapshot(a.model) == snapshot(b.model));

  SGDConfig cfg2 = cfg;
  cfg2.seed = 8;
  TrainState c = nano_state(cfg2, FusionVariant::Full, 5);
  train_epoch(c, ds, nano_preprocess());
  CHECK(snapshot(c.model) != snapshot(a.model));
}

TEST_CASE("clips shorter than the sampler are skipped with a warning") {
  SGDConfig cfg;
  cfg.lr = 0.01;
  video::ClipDataset ds = nano_dataset(6, 5);
  // Make one clip too short to sample 2 segments.
  ds.clips[2].t = 1;
  ds.clips[2].rgb.resize(ds.clips[2].frame_bytes());
  TrainState state = nano_state(cfg);
  std::ostringstream log;
  train_epoch(state, ds, nano_preprocess(), &log);
  CHECK(state.skipped_clips == 1);
  CHECK(log.str().find("skipped") != std::string::npos);
}

TEST_CASE("training reduces the loss on most seeds") {
  video::ClipDataset ds = nano_dataset(32, 11);
  int improved = 0;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    SGDConfig cfg;
    cfg.lr = 0.01;
    cfg.batch_size = 3;
    cfg.seed = seed;
    TrainState state = nano_state(cfg, FusionVariant::Full, seed);
    double first = train_epoch(state, ds, nano_preprocess());
    double second = train_epoch(state, ds, nano_preprocess());
    if (second < first) ++improved;
  }
  CHECK(improved >= 4);
}

TEST_CASE("evaluate: manual confusion oracle on a forced classifier") {
  // Zero output weights + biased head: the model always predicts class 1.
  STCNetModel model = build_model(BackboneConfig::nano(), FusionVariant::Full, 2);
  std::fill(model.out.weight.mutable_data().begin(), model.out.weight.mutable_data().end(),
            0.0);
  model.out.bias.mutable_data()[0] = -10.0;
  model.out.bias.mutable_data()[1] = 10.0;

  video::ClipDataset all_pos = nano_dataset(6, 21, 1.0);
  EvalReport r1 = evaluate(model, all_pos, nano_preprocess());
  CHECK(r1.totals.tp == 6);
  CHECK(*r1.totals.fscore == doctest::Approx(1.0));

  video::ClipDataset mixed = nano_dataset(6, 22, 4.0 / 6.0);
  EvalReport r2 = evaluate(model, mixed, nano_preprocess());
  CHECK(r2.totals.tp == 4);
  CHECK(r2.totals.fp == 2);
  CHECK(r2.totals.fn == 0);
  CHECK(r2.totals.tn == 0);
  CHECK(*r2.totals.precision == doctest::Approx(4.0 / 6.0).epsilon(1e-12));
  CHECK(*r2.totals.recall == doctest::Approx(1.0));
  CHECK(*r2.totals.fscore == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("evaluate is deterministic and never mutates the model") {
  STCNetModel model = build_model(BackboneConfig::nano(), FusionVariant::Full, 31);
  video::ClipDataset ds = nano_dataset(10, 23);
  auto before = snapshot(model);
  EvalReport a = evaluate(model, ds, nano_preprocess());
  EvalReport b = evaluate(model, ds, nano_preprocess());
  CHECK(snapshot(model) == before);
  REQUIRE(a.splits.size() == b.splits.size());
  for (size_t i = 0; i < a.splits.size(); ++i) {
    CHECK(a.splits[i].split == b.splits[i].split);
    CHECK(a.splits[i].m.tp == b.splits[i].m.tp);
    CHECK(a.splits[i].m.fp == b.splits[i].m.fp);
  }
  CHECK(a.totals.tp == b.totals.tp);
}

TEST_CASE("empty splits carry undefined markers, average skips them") {
  // All-negative split: no positives anywhere -> recall undefined there.
  STCNetModel model = build_model(BackboneConfig::nano(), FusionVariant::Full, 32);
  video::ClipDataset ds = nano_dataset(8, 24, 0.0);
  EvalReport r = evaluate(model, ds, nano_preprocess());
  for (auto& row : r.splits) CHECK_FALSE(row.m.recall.has_value());
  CHECK_FALSE(r.macro_recall.has_value());
}

TEST_CASE("split_dataset: 400 clips -> 320 train / 80 test") {
  video::ClipDataset ds = nano_dataset(400, 25);
  auto [train_set, test_set] = split_dataset(ds, 5);
  CHECK(train_set.clips.size() == 320);
  CHECK(test_set.clips.size() == 80);
  int pos = 0;
  for (auto& c : test_set.clips) pos += c.label;
  CHECK(pos == 40);  // alternating labels stay balanced under i%5==4
}

TEST_CASE("run_ablation: bookkeeping, checkpoints, reproducibility") {
  auto dir = std::filesystem::temp_directory_path() / "stc_ablation_test";
  std::filesystem::remove_all(dir);
  SGDConfig cfg;
  cfg.lr = 0.01;
  cfg.epochs = 1;
  cfg.batch_size = 3;
  video::ClipDataset ds = nano_dataset(12, 26);
  auto [train_set, test_set] = split_dataset(ds, 4);
  std::vector<FusionVariant> variants{FusionVariant::Full, FusionVariant::SpatialOnly};
  std::vector<uint64_t> seeds{1, 2};
  BackboneConfig config = BackboneConfig::nano();
  PreprocessSpec pre = nano_preprocess();

  AblationTable t1 = run_ablation(config, cfg, train_set, test_set, variants, seeds, pre,
                                  dir, nullptr);
  CHECK(t1.runs.size() == 4);
  for (auto& run : t1.runs) {
    CHECK_FALSE(run.diverged);
    CHECK(std::filesystem::exists(run.checkpoint_file));
  }
  std::string csv1 = metrics_csv(t1.runs);
  CHECK(csv1.find("variant,seed,split,tp,fp,fn,tn,precision,recall,fscore") == 0);

  AblationTable t2 = run_ablation(config, cfg, train_set, test_set, variants, seeds, pre,
                                  "", nullptr);
  CHECK(metrics_csv(t2.runs) == csv1);
  std::string summary = ablation_summary_csv(t1);
  CHECK(summary.find("full") != std::string::npos);
  CHECK(summary.find("spatial_only") != std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_SUITE_END();
