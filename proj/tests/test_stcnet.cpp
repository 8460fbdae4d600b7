#include <doctest.h>

#include <cmath>

#include "stc/stcnet.hpp"

using namespace stc;

namespace {

Tensor random_input(const BackboneConfig& cfg, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(static_cast<size_t>(cfg.n_frames) * 3 * cfg.input_resolution *
                        cfg.input_resolution);
  for (auto& x : v) x = rng.uniform();
  return Tensor(Shape{cfg.n_frames, 3, cfg.input_resolution, cfg.input_resolution},
                std::move(v));
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (int64_t i = 0; i < a.numel(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

// Unfused single-path reference: stem + pool + stages, capturing each stage.
std::vector<Tensor> run_single_path(Pathway& path, const Tensor& input) {
  std::vector<Tensor> taps;
  Tensor x = path.stem(nullptr, input, false);
  x = nn::maxpool2d(nullptr, x, 3, 3, 2, 2, 1, 1);
  for (int s = 1; s <= 4; ++s) {
    x = path.run_stage(nullptr, x, s, false);
    taps.push_back(x);
  }
  return taps;
}

}  // namespace

TEST_SUITE_BEGIN("stcnet");

TEST_CASE("build_model is deterministic in (config, seed)") {
  STCNetModel a = build_model(BackboneConfig::nano(), FusionVariant::Full, 17);
  STCNetModel b = build_model(BackboneConfig::nano(), FusionVariant::Full, 17);
  STCNetModel c = build_model(BackboneConfig::nano(), FusionVariant::Full, 18);
  auto pa = a.parameters();
  auto pb = b.parameters();
  auto pc = c.parameters();
  REQUIRE(pa.size() == pb.size());
  bool all_equal = true, any_diff_seed = false;
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].name == pb[i].name);
    all_equal = all_equal && bit_equal(pa[i].tensor, pb[i].tensor);
    any_diff_seed = any_diff_seed || !bit_equal(pa[i].tensor, pc[i].tensor);
  }
  CHECK(all_equal);
  CHECK(any_diff_seed);
}

TEST_CASE("config validation names the offending field") {
  BackboneConfig bad = BackboneConfig::micro();
  bad.cardinality = 5;  // 16/2 not divisible
  CHECK_THROWS_AS(build_model(bad, FusionVariant::Full, 0), ValidationError);
  bad = BackboneConfig::micro();
  bad.input_resolution = 50;
  try {
    build_model(bad, FusionVariant::Full, 0);
    FAIL("expected throw");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("input_resolution") != std::string::npos);
  }
  bad = BackboneConfig::micro();
  bad.se_ratio = 3;
  CHECK_THROWS_AS(build_model(bad, FusionVariant::Full, 0), ValidationError);
  bad = BackboneConfig::micro();
  bad.stage_blocks[2] = 0;
  CHECK_THROWS_AS(build_model(bad, FusionVariant::Full, 0), ValidationError);
}

TEST_CASE("micro forward: tap shapes follow the stride ladder, logits [1,2]") {
  STCNetModel model = build_model(BackboneConfig::micro(), FusionVariant::Full, 3);
  model.set_training(false);
  Tensor rgb = random_input(model.config, 100);
  Tensor res = random_input(model.config, 101);
  ForwardTrace trace;
  Tensor logits = model.forward(nullptr, rgb, res, &trace);
  CHECK(logits.shape() == Shape{1, 2});
  for (int64_t i = 0; i < logits.numel(); ++i) CHECK(std::isfinite(logits[i]));

  // 56 -> conv1 28 -> pool1 14 -> res1 14 (stride 4) -> 7 -> 4 -> 2
  CHECK(capture_activation(trace, "spatial", "res1").shape() == Shape{8, 32, 14, 14});
  CHECK(capture_activation(trace, "spatial", "res2").shape() == Shape{8, 64, 7, 7});
  CHECK(capture_activation(trace, "spatial", "res3").shape() == Shape{8, 128, 4, 4});
  CHECK(capture_activation(trace, "temporal", "res4").shape() == Shape{8, 256, 2, 2});
  CHECK(trace.taps.at("cls").shape() == Shape{1, 64, 1, 1});
}

TEST_CASE("capture_activations rejects unknown taps, listing valid ones") {
  STCNetModel model = build_model(BackboneConfig::nano(), FusionVariant::Full, 3);
  model.set_training(false);
  Tensor rgb = random_input(model.config, 5);
  Tensor res = random_input(model.config, 6);
  ForwardTrace trace;
  model.forward(nullptr, rgb, res, &trace);
  try {
    capture_activation(trace, "temporal", "res9");
    FAIL("expected throw");
  } catch (const ValidationError& e) {
    std::string msg = e.what();
    CHECK(msg.find("res9") != std::string::npos);
    CHECK(msg.find("temporal.res4") != std::string::npos);
  }
}

TEST_CASE("zero inputs still produce finite logits") {
  STCNetModel model = build_model(BackboneConfig::nano(), FusionVariant::Full, 9);
  model.set_training(false);
  int r = model.config.input_resolution, t = model.config.n_frames;
  Tensor zero(Shape{t, 3, r, r}, 0.0);
  Tensor logits = model.forward(nullptr, zero, zero);
  for (int64_t i = 0; i < logits.numel(); ++i) CHECK(std::isfinite(logits[i]));
}

TEST_CASE("forward rejects mismatched input shapes") {
  STCNetModel model = build_model(BackboneConfig::nano(), FusionVariant::Full, 9);
  Tensor wrong(Shape{2, 3, 24, 24}, 0.0);
  Tensor ok = random_input(model.config, 1);
  CHECK_THROWS_AS(model.forward(nullptr, wrong, ok), ValidationError);
  CHECK_THROWS_AS(model.forward(nullptr, ok, wrong), ValidationError);
}

TEST_CASE("fuse_stage variant table") {
  Rng rng(55);
  Shape s{2, 4, 3, 3};
  std::vector<double> v(s.numel());
  for (auto& x : v) x = rng.uniform(-1, 1);
  Tensor sf(s, v);
  for (auto& x : v) x = rng.uniform(-1, 1);
  Tensor tf(s, v);
  Tensor zero(s, 0.0);

  auto [fs, ft] = fuse_stage(nullptr, sf, zero, FusionVariant::Full, 1);
  CHECK(bit_equal(fs, sf));
  CHECK(bit_equal(ft, sf));

  auto [fs2, ft2] = fuse_stage(nullptr, sf, tf, FusionVariant::Full, 2);
  CHECK(bit_equal(fs2, ft2));

  auto [bs, bt] = fuse_stage(nullptr, sf, tf, FusionVariant::B, 3);
  CHECK(bit_equal(bt, tf));   // temporal path untouched
  CHECK(bit_equal(bs, fs2));  // sf+tf, same as the Full sum

  auto [as, at] = fuse_stage(nullptr, sf, tf, FusionVariant::A, 1);
  CHECK(bit_equal(as, sf));
  CHECK(bit_equal(at, tf));

  auto [cs1, ct1] = fuse_stage(nullptr, sf, tf, FusionVariant::C, 1);
  CHECK(bit_equal(cs1, ct1));
  auto [cs2, ct2] = fuse_stage(nullptr, sf, tf, FusionVariant::C, 2);
  CHECK(bit_equal(cs2, sf));
  CHECK(bit_equal(ct2, tf));

  Tensor other(Shape{2, 4, 3, 4}, 0.0);
  CHECK_THROWS_AS(fuse_stage(nullptr, sf, other, FusionVariant::Full, 1), ValidationError);
}

TEST_CASE("Full variant: both paths bit-identical after every fusion point") {
  STCNetModel model = build_model(BackboneConfig::nano(), FusionVariant::Full, 21);
  model.set_training(false);
  Tensor rgb = random_input(model.config, 31);
  Tensor res = random_input(model.config, 32);
  ForwardTrace trace;
  model.forward(nullptr, rgb, res, &trace);
  for (int s = 1; s <= 3; ++s) {
    CHECK(bit_equal(capture_activation(trace, "spatial", strfmt("res%d", s)),
                    capture_activation(trace, "temporal", strfmt("res%d", s))));
  }
  CHECK_FALSE(bit_equal(capture_activation(trace, "spatial", "res4"),
                        capture_activation(trace, "temporal", "res4")));
}

TEST_CASE("variant A activations equal two independent single-path runs") {
  STCNetModel model = build_model(BackboneConfig::nano(), FusionVariant::A, 22);
  model.set_training(false);
  Tensor rgb = random_input(model.config, 41);
  Tensor res = random_input(model.config, 42);
  ForwardTrace trace;
  model.forward(nullptr, rgb, res, &trace);
  auto spatial_solo = run_single_path(model.spatial, rgb);
  auto temporal_solo = run_single_path(*model.temporal, res);
  for (int s = 1; s <= 4; ++s) {
    CHECK(bit_equal(capture_activation(trace, "spatial", strfmt("res%d", s)),
                    spatial_solo[s - 1]));
    CHECK(bit_equal(capture_activation(trace, "temporal", strfmt("res%d", s)),
                    temporal_solo[s - 1]));
  }
}

TEST_CASE("variant B never modifies temporal activations") {
  STCNetModel model = build_model(BackboneConfig::nano(), FusionVariant::B, 23);
  model.set_training(false);
  Tensor rgb = random_input(model.config, 51);
  Tensor res = random_input(model.config, 52);
  ForwardTrace trace;
  model.forward(nullptr, rgb, res, &trace);
  auto temporal_solo = run_single_path(*model.temporal, res);
  for (int s = 1; s <= 4; ++s)
    CHECK(bit_equal(capture_activation(trace, "temporal", strfmt("res%d", s)),
                    temporal_solo[s - 1]));
  // ... while the spatial path is modified from stage 1 on.
  auto spatial_solo = run_single_path(model.spatial, rgb);
  CHECK_FALSE(bit_equal(capture_activation(trace, "spatial", "res1"), spatial_solo[0]));
}

TEST_CASE("variant C fuses at exactly one point") {
  STCNetModel model = build_model(BackboneConfig::nano(), FusionVariant::C, 24);
  model.set_training(false);
  Tensor rgb = random_input(model.config, 61);
  Tensor res = random_input(model.config, 62);
  ForwardTrace trace;
  model.forward(nullptr, rgb, res, &trace);
  Tensor fused1 = capture_activation(trace, "spatial", "res1");
  CHECK(bit_equal(fused1, capture_activation(trace, "temporal", "res1")));
  // After the single fusion the paths run independently from the fused map.
  Tensor s2 = model.spatial.run_stage(nullptr, fused1, 2, false);
  Tensor t2 = model.temporal->run_stage(nullptr, fused1, 2, false);
  CHECK(bit_equal(capture_activation(trace, "spatial", "res2"), s2));
  CHECK(bit_equal(capture_activation(trace, "temporal", "res2"), t2));
  CHECK_FALSE(bit_equal(capture_activation(trace, "spatial", "res2"),
                        capture_activation(trace, "temporal", "res2")));
}

TEST_CASE("zeroed temporal path makes Full fusion a spatial identity") {
  STCNetModel model = build_model(BackboneConfig::nano(), FusionVariant::Full, 25);
  model.set_training(false);
  for (auto& p : model.parameters())
    if (p.name.rfind("temporal.", 0) == 0)
      std::fill(p.tensor.mutable_data().begin(), p.tensor.mutable_data().end(), 0.0);
  Tensor rgb = random_input(model.config, 71);
  Tensor res = random_input(model.config, 72);
  ForwardTrace trace;
  model.forward(nullptr, rgb, res, &trace);
  auto spatial_solo = run_single_path(model.spatial, rgb);
  for (int s = 1; s <= 3; ++s)
    CHECK(bit_equal(capture_activation(trace, "spatial", strfmt("res%d", s)),
                    spatial_solo[s - 1]));
}

TEST_CASE("logits are a deterministic function of weights and inputs") {
  for (FusionVariant v : {FusionVariant::Full, FusionVariant::A, FusionVariant::B,
                          FusionVariant::C, FusionVariant::SpatialOnly}) {
    STCNetModel model = build_model(BackboneConfig::nano(), v, 26);
    model.set_training(false);
    Tensor rgb = random_input(model.config, 81);
    Tensor res = random_input(model.config, 82);
    Tensor l1 = model.forward(nullptr, rgb, res);
    Tensor l2 = model.forward(nullptr, rgb, res);
    CHECK(bit_equal(l1, l2));
  }
}

TEST_CASE("param_count: head arithmetic and variant ordering") {
  Rng rng(27);
  nn::Linear head = nn::Linear::make(256, 2, rng);
  CHECK(head.weight.numel() + head.bias.numel() == 514);

  STCNetModel full = build_model(BackboneConfig::micro(), FusionVariant::Full, 1);
  STCNetModel solo = build_model(BackboneConfig::micro(), FusionVariant::SpatialOnly, 1);
  CHECK(full.param_count() > solo.param_count());

  // The gap is the temporal path plus the fuse head, minus the wider
  // spatial-only cls conv.
  int64_t temporal = 0, fuse = 0;
  for (auto& p : full.parameters()) {
    if (p.name.rfind("temporal.", 0) == 0) temporal += p.tensor.numel();
    if (p.name.rfind("fuse.", 0) == 0) fuse += p.tensor.numel();
  }
  CHECK(full.param_count() - solo.param_count() <= temporal + fuse);
  CHECK(full.param_count() - solo.param_count() >= temporal);
}

TEST_CASE("spatial_only model ignores the residual branch weights entirely") {
  STCNetModel model = build_model(BackboneConfig::nano(), FusionVariant::SpatialOnly, 28);
  model.set_training(false);
  for (auto& p : model.parameters()) CHECK(p.name.rfind("temporal.", 0) != 0);
  Tensor rgb = random_input(model.config, 91);
  Tensor res1 = random_input(model.config, 92);
  Tensor res2 = random_input(model.config, 93);
  CHECK(bit_equal(model.forward(nullptr, rgb, res1), model.forward(nullptr, rgb, res2)));
}

TEST_SUITE_END();
