#include <doctest.h>

#include <cmath>

#include "stc/video.hpp"

using namespace stc;
using namespace stc::video;

namespace {

Clip constant_clip(int t, int res, uint8_t value, uint8_t label = 0) {
  Clip c;
  c.t = static_cast<uint16_t>(t);
  c.h = c.w = static_cast<uint16_t>(res);
  c.label = label;
  c.source_id = "S0/test/q-/c00000";
  c.fps = 30.0f;
  c.rgb.assign(static_cast<size_t>(t) * res * res * 3, value);
  return c;
}

double mean_region(const Tensor& residual, int frame, int x0, int y0, int x1, int y1) {
  int64_t h = residual.shape()[2], w = residual.shape()[3];
  double acc = 0.0;
  int64_t count = 0;
  for (int c = 0; c < 3; ++c)
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) {
        acc += residual[((frame * 3 + c) * h + y) * w + x];
        ++count;
      }
  return acc / static_cast<double>(count);
}

}  // namespace

TEST_SUITE_BEGIN("video");

TEST_CASE("sample_frames center: one frame per segment") {
  CHECK(sample_frames(8, {8}, SampleMode::Center) ==
        std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
  CHECK(sample_frames(80, {8}, SampleMode::Center) ==
        std::vector<int>{5, 15, 25, 35, 45, 55, 65, 75});
  CHECK_THROWS_AS(sample_frames(7, {8}, SampleMode::Center), ValidationError);
}

TEST_CASE("sample_frames stays strictly increasing with one index per segment") {
  // Enumerate-and-check oracle up to L = 10,000 (center and random draws).
  const int n = 8;
  for (int len = n; len <= 10000; len += (len < 64 ? 1 : 97)) {
    for (auto mode : {SampleMode::Center, SampleMode::Random}) {
      auto idx = sample_frames(len, {n}, mode, static_cast<uint64_t>(len));
      REQUIRE(idx.size() == static_cast<size_t>(n));
      for (int k = 0; k < n; ++k) {
        int lo = static_cast<int>(static_cast<int64_t>(k) * len / n);
        int hi = static_cast<int>(static_cast<int64_t>(k + 1) * len / n);
        CHECK(idx[k] >= lo);
        CHECK(idx[k] < hi);
        if (k) CHECK(idx[k] > idx[k - 1]);
      }
    }
  }
}

TEST_CASE("residual_frames: static clip gives exactly zero") {
  Clip c = constant_clip(6, 16, 123);
  auto idx = sample_frames(6, {4}, SampleMode::Center);
  Tensor r = residual_frames(c, idx, {5.0, 255.0});
  CHECK(r.shape() == Shape{4, 3, 16, 16});
  for (int64_t i = 0; i < r.numel(); ++i) CHECK(r[i] == 0.0);
}

TEST_CASE("residual_frames pixel arithmetic and clipping") {
  Clip c = constant_clip(2, 2, 0);
  // pixel 0: frames (100, 110), alpha 5 -> 50
  // pixel 1: frames (0, 200),  alpha 5 -> clipped to 255
  c.frame(0)[0] = 100;
  c.frame(1)[0] = 110;
  c.frame(0)[3] = 0;
  c.frame(1)[3] = 200;
  std::vector<int> idx{0};
  Tensor r = residual_frames(c, idx, {5.0, 255.0});
  // layout [1,3,2,2]: channel plane 0 holds pixels row-major
  CHECK(r[0] == 50.0);
  CHECK(r[1] == 255.0);
}

TEST_CASE("residual_frames: final frame uses the previous frame") {
  Clip c = constant_clip(3, 2, 10);
  for (size_t i = 0; i < c.frame_bytes(); ++i) c.frame(2)[i] = 30;
  std::vector<int> idx{2};
  Tensor r = residual_frames(c, idx, {2.0, 255.0});
  for (int64_t i = 0; i < r.numel(); ++i) CHECK(r[i] == 40.0);  // 2*|30-10|
}

TEST_CASE("residual alpha-linearity below the clip ceiling") {
  SyntheticSpec spec{6, 8, 32, 0.5, 77};
  ClipDataset ds = synth_generate(spec);
  for (const Clip& clip : ds.clips) {
    auto idx = sample_frames(clip.t, {4}, SampleMode::Center);
    Tensor r1 = residual_frames(clip, idx, {1.0, 255.0});
    Tensor r2 = residual_frames(clip, idx, {2.0, 255.0});
    for (int64_t i = 0; i < r1.numel(); ++i) {
      CHECK(r1[i] >= 0.0);
      CHECK(r1[i] <= 255.0);
      if (r2[i] < 255.0) CHECK(r2[i] == doctest::Approx(2.0 * r1[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("residual_frames rejects too-short clips and bad specs") {
  Clip c = constant_clip(2, 4, 5);
  c.t = 1;
  c.rgb.resize(c.frame_bytes());
  std::vector<int> idx{0};
  CHECK_THROWS_AS(residual_frames(c, idx, {5.0, 255.0}), ValidationError);
  CHECK_THROWS_AS((ResidualSpec{0.0, 255.0}).validate(), ValidationError);
  CHECK_THROWS_AS((ResidualSpec{5.0, 300.0}).validate(), ValidationError);
}

TEST_CASE("augment: all-identity spec reproduces the clip bit-exactly") {
  SyntheticSpec sspec{2, 6, 32, 0.5, 5};
  ClipDataset ds = synth_generate(sspec);
  AugmentSpec aspec;
  aspec.rng_seed = 9;
  for (const Clip& clip : ds.clips) {
    Clip out = augment(clip, aspec);
    CHECK(out.rgb == clip.rgb);
    CHECK(out.label == clip.label);
    CHECK(out.source_id == clip.source_id);
    CHECK(out.t == clip.t);
  }
}

TEST_CASE("augment: horizontal flip is an involution") {
  SyntheticSpec sspec{2, 4, 32, 1.0, 6};
  ClipDataset ds = synth_generate(sspec);
  AugmentSpec flip_only;
  flip_only.flip_prob = 1.0;
  flip_only.rng_seed = 3;
  Clip once = augment(ds.clips[0], flip_only);
  Clip twice = augment(once, flip_only);
  CHECK(twice.rgb == ds.clips[0].rgb);
  CHECK(once.rgb != ds.clips[0].rgb);
}

TEST_CASE("augment: fixed seed gives bit-identical output; labels survive") {
  SyntheticSpec sspec{3, 6, 32, 0.5, 8};
  ClipDataset ds = synth_generate(sspec);
  AugmentSpec spec;
  spec.flip_prob = 0.5;
  spec.crop_scale_range = {0.7, 1.0};
  spec.perspective_strength = 0.08;
  spec.erase_prob = 0.5;
  spec.erase_area_range = {0.02, 0.1};
  spec.jitter = {0.2, 0.2, 0.2};
  spec.out_resolution = 32;
  for (int i = 0; i < 3; ++i) {
    spec.rng_seed = mix_seed(4, i);
    Clip a = augment(ds.clips[i], spec);
    Clip b = augment(ds.clips[i], spec);
    CHECK(a.rgb == b.rgb);
    CHECK(a.label == ds.clips[i].label);
    CHECK(a.t == ds.clips[i].t);
    CHECK(a.h == 32);
    CHECK(a.w == 32);
  }
}

TEST_CASE("augment validation rejects bad ranges") {
  AugmentSpec bad;
  bad.erase_area_range = {0.5, 1.2};  // would exceed the frame
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  AugmentSpec bad2;
  bad2.crop_scale_range = {0.0, 1.0};
  CHECK_THROWS_AS(bad2.validate(), ValidationError);
  AugmentSpec bad3;
  bad3.flip_prob = 1.5;
  CHECK_THROWS_AS(bad3.validate(), ValidationError);
}

TEST_CASE("synth: fixed seed is byte-identical, class mix is exact") {
  SyntheticSpec spec{400, 8, 32, 0.5, 1234};
  ClipDataset a = synth_generate(spec);
  ClipDataset b = synth_generate(spec);
  CHECK(clip_encode(a) == clip_encode(b));
  int positives = 0;
  for (const Clip& c : a.clips) positives += c.label;
  CHECK(positives == 200);

  SyntheticSpec spec2{400, 8, 32, 0.5, 1235};
  CHECK(clip_encode(synth_generate(spec2)) != clip_encode(a));
}

TEST_CASE("synth: smoke residual energy concentrates in the labeled quadrant") {
  SyntheticSpec spec{40, 12, 56, 0.5, 42};
  ClipDataset ds = synth_generate(spec);
  int smoke_seen = 0, static_seen = 0;
  for (const Clip& clip : ds.clips) {
    std::vector<int> all(clip.t);
    for (int i = 0; i < clip.t; ++i) all[i] = i;
    Tensor r = residual_frames(clip, all, {5.0, 255.0});
    if (clip.label == 1) {
      ++smoke_seen;
      int q = quadrant_of(clip);
      REQUIRE(q >= 0);
      int half = clip.w / 2;
      int qx = (q % 2) * half, qy = (q / 2) * half;
      int ox = ((q % 2) ^ 1) * half, oy = ((q / 2) ^ 1) * half;
      for (int f = 0; f < clip.t - 1; ++f) {
        double plume = mean_region(r, f, qx, qy, qx + half, qy + half);
        double opposite = mean_region(r, f, ox, oy, ox + half, oy + half);
        CHECK(plume > opposite + 1.0);
        CHECK(plume > 4.0);  // nonzero energy, clear of the sensor noise
      }
    } else if (clip.source_id.find("/static/") != std::string::npos) {
      ++static_seen;
      for (int f = 0; f < clip.t; ++f) {
        double global = mean_region(r, f, 0, 0, clip.w, clip.h);
        CHECK(global <= 6.0);  // noise floor: alpha * E|d1-d2|, d ~ U{-1..1}
      }
    }
  }
  CHECK(smoke_seen == 20);
  CHECK(static_seen >= 4);
}

TEST_CASE("container round trip is byte-identical") {
  SyntheticSpec spec{10, 6, 32, 0.3, 99};
  ClipDataset ds = synth_generate(spec);
  std::vector<uint8_t> bytes = clip_encode(ds);
  ClipDataset decoded = clip_decode(bytes);
  CHECK(clip_encode(decoded) == bytes);
  REQUIRE(decoded.clips.size() == ds.clips.size());
  CHECK(decoded.clips[3].source_id == ds.clips[3].source_id);
  CHECK(decoded.clips[3].fps == ds.clips[3].fps);
}

TEST_CASE("container errors are distinct: magic, truncation, trailing bytes") {
  SyntheticSpec spec{2, 4, 32, 0.5, 7};
  std::vector<uint8_t> bytes = clip_encode(synth_generate(spec));

  std::vector<uint8_t> bad_magic = bytes;
  bad_magic[0] = 'X';
  try {
    clip_decode(bad_magic);
    FAIL("expected BadMagic");
  } catch (const io::FormatError& e) {
    CHECK(e.kind() == io::FormatError::Kind::BadMagic);
  }

  std::vector<uint8_t> truncated(bytes.begin(), bytes.begin() + bytes.size() / 2);
  try {
    clip_decode(truncated);
    FAIL("expected Truncated");
  } catch (const io::FormatError& e) {
    CHECK(e.kind() == io::FormatError::Kind::Truncated);
  }

  std::vector<uint8_t> trailing = bytes;
  trailing.push_back(0);
  try {
    clip_decode(trailing);
    FAIL("expected Invalid");
  } catch (const io::FormatError& e) {
    CHECK(e.kind() == io::FormatError::Kind::Invalid);
  }
}

TEST_CASE("quadrant parsing from source ids") {
  Clip c = constant_clip(2, 8, 1);
  c.source_id = "S3/smoke/q2/c00017";
  CHECK(quadrant_of(c) == 2);
  c.source_id = "S1/steam/q-/c00002";
  CHECK(quadrant_of(c) == -1);
}

TEST_SUITE_END();
