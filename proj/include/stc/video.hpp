#pragma once

#include "stc/rng.hpp"
#include "stc/serialize.hpp"
#include "stc/tensor.hpp"

namespace stc::video {

// T RGB frames, 8 bits per channel, interleaved HWC per frame.
struct Clip {
  uint16_t t = 0, h = 0, w = 0;
  uint8_t label = 0;  // smoke=1, no_smoke=0
  std::string source_id;
  float fps = 0.0f;
  std::vector<uint8_t> rgb;  // t*h*w*3 bytes

  size_t frame_bytes() const { return static_cast<size_t>(h) * w * 3; }
  const uint8_t* frame(int i) const { return rgb.data() + frame_bytes() * i; }
  uint8_t* frame(int i) { return rgb.data() + frame_bytes() * i; }
  void validate() const;
};

struct ClipDataset {
  std::vector<Clip> clips;
};

struct SamplerSpec {
  int n_segments = 8;
};

enum class SampleMode { Center, Random };

// Splits [0, n_source_frames) into n_segments equal subsections and picks one
// index per subsection (its midpoint, or uniformly at random). Indices are
// strictly increasing.
std::vector<int> sample_frames(int n_source_frames, const SamplerSpec& spec,
                               SampleMode mode, uint64_t seed = 0);

struct ResidualSpec {
  double alpha = 5.0;   // expanding coefficient
  double beta = 255.0;  // per-pixel ceiling
  void validate() const;
};

// For each sampled index t: min(alpha*|frame[t] - frame[t+1]|, beta) per pixel
// and channel, where t+1 is the next frame in the source timeline (the
// previous frame substitutes for the final source frame). Values in [0, beta].
// Output: [N, 3, H, W].
Tensor residual_frames(const Clip& clip, std::span<const int> indices,
                       const ResidualSpec& spec);

// Sampled RGB frames as [N, 3, H, W] with raw 0..255 values.
Tensor rgb_frames(const Clip& clip, std::span<const int> indices);

struct JitterSpec {
  double brightness = 0.0, contrast = 0.0, saturation = 0.0;
};

struct AugmentSpec {
  double flip_prob = 0.0;
  std::array<double, 2> crop_scale_range{1.0, 1.0};
  double perspective_strength = 0.0;
  double erase_prob = 0.0;
  std::array<double, 2> erase_area_range{0.02, 0.2};
  JitterSpec jitter;
  uint64_t rng_seed = 0;
  int out_resolution = 0;  // 0 keeps the source size

  void validate() const;
};

// One parameter draw per clip, applied to every frame (temporal consistency).
// Label, fps and source_id pass through unchanged.
Clip augment(const Clip& clip, const AugmentSpec& spec);

struct SyntheticSpec {
  int n_clips = 400;
  int frames_per_clip = 16;
  int resolution = 56;
  double class_mix = 0.5;  // fraction of smoke positives
  uint64_t seed = 0;

  void validate() const;
};

// Seeded synthetic smoke / distractor benchmark. Positives are translucent
// gray plumes drifting inside one quadrant over a textured background; hard
// negatives are bright pulsating in-place steam blobs, rigid moving boxes and
// static backgrounds with sensor noise. source_id encodes
// "S<site>/<kind>/q<quadrant>/c<index>", with q- for non-smoke kinds.
ClipDataset synth_generate(const SyntheticSpec& spec);

// Quadrant (0..3 = TL,TR,BL,BR) parsed from a smoke clip source_id; -1 if
// absent.
int quadrant_of(const Clip& clip);

// Clip container: magic "STCV1", u32 clip count; per clip u16 T, u16 H, u16 W,
// u8 label, u32 source_id length + UTF-8, f32 fps, then T*H*W*3 raw RGB
// bytes. Little-endian throughout.
std::vector<uint8_t> clip_encode(const ClipDataset& ds);
ClipDataset clip_decode(const std::vector<uint8_t>& bytes);

void save_dataset(const ClipDataset& ds, const std::filesystem::path& path);
ClipDataset load_dataset(const std::filesystem::path& path);

}  // namespace stc::video
