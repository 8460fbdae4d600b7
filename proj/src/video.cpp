#include "stc/video.hpp"

#include <cmath>
#include <cstring>

namespace stc::video {

namespace {
constexpr double kPi = 3.14159265358979323846;

inline uint8_t clamp_u8(double v) {
  if (v <= 0.0) return 0;
  if (v >= 255.0) return 255;
  return static_cast<uint8_t>(std::lround(v));
}
}  // namespace

void Clip::validate() const {
  if (t < 2) throw ValidationError(strfmt("clip %s: needs >= 2 frames, has %d",
                                          source_id.c_str(), t));
  if (h < 1 || w < 1) throw ValidationError("clip: empty frames");
  if (label > 1) throw ValidationError(strfmt("clip %s: label must be 0 or 1", source_id.c_str()));
  if (rgb.size() != frame_bytes() * t)
    throw ValidationError(strfmt("clip %s: byte count %zu does not match %dx%dx%dx3",
                                 source_id.c_str(), rgb.size(), t, h, w));
}

std::vector<int> sample_frames(int n_source_frames, const SamplerSpec& spec,
                               SampleMode mode, uint64_t seed) {
  int n = spec.n_segments;
  if (n < 1) throw ValidationError("sample_frames: n_segments must be >= 1");
  if (n_source_frames < n)
    throw ValidationError(strfmt("sample_frames: %d frames < %d segments",
                                 n_source_frames, n));
  Rng rng(seed);
  std::vector<int> indices(n);
  for (int k = 0; k < n; ++k) {
    int lo = static_cast<int>(static_cast<int64_t>(k) * n_source_frames / n);
    int hi = static_cast<int>(static_cast<int64_t>(k + 1) * n_source_frames / n);
    indices[k] = mode == SampleMode::Center
                     ? (lo + hi) / 2
                     : static_cast<int>(rng.uniform_int(lo, hi - 1));
  }
  return indices;
}

void ResidualSpec::validate() const {
  if (!(alpha > 0.0)) throw ValidationError(strfmt("residual: alpha %g must be > 0", alpha));
  if (!(beta > 0.0 && beta <= 255.0))
    throw ValidationError(strfmt("residual: beta %g outside (0, 255]", beta));
}

Tensor residual_frames(const Clip& clip, std::span<const int> indices,
                       const ResidualSpec& spec) {
  spec.validate();
  clip.validate();
  int64_t n = static_cast<int64_t>(indices.size());
  int64_t h = clip.h, w = clip.w;
  std::vector<double> out(n * 3 * h * w);
  for (int64_t i = 0; i < n; ++i) {
    int t = indices[i];
    if (t < 0 || t >= clip.t)
      throw ValidationError(strfmt("residual_frames: index %d outside 0..%d", t, clip.t - 1));
    int other = t + 1 < clip.t ? t + 1 : t - 1;
    const uint8_t* a = clip.frame(t);
    const uint8_t* b = clip.frame(other);
    for (int64_t p = 0; p < h * w; ++p)
      for (int c = 0; c < 3; ++c) {
        double d = spec.alpha * std::fabs(static_cast<double>(a[p * 3 + c]) - b[p * 3 + c]);
        out[(i * 3 + c) * h * w + p] = std::min(d, spec.beta);
      }
  }
  return Tensor(Shape{n, 3, h, w}, std::move(out));
}

Tensor rgb_frames(const Clip& clip, std::span<const int> indices) {
  clip.validate();
  int64_t n = static_cast<int64_t>(indices.size());
  int64_t h = clip.h, w = clip.w;
  std::vector<double> out(n * 3 * h * w);
  for (int64_t i = 0; i < n; ++i) {
    int t = indices[i];
    if (t < 0 || t >= clip.t)
      throw ValidationError(strfmt("rgb_frames: index %d outside 0..%d", t, clip.t - 1));
    const uint8_t* f = clip.frame(t);
    for (int64_t p = 0; p < h * w; ++p)
      for (int c = 0; c < 3; ++c) out[(i * 3 + c) * h * w + p] = f[p * 3 + c];
  }
  return Tensor(Shape{n, 3, h, w}, std::move(out));
}

// ---- Augmentation -----------------------------------------------------------

void AugmentSpec::validate() const {
  auto prob = [](const char* name, double p) {
    if (!(p >= 0.0 && p <= 1.0))
      throw ValidationError(strfmt("augment: %s %g outside [0,1]", name, p));
  };
  prob("flip_prob", flip_prob);
  prob("erase_prob", erase_prob);
  if (!(crop_scale_range[0] > 0.0 && crop_scale_range[0] <= crop_scale_range[1] &&
        crop_scale_range[1] <= 1.0))
    throw ValidationError(strfmt("augment: crop_scale_range [%g,%g] must satisfy 0<lo<=hi<=1",
                                 crop_scale_range[0], crop_scale_range[1]));
  if (!(perspective_strength >= 0.0 && perspective_strength <= 0.4))
    throw ValidationError(strfmt("augment: perspective_strength %g outside [0,0.4]",
                                 perspective_strength));
  if (!(erase_area_range[0] > 0.0 && erase_area_range[0] <= erase_area_range[1] &&
        erase_area_range[1] <= 1.0))
    throw ValidationError(strfmt("augment: erase_area_range [%g,%g] exceeds the frame",
                                 erase_area_range[0], erase_area_range[1]));
  if (!(jitter.brightness >= 0.0 && jitter.brightness < 1.0) ||
      !(jitter.contrast >= 0.0 && jitter.contrast < 1.0) ||
      !(jitter.saturation >= 0.0 && jitter.saturation < 1.0))
    throw ValidationError("augment: jitter deltas must lie in [0,1)");
  if (out_resolution < 0) throw ValidationError("augment: out_resolution must be >= 0");
}

namespace {

// Solves the 8-unknown homography mapping the unit square corners to `dst`
// (x,y pairs). Gaussian elimination with partial pivoting on the 8x9 system.
void homography_from_corners(const double src[4][2], const double dst[4][2], double h[9]) {
  double a[8][9] = {};
  for (int i = 0; i < 4; ++i) {
    double x = src[i][0], y = src[i][1];
    double u = dst[i][0], v = dst[i][1];
    double* r0 = a[2 * i];
    double* r1 = a[2 * i + 1];
    r0[0] = x; r0[1] = y; r0[2] = 1; r0[6] = -u * x; r0[7] = -u * y; r0[8] = u;
    r1[3] = x; r1[4] = y; r1[5] = 1; r1[6] = -v * x; r1[7] = -v * y; r1[8] = v;
  }
  for (int col = 0; col < 8; ++col) {
    int piv = col;
    for (int r = col + 1; r < 8; ++r)
      if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
    if (std::fabs(a[piv][col]) < 1e-12)
      throw ValidationError("augment: degenerate perspective corners");
    if (piv != col)
      for (int c = 0; c < 9; ++c) std::swap(a[piv][c], a[col][c]);
    for (int r = 0; r < 8; ++r) {
      if (r == col) continue;
      double f = a[r][col] / a[col][col];
      for (int c = col; c < 9; ++c) a[r][c] -= f * a[col][c];
    }
  }
  for (int i = 0; i < 8; ++i) h[i] = a[i][8] / a[i][i];
  h[8] = 1.0;
}

inline double bilinear(const std::vector<double>& img, int h, int w, int c, double y,
                       double x) {
  // clamp-to-edge
  x = std::min(std::max(x, 0.0), static_cast<double>(w - 1));
  y = std::min(std::max(y, 0.0), static_cast<double>(h - 1));
  int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
  int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  double fx = x - x0, fy = y - y0;
  auto at = [&](int yy, int xx) { return img[(static_cast<size_t>(yy) * w + xx) * 3 + c]; };
  return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) +
         fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
}

}  // namespace

Clip augment(const Clip& clip, const AugmentSpec& spec) {
  spec.validate();
  clip.validate();
  Rng rng(spec.rng_seed);
  int h = clip.h, w = clip.w;
  int out_res = spec.out_resolution > 0 ? spec.out_resolution : std::min(h, w);

  // Parameter draws, one set per clip.
  bool flip = rng.bernoulli(spec.flip_prob);
  double crop_scale = rng.uniform(spec.crop_scale_range[0], spec.crop_scale_range[1]);
  int side = std::max(1, static_cast<int>(std::lround(crop_scale * std::min(h, w))));
  int max_x0 = w - side, max_y0 = h - side;
  int crop_x0 = max_x0 > 0 ? static_cast<int>(rng.uniform_int(0, max_x0)) : 0;
  int crop_y0 = max_y0 > 0 ? static_cast<int>(rng.uniform_int(0, max_y0)) : 0;

  bool warp = spec.perspective_strength > 0.0;
  double hmg[9];
  if (warp) {
    double d = spec.perspective_strength;
    double src[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    double dst[4][2];
    for (int i = 0; i < 4; ++i) {
      dst[i][0] = src[i][0] + rng.uniform(-d, d);
      dst[i][1] = src[i][1] + rng.uniform(-d, d);
    }
    // Maps output unit coordinates to (distorted) source unit coordinates.
    homography_from_corners(src, dst, hmg);
  }

  bool erase = rng.bernoulli(spec.erase_prob);
  int ex0 = 0, ey0 = 0, ew = 0, eh = 0;
  std::vector<uint8_t> erase_fill;
  if (erase) {
    double area = rng.uniform(spec.erase_area_range[0], spec.erase_area_range[1]) *
                  out_res * out_res;
    double aspect = rng.uniform(0.5, 2.0);
    ew = std::min(out_res, std::max(1, static_cast<int>(std::lround(std::sqrt(area * aspect)))));
    eh = std::min(out_res, std::max(1, static_cast<int>(std::lround(std::sqrt(area / aspect)))));
    ex0 = ew < out_res ? static_cast<int>(rng.uniform_int(0, out_res - ew)) : 0;
    ey0 = eh < out_res ? static_cast<int>(rng.uniform_int(0, out_res - eh)) : 0;
    erase_fill.resize(static_cast<size_t>(ew) * eh * 3);
    for (auto& v : erase_fill) v = static_cast<uint8_t>(rng.uniform_int(0, 255));
  }

  double fb = 1.0, fc = 1.0, fs = 1.0;
  if (spec.jitter.brightness > 0)
    fb = rng.uniform(1.0 - spec.jitter.brightness, 1.0 + spec.jitter.brightness);
  if (spec.jitter.contrast > 0)
    fc = rng.uniform(1.0 - spec.jitter.contrast, 1.0 + spec.jitter.contrast);
  if (spec.jitter.saturation > 0)
    fs = rng.uniform(1.0 - spec.jitter.saturation, 1.0 + spec.jitter.saturation);

  bool geometry_identity = !flip && !warp && side == std::min(h, w) && out_res == h &&
                           out_res == w && crop_x0 == 0 && crop_y0 == 0;
  bool color_identity = fb == 1.0 && fc == 1.0 && fs == 1.0;

  Clip out;
  out.t = clip.t;
  out.h = static_cast<uint16_t>(out_res);
  out.w = static_cast<uint16_t>(out_res);
  out.label = clip.label;
  out.source_id = clip.source_id;
  out.fps = clip.fps;
  out.rgb.resize(static_cast<size_t>(clip.t) * out_res * out_res * 3);

  std::vector<double> src(static_cast<size_t>(h) * w * 3);
  for (int f = 0; f < clip.t; ++f) {
    const uint8_t* in = clip.frame(f);
    uint8_t* dst = out.frame(f);
    if (geometry_identity && color_identity) {
      std::memcpy(dst, in, out.frame_bytes());
    } else {
      for (size_t i = 0; i < src.size(); ++i) src[i] = in[i];
      for (int oy = 0; oy < out_res; ++oy)
        for (int ox = 0; ox < out_res; ++ox) {
          // output pixel -> crop rect -> unit square -> (optional) warp ->
          // source pixel; flip mirrors the x lookup.
          double cx = crop_x0 + (ox + 0.5) * side / out_res - 0.5;
          double cy = crop_y0 + (oy + 0.5) * side / out_res - 0.5;
          double sx = cx, sy = cy;
          if (warp) {
            double ux = cx / (w - 1), uy = cy / (h - 1);
            double denom = hmg[6] * ux + hmg[7] * uy + hmg[8];
            double wx = (hmg[0] * ux + hmg[1] * uy + hmg[2]) / denom;
            double wy = (hmg[3] * ux + hmg[4] * uy + hmg[5]) / denom;
            sx = wx * (w - 1);
            sy = wy * (h - 1);
          }
          if (flip) sx = (w - 1) - sx;
          for (int c = 0; c < 3; ++c) {
            double v = geometry_identity
                           ? src[(static_cast<size_t>(oy) * w + ox) * 3 + c]
                           : bilinear(src, h, w, c, sy, sx);
            dst[(static_cast<size_t>(oy) * out_res + ox) * 3 + c] = clamp_u8(v);
          }
        }
      if (!color_identity) {
        for (int p = 0; p < out_res * out_res; ++p) {
          double r = dst[p * 3], g = dst[p * 3 + 1], b = dst[p * 3 + 2];
          r *= fb; g *= fb; b *= fb;
          r = 127.5 + (r - 127.5) * fc;
          g = 127.5 + (g - 127.5) * fc;
          b = 127.5 + (b - 127.5) * fc;
          double gray = 0.299 * r + 0.587 * g + 0.114 * b;
          r = gray + (r - gray) * fs;
          g = gray + (g - gray) * fs;
          b = gray + (b - gray) * fs;
          dst[p * 3] = clamp_u8(r);
          dst[p * 3 + 1] = clamp_u8(g);
          dst[p * 3 + 2] = clamp_u8(b);
        }
      }
    }
    if (erase)
      for (int y = 0; y < eh; ++y)
        std::memcpy(dst + ((static_cast<size_t>(ey0) + y) * out_res + ex0) * 3,
                    erase_fill.data() + static_cast<size_t>(y) * ew * 3,
                    static_cast<size_t>(ew) * 3);
  }
  return out;
}

// ---- Synthetic benchmark generator -------------------------------------------

void SyntheticSpec::validate() const {
  if (n_clips < 1) throw ValidationError("synth: n_clips must be >= 1");
  if (frames_per_clip < 2) throw ValidationError("synth: frames_per_clip must be >= 2");
  if (resolution < 32 || resolution % 8 != 0)
    throw ValidationError(strfmt("synth: resolution %d must be >= 32 and divisible by 8",
                                 resolution));
  if (!(class_mix >= 0.0 && class_mix <= 1.0))
    throw ValidationError("synth: class_mix outside [0,1]");
}

namespace {

struct Blob {
  double cx, cy, sx, sy;
  double color[3];
  double alpha;
};

// Adds a translucent gaussian blob over the frame (doubles, HWC).
void blend_blob(std::vector<double>& img, int res, const Blob& b) {
  int x0 = std::max(0, static_cast<int>(b.cx - 4 * b.sx));
  int x1 = std::min(res - 1, static_cast<int>(b.cx + 4 * b.sx));
  int y0 = std::max(0, static_cast<int>(b.cy - 4 * b.sy));
  int y1 = std::min(res - 1, static_cast<int>(b.cy + 4 * b.sy));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      double dx = (x - b.cx) / b.sx, dy = (y - b.cy) / b.sy;
      double m = b.alpha * std::exp(-0.5 * (dx * dx + dy * dy));
      double* px = img.data() + (static_cast<size_t>(y) * res + x) * 3;
      for (int c = 0; c < 3; ++c) px[c] = px[c] * (1.0 - m) + b.color[c] * m;
    }
}

std::vector<double> make_background(int res, Rng& rng) {
  // Smooth value noise: coarse grid, bilinear upsample, mild per-channel tint.
  int grid = res / 8 + 1;
  std::vector<double> nodes(static_cast<size_t>(grid) * grid * 3);
  for (int i = 0; i < grid * grid; ++i) {
    double base = rng.uniform(60.0, 150.0);
    for (int c = 0; c < 3; ++c) nodes[static_cast<size_t>(i) * 3 + c] = base + rng.uniform(-12.0, 12.0);
  }
  std::vector<double> bg(static_cast<size_t>(res) * res * 3);
  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x) {
      double gy = static_cast<double>(y) / 8.0, gx = static_cast<double>(x) / 8.0;
      int iy = static_cast<int>(gy), ix = static_cast<int>(gx);
      double fy = gy - iy, fx = gx - ix;
      int iy1 = std::min(iy + 1, grid - 1), ix1 = std::min(ix + 1, grid - 1);
      for (int c = 0; c < 3; ++c) {
        auto at = [&](int yy, int xx) { return nodes[(static_cast<size_t>(yy) * grid + xx) * 3 + c]; };
        bg[(static_cast<size_t>(y) * res + x) * 3 + c] =
            (1 - fy) * ((1 - fx) * at(iy, ix) + fx * at(iy, ix1)) +
            fy * ((1 - fx) * at(iy1, ix) + fx * at(iy1, ix1));
      }
    }
  return bg;
}

}  // namespace

ClipDataset synth_generate(const SyntheticSpec& spec) {
  spec.validate();
  ClipDataset ds;
  ds.clips.reserve(spec.n_clips);
  int64_t n_pos = std::llround(spec.class_mix * spec.n_clips);
  int res = spec.resolution;
  int t_frames = spec.frames_per_clip;
  int neg_counter = 0;

  for (int i = 0; i < spec.n_clips; ++i) {
    // Even spread keeps exact positive counts for any mix.
    bool positive = (static_cast<int64_t>(i + 1) * n_pos / spec.n_clips) >
                    (static_cast<int64_t>(i) * n_pos / spec.n_clips);
    Rng rng(mix_seed(spec.seed, static_cast<uint64_t>(i), 0xC11Bu));
    int site = static_cast<int>(mix_seed(spec.seed, static_cast<uint64_t>(i), 0x517Eu) % 6);

    Clip clip;
    clip.t = static_cast<uint16_t>(t_frames);
    clip.h = clip.w = static_cast<uint16_t>(res);
    clip.fps = 30.0f;
    clip.label = positive ? 1 : 0;
    clip.rgb.resize(static_cast<size_t>(t_frames) * res * res * 3);

    std::vector<double> bg = make_background(res, rng);

    // Scenario parameters.
    int kind;  // 0 smoke, 1 steam, 2 box, 3 static
    if (positive) {
      kind = 0;
    } else {
      int cycle = neg_counter++ % 4;
      kind = cycle <= 1 ? 1 : (cycle == 2 ? 2 : 3);
    }

    int quadrant = -1;
    Blob blob{};
    double vx = 0, vy = 0, pulse_period = 0, pulse_phase = 0;
    double box_x = 0, box_y = 0, box_w = 0, box_h = 0, box_vx = 0, box_vy = 0;
    double box_color[3] = {0, 0, 0};

    if (kind == 0) {
      quadrant = static_cast<int>(rng.uniform_int(0, 3));
      double half = res / 2.0;
      double qx = (quadrant % 2) * half, qy = (quadrant / 2) * half;
      blob.sx = rng.uniform(res * 0.06, res * 0.11);
      blob.sy = rng.uniform(res * 0.06, res * 0.11);
      double margin = std::max(blob.sx, blob.sy) + 2.0;
      blob.cx = rng.uniform(qx + margin, qx + half - margin);
      blob.cy = rng.uniform(qy + margin, qy + half - margin);
      double speed = rng.uniform(1.2, 2.4);
      double angle = rng.uniform(0.0, 2.0 * kPi);
      vx = speed * std::cos(angle);
      vy = speed * std::sin(angle);
      double base = rng.uniform(150.0, 205.0);
      for (int c = 0; c < 3; ++c) blob.color[c] = base + rng.uniform(-6.0, 6.0);
      blob.alpha = rng.uniform(0.35, 0.6);
    } else if (kind == 1) {
      blob.sx = rng.uniform(res * 0.06, res * 0.11);
      blob.sy = rng.uniform(res * 0.06, res * 0.11);
      double margin = std::max(blob.sx, blob.sy) + 2.0;
      blob.cx = rng.uniform(margin, res - margin);
      blob.cy = rng.uniform(margin, res - margin);
      double base = rng.uniform(185.0, 240.0);
      for (int c = 0; c < 3; ++c) blob.color[c] = base + rng.uniform(-5.0, 5.0);
      blob.alpha = rng.uniform(0.4, 0.7);
      pulse_period = rng.uniform(5.0, 9.0);
      pulse_phase = rng.uniform(0.0, 2.0 * kPi);
    } else if (kind == 2) {
      box_w = rng.uniform(res / 8.0, res / 4.0);
      box_h = rng.uniform(res / 8.0, res / 4.0);
      box_x = rng.uniform(0.0, res - box_w);
      box_y = rng.uniform(0.0, res - box_h);
      double speed = rng.uniform(1.5, 3.0);
      double angle = rng.uniform(0.0, 2.0 * kPi);
      box_vx = speed * std::cos(angle);
      box_vy = speed * std::sin(angle);
      for (double& c : box_color) c = rng.uniform(30.0, 120.0);
    }

    static const char* kind_names[] = {"smoke", "steam", "box", "static"};
    clip.source_id = strfmt("S%d/%s/q%s/c%05d", site, kind_names[kind],
                            quadrant >= 0 ? std::to_string(quadrant).c_str() : "-", i);

    std::vector<double> frame(bg.size());
    double bx = box_x, by = box_y;
    double px = blob.cx, py = blob.cy;
    for (int f = 0; f < t_frames; ++f) {
      frame = bg;
      if (kind == 0) {
        if (f > 0) {
          // Drift with reflection at the quadrant walls so the plume stays
          // confined for the whole clip.
          double half = res / 2.0;
          double qx = (quadrant % 2) * half, qy = (quadrant / 2) * half;
          double margin = std::max(blob.sx, blob.sy) + 2.0;
          px += vx;
          py += vy;
          if (px < qx + margin || px > qx + half - margin) { vx = -vx; px += 2 * vx; }
          if (py < qy + margin || py > qy + half - margin) { vy = -vy; py += 2 * vy; }
        }
        Blob b = blob;
        b.cx = px + 0.3 * std::sin(f * 0.9);
        b.cy = py + 0.3 * std::cos(f * 1.1);
        double breathe = 1.0 + 0.05 * std::sin(f * 0.8 + 1.0);
        b.sx *= breathe;
        b.sy *= breathe;
        blend_blob(frame, res, b);
      } else if (kind == 1) {
        Blob b = blob;
        b.alpha = blob.alpha * (0.55 + 0.45 * std::sin(2.0 * kPi * f / pulse_period + pulse_phase));
        blend_blob(frame, res, b);
      } else if (kind == 2) {
        if (f > 0) {
          bx += box_vx;
          by += box_vy;
          if (bx < 0 || bx + box_w > res) { box_vx = -box_vx; bx += 2 * box_vx; }
          if (by < 0 || by + box_h > res) { box_vy = -box_vy; by += 2 * box_vy; }
        }
        int x0 = std::max(0, static_cast<int>(bx)), x1 = std::min(res - 1, static_cast<int>(bx + box_w));
        int y0 = std::max(0, static_cast<int>(by)), y1 = std::min(res - 1, static_cast<int>(by + box_h));
        for (int y = y0; y <= y1; ++y)
          for (int x = x0; x <= x1; ++x)
            for (int c = 0; c < 3; ++c)
              frame[(static_cast<size_t>(y) * res + x) * 3 + c] = box_color[c];
      }
      uint8_t* dst = clip.frame(f);
      for (size_t p = 0; p < frame.size(); ++p)
        dst[p] = clamp_u8(frame[p] + rng.uniform_int(-1, 1));
    }
    ds.clips.push_back(std::move(clip));
  }
  return ds;
}

int quadrant_of(const Clip& clip) {
  size_t pos = clip.source_id.find("/q");
  if (pos == std::string::npos) return -1;
  char c = pos + 2 < clip.source_id.size() ? clip.source_id[pos + 2] : '-';
  return c >= '0' && c <= '3' ? c - '0' : -1;
}

// ---- Container ---------------------------------------------------------------

std::vector<uint8_t> clip_encode(const ClipDataset& ds) {
  io::ByteWriter w;
  w.str("STCV1");
  if (ds.clips.size() > 0xffffffffULL)
    throw io::FormatError(io::FormatError::Kind::DimOverflow, "clip count exceeds u32");
  w.u32(static_cast<uint32_t>(ds.clips.size()));
  for (const Clip& c : ds.clips) {
    c.validate();
    if (c.source_id.size() > 0xffffffffULL)
      throw io::FormatError(io::FormatError::Kind::DimOverflow, "source_id exceeds u32");
    w.u16(c.t);
    w.u16(c.h);
    w.u16(c.w);
    w.u8(c.label);
    w.u32(static_cast<uint32_t>(c.source_id.size()));
    w.str(c.source_id);
    w.f32(c.fps);
    w.bytes(c.rgb.data(), c.rgb.size());
  }
  return w.take();
}

ClipDataset clip_decode(const std::vector<uint8_t>& bytes) {
  io::ByteReader r(bytes);
  char magic[5];
  r.bytes(magic, 5);
  if (std::memcmp(magic, "STCV1", 5) != 0)
    throw io::FormatError(io::FormatError::Kind::BadMagic, "bad container magic, expected STCV1");
  uint32_t count = r.u32();
  ClipDataset ds;
  ds.clips.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    Clip c;
    c.t = r.u16();
    c.h = r.u16();
    c.w = r.u16();
    c.label = r.u8();
    uint32_t idlen = r.u32();
    c.source_id = r.str(idlen);
    c.fps = r.f32();
    if (c.t < 2 || c.h < 1 || c.w < 1 || c.label > 1)
      throw io::FormatError(io::FormatError::Kind::Invalid,
                            strfmt("clip %u: invalid header fields", i));
    size_t nbytes = static_cast<size_t>(c.t) * c.h * c.w * 3;
    c.rgb.resize(nbytes);
    r.bytes(c.rgb.data(), nbytes);
    ds.clips.push_back(std::move(c));
  }
  if (!r.done())
    throw io::FormatError(io::FormatError::Kind::Invalid,
                          strfmt("%zu trailing bytes after last clip", r.remaining()));
  return ds;
}

void save_dataset(const ClipDataset& ds, const std::filesystem::path& path) {
  io::write_file(path, clip_encode(ds));
}

ClipDataset load_dataset(const std::filesystem::path& path) {
  return clip_decode(io::read_file(path));
}

}  // namespace stc::video
