#pragma once

#include <filesystem>

#include "stc/stcnet.hpp"

namespace stc::explain {

enum class PathSel { Spatial, Temporal };

const char* path_name(PathSel p);
PathSel path_from_name(const std::string& name);

// Max-normalized nonnegative class activation map at the res4 resolution.
// frame is the frame index, or -1 for the mean-over-frames aggregate.
struct Heatmap {
  int h = 0, w = 0;
  std::vector<double> values;  // in [0,1]; an all-zero map stays all-zero
  PathSel path = PathSel::Temporal;
  int frame = -1;
  int target_class = 0;
};

struct GradCamResult {
  std::vector<Heatmap> frames;
  Heatmap aggregate;
};

// Grad-CAM over the chosen path's res4 activation A: with G = d logit[target]
// / dA, per-frame channel weights are the spatial means of G and the map is
// ReLU(sum_c w_c * A_c), max-normalized. The aggregate averages the
// unnormalized per-frame maps before normalizing. Runs the model in eval mode
// and never mutates it.
GradCamResult grad_cam(STCNetModel& model, const Tensor& rgb, const Tensor& res,
                       int target_class, PathSel path);

// The map arithmetic alone, on a [T,C,H,W] activation and its gradient.
// Exposed so the weighting/ReLU/normalization rules are testable in
// isolation.
GradCamResult cam_from_activation_grad(std::span<const double> activation,
                                       std::span<const double> grad, int64_t t,
                                       int64_t c, int64_t h, int64_t w, PathSel path,
                                       int target_class);

// Row-major argmax cell of a heatmap (first occurrence on ties).
std::pair<int, int> argmax_cell(const Heatmap& h);

// PGM (P5, maxval 255) after nearest-neighbor upscale to out_resolution,
// byte = floor(v*255 + 0.5) (round half up), plus a JSON sidecar carrying the
// raw map values exactly.
void export_heatmap(const Heatmap& h, int out_resolution,
                    const std::filesystem::path& pgm_path,
                    const std::filesystem::path& json_path);

std::vector<uint8_t> heatmap_pgm(const Heatmap& h, int out_resolution);
std::string heatmap_sidecar_json(const Heatmap& h);
Heatmap heatmap_from_sidecar(const std::string& json_text);

}  // namespace stc::explain
