#include "stc/explain.hpp"

#include <cmath>

#include <json.hpp>

#include "stc/serialize.hpp"

namespace stc::explain {

const char* path_name(PathSel p) { return p == PathSel::Spatial ? "spatial" : "temporal"; }

PathSel path_from_name(const std::string& name) {
  if (name == "spatial") return PathSel::Spatial;
  if (name == "temporal") return PathSel::Temporal;
  throw ValidationError(strfmt("path: unknown name '%s' (expected spatial|temporal)",
                               name.c_str()));
}

GradCamResult cam_from_activation_grad(std::span<const double> activation,
                                       std::span<const double> grad, int64_t t,
                                       int64_t c, int64_t h, int64_t w, PathSel path,
                                       int target_class) {
  int64_t hw = h * w;
  GradCamResult result;
  std::vector<double> aggregate(hw, 0.0);
  for (int64_t f = 0; f < t; ++f) {
    std::vector<double> map(hw, 0.0);
    for (int64_t ci = 0; ci < c; ++ci) {
      const double* gplane = grad.data() + (f * c + ci) * hw;
      const double* aplane = activation.data() + (f * c + ci) * hw;
      double wc = 0.0;
      for (int64_t j = 0; j < hw; ++j) wc += gplane[j];
      wc /= static_cast<double>(hw);
      for (int64_t j = 0; j < hw; ++j) map[j] += wc * aplane[j];
    }
    for (int64_t j = 0; j < hw; ++j) {
      map[j] = std::max(map[j], 0.0);
      aggregate[j] += map[j] / static_cast<double>(t);
    }
    Heatmap hm;
    hm.h = static_cast<int>(h);
    hm.w = static_cast<int>(w);
    hm.path = path;
    hm.frame = static_cast<int>(f);
    hm.target_class = target_class;
    double peak = 0.0;
    for (double v : map) peak = std::max(peak, v);
    if (peak > 0.0)
      for (double& v : map) v /= peak;
    hm.values = std::move(map);
    result.frames.push_back(std::move(hm));
  }

  result.aggregate.h = static_cast<int>(h);
  result.aggregate.w = static_cast<int>(w);
  result.aggregate.path = path;
  result.aggregate.frame = -1;
  result.aggregate.target_class = target_class;
  double peak = 0.0;
  for (double v : aggregate) peak = std::max(peak, v);
  if (peak > 0.0)
    for (double& v : aggregate) v /= peak;
  result.aggregate.values = std::move(aggregate);
  return result;
}

GradCamResult grad_cam(STCNetModel& model, const Tensor& rgb, const Tensor& res,
                       int target_class, PathSel path) {
  if (target_class < 0 || target_class >= model.config.n_classes)
    throw ValidationError(strfmt("grad_cam: class %d outside [0,%d)", target_class,
                                 model.config.n_classes));
  if (path == PathSel::Temporal && model.variant == FusionVariant::SpatialOnly)
    throw ValidationError("grad_cam: spatial_only model has no temporal path");
  bool was_training = model.training();
  model.set_training(false);

  Tape tape;
  ForwardTrace trace;
  Tensor logits = model.forward(&tape, rgb, res, &trace);
  Tensor activation = capture_activation(trace, path_name(path), "res4");
  Tensor target = ops::pick(&tape, logits, target_class);
  tape.backward(target);
  std::span<const double> grad = tape.grad_of(activation);
  // Leaf gradients accumulated by this backward are diagnostic residue; wipe
  // them so an interleaved training step never sees them.
  model.zero_grads();
  model.set_training(was_training);

  return cam_from_activation_grad(activation.data(), grad, activation.shape()[0],
                                  activation.shape()[1], activation.shape()[2],
                                  activation.shape()[3], path, target_class);
}

std::pair<int, int> argmax_cell(const Heatmap& h) {
  int best = 0;
  for (int i = 1; i < h.h * h.w; ++i)
    if (h.values[i] > h.values[best]) best = i;
  return {best / h.w, best % h.w};
}

std::vector<uint8_t> heatmap_pgm(const Heatmap& h, int out_resolution) {
  if (out_resolution < h.h || out_resolution % h.h != 0 || h.h != h.w)
    throw ValidationError(strfmt(
        "heatmap_pgm: resolution %d must be a positive multiple of the %dx%d map",
        out_resolution, h.h, h.w));
  std::string header = strfmt("P5\n%d %d\n255\n", out_resolution, out_resolution);
  std::vector<uint8_t> pgm(header.begin(), header.end());
  pgm.reserve(pgm.size() + static_cast<size_t>(out_resolution) * out_resolution);
  int scale = out_resolution / h.h;
  for (int y = 0; y < out_resolution; ++y)
    for (int x = 0; x < out_resolution; ++x) {
      double v = h.values[(y / scale) * h.w + (x / scale)];
      pgm.push_back(static_cast<uint8_t>(std::floor(v * 255.0 + 0.5)));  // round half up
    }
  return pgm;
}

std::string heatmap_sidecar_json(const Heatmap& h) {
  nlohmann::json rows = nlohmann::json::array();
  for (int y = 0; y < h.h; ++y) {
    nlohmann::json row = nlohmann::json::array();
    for (int x = 0; x < h.w; ++x) row.push_back(h.values[y * h.w + x]);
    rows.push_back(std::move(row));
  }
  nlohmann::json j{
      {"path", path_name(h.path)},
      {"frame", h.frame < 0 ? nlohmann::json("aggregate") : nlohmann::json(h.frame)},
      {"class", h.target_class},
      {"values", std::move(rows)},
  };
  return j.dump();
}

Heatmap heatmap_from_sidecar(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw io::FormatError(io::FormatError::Kind::Invalid,
                          strfmt("heatmap sidecar is not valid JSON: %s", e.what()));
  }
  Heatmap h;
  h.path = path_from_name(j.at("path").get<std::string>());
  h.frame = j.at("frame").is_string() ? -1 : j.at("frame").get<int>();
  h.target_class = j.at("class").get<int>();
  const auto& rows = j.at("values");
  h.h = static_cast<int>(rows.size());
  h.w = h.h > 0 ? static_cast<int>(rows[0].size()) : 0;
  for (const auto& row : rows) {
    if (static_cast<int>(row.size()) != h.w)
      throw io::FormatError(io::FormatError::Kind::Invalid, "ragged heatmap rows");
    for (const auto& v : row) h.values.push_back(v.get<double>());
  }
  return h;
}

void export_heatmap(const Heatmap& h, int out_resolution,
                    const std::filesystem::path& pgm_path,
                    const std::filesystem::path& json_path) {
  io::write_file(pgm_path, heatmap_pgm(h, out_resolution));
  std::string sidecar = heatmap_sidecar_json(h);
  io::write_file(json_path, std::vector<uint8_t>(sidecar.begin(), sidecar.end()));
}

}  // namespace stc::explain
