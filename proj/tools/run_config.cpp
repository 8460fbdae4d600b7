#include "run_config.hpp"

#include <json.hpp>

#include "stc/serialize.hpp"

namespace stc::cli {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const char* where,
                std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* key : allowed)
      if (it.key() == key) {
        ok = true;
        break;
      }
    if (!ok)
      throw ValidationError(strfmt("config: unknown key '%s' in %s", it.key().c_str(), where));
  }
}

template <typename T>
void opt(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) obj.at(key).get_to(out);
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ValidationError(strfmt("config: invalid JSON: %s", e.what()));
  }
  if (!j.is_object()) throw ValidationError("config: top level must be an object");
  check_keys(j, "top level",
             {"model", "variant", "optimizer", "sampler", "residual", "augment", "seed",
              "paths"});

  RunConfig cfg;
  try {
    if (j.contains("model")) {
      const json& m = j.at("model");
      check_keys(m, "model",
                 {"stage_blocks", "stage_out_channels", "cardinality", "se_ratio",
                  "stem_channels", "fuse_channels", "input_resolution", "n_frames",
                  "n_classes"});
      opt(m, "stage_blocks", cfg.model.stage_blocks);
      opt(m, "stage_out_channels", cfg.model.stage_out_channels);
      opt(m, "cardinality", cfg.model.cardinality);
      opt(m, "se_ratio", cfg.model.se_ratio);
      opt(m, "stem_channels", cfg.model.stem_channels);
      opt(m, "fuse_channels", cfg.model.fuse_channels);
      opt(m, "input_resolution", cfg.model.input_resolution);
      opt(m, "n_frames", cfg.model.n_frames);
      opt(m, "n_classes", cfg.model.n_classes);
    }
    if (j.contains("variant"))
      cfg.variant = variant_from_name(j.at("variant").get<std::string>());
    if (j.contains("optimizer")) {
      const json& o = j.at("optimizer");
      check_keys(o, "optimizer", {"lr", "momentum", "weight_decay", "batch_size", "epochs"});
      opt(o, "lr", cfg.optimizer.lr);
      opt(o, "momentum", cfg.optimizer.momentum);
      opt(o, "weight_decay", cfg.optimizer.weight_decay);
      opt(o, "batch_size", cfg.optimizer.batch_size);
      opt(o, "epochs", cfg.optimizer.epochs);
    }
    if (j.contains("sampler")) {
      const json& s = j.at("sampler");
      check_keys(s, "sampler", {"n_segments", "mode"});
      opt(s, "n_segments", cfg.sampler.n_segments);
      if (s.contains("mode")) {
        std::string mode = s.at("mode").get<std::string>();
        if (mode == "center")
          cfg.sample_mode = video::SampleMode::Center;
        else if (mode == "random")
          cfg.sample_mode = video::SampleMode::Random;
        else
          throw ValidationError(strfmt("config: sampler.mode '%s' not center|random",
                                       mode.c_str()));
      }
    }
    if (j.contains("residual")) {
      const json& r = j.at("residual");
      check_keys(r, "residual", {"alpha", "beta"});
      opt(r, "alpha", cfg.residual.alpha);
      opt(r, "beta", cfg.residual.beta);
    }
    if (j.contains("augment")) {
      const json& a = j.at("augment");
      check_keys(a, "augment",
                 {"flip_prob", "crop_scale_range", "perspective_strength", "erase_prob",
                  "erase_area_range", "jitter"});
      opt(a, "flip_prob", cfg.augment.flip_prob);
      opt(a, "crop_scale_range", cfg.augment.crop_scale_range);
      opt(a, "perspective_strength", cfg.augment.perspective_strength);
      opt(a, "erase_prob", cfg.augment.erase_prob);
      opt(a, "erase_area_range", cfg.augment.erase_area_range);
      if (a.contains("jitter")) {
        const json& jit = a.at("jitter");
        check_keys(jit, "augment.jitter", {"brightness", "contrast", "saturation"});
        opt(jit, "brightness", cfg.augment.jitter.brightness);
        opt(jit, "contrast", cfg.augment.jitter.contrast);
        opt(jit, "saturation", cfg.augment.jitter.saturation);
      }
    }
    opt(j, "seed", cfg.seed);
    cfg.optimizer.seed = cfg.seed;
    if (j.contains("paths")) {
      const json& p = j.at("paths");
      check_keys(p, "paths", {"dataset", "out_dir"});
      opt(p, "dataset", cfg.dataset);
      opt(p, "out_dir", cfg.out_dir);
    }
  } catch (const json::exception& e) {
    throw ValidationError(strfmt("config: bad field type: %s", e.what()));
  }

  cfg.model.validate();
  cfg.optimizer.validate();
  cfg.residual.validate();
  cfg.augment.validate();
  if (cfg.sampler.n_segments < 1)
    throw ValidationError("config: sampler.n_segments must be >= 1");
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  auto bytes = io::read_file(path);
  return parse_run_config(std::string(bytes.begin(), bytes.end()));
}

}  // namespace stc::cli
