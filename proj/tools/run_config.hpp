#pragma once

#include <filesystem>

#include "stc/stcnet.hpp"
#include "stc/train.hpp"

namespace stc::cli {

// One JSON document drives every command that needs a model: backbone,
// variant, optimizer, sampling, residual and augmentation settings plus the
// run seed and file paths. Unknown keys are rejected at every level.
struct RunConfig {
  BackboneConfig model = BackboneConfig::micro();
  FusionVariant variant = FusionVariant::Full;
  train::SGDConfig optimizer;
  video::SamplerSpec sampler;
  video::SampleMode sample_mode = video::SampleMode::Random;
  video::ResidualSpec residual;
  video::AugmentSpec augment;
  uint64_t seed = 0;
  std::string dataset;
  std::string out_dir = ".";

  train::PreprocessSpec preprocess() const {
    return {sampler, residual, augment, sample_mode};
  }
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace stc::cli
