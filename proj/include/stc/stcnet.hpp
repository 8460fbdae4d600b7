#pragma once

#include <map>

#include "stc/nn.hpp"

namespace stc {

// Cross-fusion topology. Full fuses bidirectionally after res1..res3; A has
// no mid-level fusion (late sum only); B fuses temporal->spatial only; C
// fuses bidirectionally after res1 only. SpatialOnly drops the temporal path
// entirely and is the plain single-backbone baseline used by the ablation
// runner.
enum class FusionVariant { Full, A, B, C, SpatialOnly };

const char* variant_name(FusionVariant v);
FusionVariant variant_from_name(const std::string& name);

struct BackboneConfig {
  std::array<int, 4> stage_blocks{3, 4, 6, 3};
  std::array<int, 4> stage_out_channels{256, 512, 1024, 2048};
  int cardinality = 32;
  int se_ratio = 16;
  int stem_channels = 64;
  int fuse_channels = 256;
  int input_resolution = 224;
  int n_frames = 8;
  int n_classes = 2;

  static BackboneConfig full_scale() { return BackboneConfig{}; }
  // Desk-scale config: trains on CPU in minutes while exercising every
  // architectural mechanism (grouped convs, SE, fusion, BN, pooling).
  static BackboneConfig micro();
  // Smallest valid config; used by the end-to-end finite-difference check
  // where every parameter coordinate gets two forward evaluations.
  static BackboneConfig nano();

  void validate() const;
};

// One backbone path: stem (7x7/2 conv, BN, ReLU, 3x3/2 max pool) followed by
// four stages of SE-ResNeXt bottlenecks with strides {1,2,2,2}, i.e. feature
// strides {4,8,16,32} relative to the input.
struct Bottleneck {
  nn::Conv2d conv1, conv2, conv3;  // 1x1 reduce, 3x3 grouped (stride), 1x1 expand
  nn::BatchNorm2d bn1, bn2, bn3;
  nn::SEBlock se;
  std::optional<nn::Conv2d> down_conv;
  std::optional<nn::BatchNorm2d> down_bn;

  Tensor forward(Tape* tape, const Tensor& x, bool training);
};

struct Pathway {
  nn::Conv2d conv1;
  nn::BatchNorm2d bn1;
  std::array<std::vector<Bottleneck>, 4> stages;

  Tensor stem(Tape* tape, const Tensor& x, bool training);
  Tensor run_stage(Tape* tape, const Tensor& x, int stage_index, bool training);
};

// Cross operation between same-shape feature maps of the two paths after
// stage `stage_index` (1-based, applied after stages 1..3).
std::pair<Tensor, Tensor> fuse_stage(Tape* tape, const Tensor& sf, const Tensor& tf,
                                     FusionVariant variant, int stage_index);

struct ParamRef {
  std::string name;
  Tensor tensor;  // shares data/grad with the model
  bool decay;     // weight decay applies (conv/linear weights only)
};

struct BufferRef {
  std::string name;
  std::vector<double>* data;
};

// Stage activations recorded during forward; keys are "<path>.<tap>" with
// path in {spatial, temporal} and tap in {conv1, pool1, res1..res4}, plus
// "fuse" and "cls" for the heads.
struct ForwardTrace {
  std::map<std::string, Tensor> taps;
};

class STCNetModel {
 public:
  STCNetModel() = default;

  BackboneConfig config;
  FusionVariant variant = FusionVariant::Full;
  uint64_t seed = 0;

  Pathway spatial;
  std::optional<Pathway> temporal;
  std::optional<nn::Conv2d> fuse_conv;
  std::optional<nn::BatchNorm2d> fuse_bn;
  nn::Conv2d cls_conv;
  nn::BatchNorm2d cls_bn;
  nn::Linear out;

  void set_training(bool training) { training_ = training; }
  bool training() const { return training_; }

  // rgb, res: [T, 3, R, R] in [0,1]. Returns logits [1, n_classes].
  Tensor forward(Tape* tape, const Tensor& rgb, const Tensor& res,
                 ForwardTrace* trace = nullptr);

  std::vector<ParamRef> parameters();
  std::vector<BufferRef> buffers();
  int64_t param_count();
  void zero_grads();

 private:
  bool training_ = false;
};

STCNetModel build_model(const BackboneConfig& config, FusionVariant variant,
                        uint64_t seed);

// Validated tap lookup on a completed trace; lists valid taps on error.
Tensor capture_activation(const ForwardTrace& trace, const std::string& path,
                          const std::string& stage);

}  // namespace stc
