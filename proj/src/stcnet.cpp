#include "stc/stcnet.hpp"

#include <cmath>

namespace stc {

const char* variant_name(FusionVariant v) {
  switch (v) {
    case FusionVariant::Full: return "full";
    case FusionVariant::A: return "a";
    case FusionVariant::B: return "b";
    case FusionVariant::C: return "c";
    case FusionVariant::SpatialOnly: return "spatial_only";
  }
  return "?";
}

FusionVariant variant_from_name(const std::string& name) {
  if (name == "full") return FusionVariant::Full;
  if (name == "a") return FusionVariant::A;
  if (name == "b") return FusionVariant::B;
  if (name == "c") return FusionVariant::C;
  if (name == "spatial_only") return FusionVariant::SpatialOnly;
  throw ValidationError(strfmt(
      "variant: unknown name '%s' (expected full|a|b|c|spatial_only)", name.c_str()));
}

BackboneConfig BackboneConfig::micro() {
  BackboneConfig c;
  c.stage_blocks = {1, 1, 1, 1};
  c.stage_out_channels = {32, 64, 128, 256};
  c.cardinality = 4;
  c.se_ratio = 4;
  c.stem_channels = 8;  // same 1:4 ratio to the first stage width as Table I
  c.fuse_channels = 64;
  c.input_resolution = 56;
  c.n_frames = 8;
  return c;
}

BackboneConfig BackboneConfig::nano() {
  BackboneConfig c;
  c.stage_blocks = {1, 1, 1, 1};
  c.stage_out_channels = {4, 4, 8, 8};
  c.cardinality = 2;
  c.se_ratio = 2;
  c.stem_channels = 2;
  c.fuse_channels = 4;
  c.input_resolution = 32;
  c.n_frames = 2;
  return c;
}

void BackboneConfig::validate() const {
  for (int b : stage_blocks)
    if (b < 1) throw ValidationError("config: stage_blocks entries must be >= 1");
  for (int w : stage_out_channels)
    if (w < 2 || w % 2 != 0)
      throw ValidationError("config: stage_out_channels must be positive and even");
  if (cardinality < 1) throw ValidationError("config: cardinality must be >= 1");
  if (se_ratio < 1) throw ValidationError("config: se_ratio must be >= 1");
  for (int w : stage_out_channels) {
    if ((w / 2) % cardinality != 0)
      throw ValidationError(strfmt(
          "config: bottleneck width %d not divisible by cardinality %d", w / 2, cardinality));
    if (w % se_ratio != 0)
      throw ValidationError(
          strfmt("config: stage width %d not divisible by se_ratio %d", w, se_ratio));
  }
  if (stem_channels < 1) throw ValidationError("config: stem_channels must be >= 1");
  if (fuse_channels < 1) throw ValidationError("config: fuse_channels must be >= 1");
  // The stage ladder has stride 32 overall; divisibility by 8 keeps conv1,
  // pool1 and the first two stages on exact halves while the deeper stages
  // follow the floor arithmetic of the conv shape formula.
  if (input_resolution < 32 || input_resolution % 8 != 0)
    throw ValidationError(strfmt(
        "config: input_resolution %d must be >= 32 and divisible by 8", input_resolution));
  if (n_frames < 1) throw ValidationError("config: n_frames must be >= 1");
  if (n_classes < 2) throw ValidationError("config: n_classes must be >= 2");
}

namespace {

Bottleneck make_bottleneck(int in_ch, int out_ch, int stride, int cardinality,
                           int se_ratio, Rng& rng) {
  int mid = out_ch / 2;
  Bottleneck b;
  b.conv1 = nn::Conv2d::make({in_ch, mid, 1, 1, 1, 1, 0, 0, 1}, false, rng);
  b.conv2 = nn::Conv2d::make({mid, mid, 3, 3, stride, stride, 1, 1, cardinality}, false, rng);
  b.conv3 = nn::Conv2d::make({mid, out_ch, 1, 1, 1, 1, 0, 0, 1}, false, rng);
  b.bn1 = nn::BatchNorm2d::make(mid);
  b.bn2 = nn::BatchNorm2d::make(mid);
  b.bn3 = nn::BatchNorm2d::make(out_ch);
  b.se = nn::SEBlock::make({out_ch, se_ratio}, rng);
  if (in_ch != out_ch || stride != 1) {
    b.down_conv = nn::Conv2d::make({in_ch, out_ch, 1, 1, stride, stride, 0, 0, 1}, false, rng);
    b.down_bn = nn::BatchNorm2d::make(out_ch);
  }
  return b;
}

Pathway make_pathway(const BackboneConfig& cfg, Rng& rng) {
  Pathway p;
  p.conv1 = nn::Conv2d::make({3, cfg.stem_channels, 7, 7, 2, 2, 3, 3, 1}, false, rng);
  p.bn1 = nn::BatchNorm2d::make(cfg.stem_channels);
  int in_ch = cfg.stem_channels;
  for (int s = 0; s < 4; ++s) {
    int out_ch = cfg.stage_out_channels[s];
    int stride = s == 0 ? 1 : 2;
    for (int b = 0; b < cfg.stage_blocks[s]; ++b) {
      p.stages[s].push_back(make_bottleneck(in_ch, out_ch, b == 0 ? stride : 1,
                                            cfg.cardinality, cfg.se_ratio, rng));
      in_ch = out_ch;
    }
  }
  return p;
}

void collect_bn(std::vector<ParamRef>& out, const std::string& prefix, nn::BatchNorm2d& bn) {
  out.push_back({prefix + ".gamma", bn.gamma, false});
  out.push_back({prefix + ".beta", bn.beta, false});
}

void collect_pathway(std::vector<ParamRef>& out, const std::string& path, Pathway& p) {
  out.push_back({path + ".conv1.weight", p.conv1.weight, true});
  collect_bn(out, path + ".bn1", p.bn1);
  for (int s = 0; s < 4; ++s)
    for (size_t b = 0; b < p.stages[s].size(); ++b) {
      std::string pre = strfmt("%s.res%d.%zu", path.c_str(), s + 1, b);
      Bottleneck& blk = p.stages[s][b];
      out.push_back({pre + ".conv1.weight", blk.conv1.weight, true});
      collect_bn(out, pre + ".bn1", blk.bn1);
      out.push_back({pre + ".conv2.weight", blk.conv2.weight, true});
      collect_bn(out, pre + ".bn2", blk.bn2);
      out.push_back({pre + ".conv3.weight", blk.conv3.weight, true});
      collect_bn(out, pre + ".bn3", blk.bn3);
      out.push_back({pre + ".se.fc1.weight", blk.se.fc1.weight, true});
      out.push_back({pre + ".se.fc1.bias", blk.se.fc1.bias, false});
      out.push_back({pre + ".se.fc2.weight", blk.se.fc2.weight, true});
      out.push_back({pre + ".se.fc2.bias", blk.se.fc2.bias, false});
      if (blk.down_conv) {
        out.push_back({pre + ".down.conv.weight", blk.down_conv->weight, true});
        collect_bn(out, pre + ".down.bn", *blk.down_bn);
      }
    }
}

void collect_pathway_buffers(std::vector<BufferRef>& out, const std::string& path, Pathway& p) {
  out.push_back({path + ".bn1.running_mean", &p.bn1.running_mean});
  out.push_back({path + ".bn1.running_var", &p.bn1.running_var});
  for (int s = 0; s < 4; ++s)
    for (size_t b = 0; b < p.stages[s].size(); ++b) {
      std::string pre = strfmt("%s.res%d.%zu", path.c_str(), s + 1, b);
      Bottleneck& blk = p.stages[s][b];
      out.push_back({pre + ".bn1.running_mean", &blk.bn1.running_mean});
      out.push_back({pre + ".bn1.running_var", &blk.bn1.running_var});
      out.push_back({pre + ".bn2.running_mean", &blk.bn2.running_mean});
      out.push_back({pre + ".bn2.running_var", &blk.bn2.running_var});
      out.push_back({pre + ".bn3.running_mean", &blk.bn3.running_mean});
      out.push_back({pre + ".bn3.running_var", &blk.bn3.running_var});
      if (blk.down_bn) {
        out.push_back({pre + ".down.bn.running_mean", &blk.down_bn->running_mean});
        out.push_back({pre + ".down.bn.running_var", &blk.down_bn->running_var});
      }
    }
}

}  // namespace

Tensor Bottleneck::forward(Tape* tape, const Tensor& x, bool training) {
  Tensor y = ops::relu(tape, bn1.forward(tape, conv1.forward(tape, x), training));
  y = ops::relu(tape, bn2.forward(tape, conv2.forward(tape, y), training));
  y = bn3.forward(tape, conv3.forward(tape, y), training);
  y = se.forward(tape, y);
  Tensor skip = x;
  if (down_conv) skip = down_bn->forward(tape, down_conv->forward(tape, skip), training);
  return ops::relu(tape, ops::add(tape, y, skip));
}

Tensor Pathway::stem(Tape* tape, const Tensor& x, bool training) {
  Tensor y = ops::relu(tape, bn1.forward(tape, conv1.forward(tape, x), training));
  return y;
}

Tensor Pathway::run_stage(Tape* tape, const Tensor& x, int stage_index, bool training) {
  if (stage_index < 1 || stage_index > 4)
    throw ValidationError(strfmt("run_stage: index %d outside 1..4", stage_index));
  Tensor y = x;
  for (auto& block : stages[stage_index - 1]) y = block.forward(tape, y, training);
  return y;
}

std::pair<Tensor, Tensor> fuse_stage(Tape* tape, const Tensor& sf, const Tensor& tf,
                                     FusionVariant variant, int stage_index) {
  if (sf.shape() != tf.shape())
    throw ValidationError(strfmt("fuse_stage: shape mismatch %s vs %s",
                                 sf.shape().str().c_str(), tf.shape().str().c_str()));
  switch (variant) {
    case FusionVariant::Full: {
      Tensor s = ops::add(tape, sf, tf);
      return {s, s};
    }
    case FusionVariant::B:
      return {ops::add(tape, sf, tf), tf};
    case FusionVariant::C:
      if (stage_index == 1) {
        Tensor s = ops::add(tape, sf, tf);
        return {s, s};
      }
      return {sf, tf};
    case FusionVariant::A:
      return {sf, tf};
    case FusionVariant::SpatialOnly:
      throw ValidationError("fuse_stage: spatial_only model has no cross fusion");
  }
  return {sf, tf};
}

STCNetModel build_model(const BackboneConfig& config, FusionVariant variant,
                        uint64_t seed) {
  config.validate();
  STCNetModel m;
  m.config = config;
  m.variant = variant;
  m.seed = seed;
  Rng rng(mix_seed(seed, 0x57434e53ULL));  // model-init stream

  m.spatial = make_pathway(config, rng);
  bool two_path = variant != FusionVariant::SpatialOnly;
  if (two_path) {
    m.temporal = make_pathway(config, rng);
    m.fuse_conv = nn::Conv2d::make(
        {config.stage_out_channels[3], config.fuse_channels, 1, 1, 1, 1, 0, 0, 1}, false, rng);
    m.fuse_bn = nn::BatchNorm2d::make(config.fuse_channels);
  }
  int cls_in = two_path ? config.fuse_channels : config.stage_out_channels[3];
  m.cls_conv = nn::Conv2d::make({cls_in, config.fuse_channels, 1, 1, 1, 1, 0, 0, 1}, false, rng);
  m.cls_bn = nn::BatchNorm2d::make(config.fuse_channels);
  m.out = nn::Linear::make(config.fuse_channels, config.n_classes, rng);
  return m;
}

Tensor STCNetModel::forward(Tape* tape, const Tensor& rgb, const Tensor& res,
                            ForwardTrace* trace) {
  int r = config.input_resolution;
  Shape expected{config.n_frames, 3, r, r};
  if (rgb.shape() != expected)
    throw ValidationError(strfmt("forward: rgb shape %s, expected %s",
                                 rgb.shape().str().c_str(), expected.str().c_str()));
  bool two_path = variant != FusionVariant::SpatialOnly;
  if (two_path && res.shape() != expected)
    throw ValidationError(strfmt("forward: residual shape %s, expected %s",
                                 res.shape().str().c_str(), expected.str().c_str()));

  auto tap = [&](const std::string& key, const Tensor& t) {
    if (trace) trace->taps[key] = t;
  };

  Tensor sf = spatial.stem(tape, rgb, training_);
  tap("spatial.conv1", sf);
  sf = nn::maxpool2d(tape, sf, 3, 3, 2, 2, 1, 1);
  tap("spatial.pool1", sf);

  Tensor tf;
  if (two_path) {
    tf = temporal->stem(tape, res, training_);
    tap("temporal.conv1", tf);
    tf = nn::maxpool2d(tape, tf, 3, 3, 2, 2, 1, 1);
    tap("temporal.pool1", tf);
  }

  for (int s = 1; s <= 4; ++s) {
    sf = spatial.run_stage(tape, sf, s, training_);
    if (two_path) {
      tf = temporal->run_stage(tape, tf, s, training_);
      if (s <= 3) std::tie(sf, tf) = fuse_stage(tape, sf, tf, variant, s);
    }
    tap(strfmt("spatial.res%d", s), sf);
    if (two_path) tap(strfmt("temporal.res%d", s), tf);
  }

  Tensor head = sf;
  if (two_path) {
    head = ops::add(tape, sf, tf);
    head = ops::relu(tape, fuse_bn->forward(tape, fuse_conv->forward(tape, head), training_));
    tap("fuse", head);
  }
  head = ops::relu(tape, cls_bn.forward(tape, cls_conv.forward(tape, head), training_));
  head = nn::adaptive_avg_pool(tape, head);
  tap("cls", head);
  head = ops::reshape(tape, head, Shape{1, config.fuse_channels});
  return out.forward(tape, head);
}

std::vector<ParamRef> STCNetModel::parameters() {
  std::vector<ParamRef> params;
  collect_pathway(params, "spatial", spatial);
  if (temporal) collect_pathway(params, "temporal", *temporal);
  if (fuse_conv) {
    params.push_back({"fuse.conv.weight", fuse_conv->weight, true});
    collect_bn(params, "fuse.bn", *fuse_bn);
  }
  params.push_back({"cls.conv.weight", cls_conv.weight, true});
  collect_bn(params, "cls.bn", cls_bn);
  params.push_back({"out.weight", out.weight, true});
  params.push_back({"out.bias", out.bias, false});
  return params;
}

std::vector<BufferRef> STCNetModel::buffers() {
  std::vector<BufferRef> bufs;
  collect_pathway_buffers(bufs, "spatial", spatial);
  if (temporal) collect_pathway_buffers(bufs, "temporal", *temporal);
  if (fuse_bn) {
    bufs.push_back({"fuse.bn.running_mean", &fuse_bn->running_mean});
    bufs.push_back({"fuse.bn.running_var", &fuse_bn->running_var});
  }
  bufs.push_back({"cls.bn.running_mean", &cls_bn.running_mean});
  bufs.push_back({"cls.bn.running_var", &cls_bn.running_var});
  return bufs;
}

int64_t STCNetModel::param_count() {
  int64_t count = 0;
  for (auto& p : parameters()) count += p.tensor.numel();
  return count;
}

void STCNetModel::zero_grads() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

Tensor capture_activation(const ForwardTrace& trace, const std::string& path,
                          const std::string& stage) {
  std::string key = path + "." + stage;
  auto it = trace.taps.find(key);
  if (it == trace.taps.end()) {
    std::string valid;
    for (auto& [k, v] : trace.taps) {
      if (!valid.empty()) valid += ", ";
      valid += k;
    }
    throw ValidationError(strfmt("capture_activations: unknown tap '%s'; valid taps: %s",
                                 key.c_str(), valid.c_str()));
  }
  return it->second;
}

}  // namespace stc
