#pragma once

#include <optional>

#include "stc/ops.hpp"
#include "stc/rng.hpp"

namespace stc::nn {

struct Conv2dSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kh = 1, kw = 1;
  int sh = 1, sw = 1;
  int ph = 0, pw = 0;
  int groups = 1;

  void validate() const;
  static int64_t out_dim(int64_t in, int k, int s, int p) {
    return (in + 2 * p - k) / s + 1;
  }
  std::string str() const;
};

// x: [N, Cin, H, W], weight: [Cout, Cin/groups, kh, kw], bias: [Cout] or null.
// Cross-correlation per group (the usual CNN convention).
Tensor conv2d(Tape* tape, const Tensor& x, const Tensor& weight, const Tensor* bias,
              const Conv2dSpec& spec);

// Per-window max; gradient routes to the first-occurrence argmax.
Tensor maxpool2d(Tape* tape, const Tensor& x, int kh, int kw, int sh, int sw, int ph,
                 int pw);

// Mean over every non-channel axis: [N,C,H,W] -> [1,C,1,1].
Tensor adaptive_avg_pool(Tape* tape, const Tensor& x);

// Mean over the spatial axes only: [N,C,H,W] -> [N,C].
Tensor global_avg_pool_hw(Tape* tape, const Tensor& x);

// out[n,c,h,w] = x[n,c,h,w] * s[n,c].
Tensor channel_scale(Tape* tape, const Tensor& x, const Tensor& s);

// x: [N,Din], weight: [Dout,Din], bias: [Dout] or null -> [N,Dout].
Tensor linear(Tape* tape, const Tensor& x, const Tensor& weight, const Tensor* bias);

// Mean over the batch of -log softmax(logits)[label]; max-subtraction
// stabilized. labels: one class index per row, in [0, K).
Tensor softmax_cross_entropy(Tape* tape, const Tensor& logits,
                             std::span<const int> labels);

// ---- Layer containers ------------------------------------------------------

struct Conv2d {
  Conv2dSpec spec;
  Tensor weight;
  std::optional<Tensor> bias;

  static Conv2d make(const Conv2dSpec& spec, bool with_bias, Rng& rng);
  Tensor forward(Tape* tape, const Tensor& x) const {
    return conv2d(tape, x, weight, bias ? &*bias : nullptr, spec);
  }
};

struct BatchNorm2d {
  Tensor gamma, beta;  // learnable, [C]
  std::vector<double> running_mean, running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  static BatchNorm2d make(int channels);
  int channels() const { return static_cast<int>(running_mean.size()); }
  // training=true normalizes by batch statistics and updates the running
  // buffers; training=false uses the running buffers only.
  Tensor forward(Tape* tape, const Tensor& x, bool training);
};

struct Linear {
  Tensor weight, bias;

  static Linear make(int in_features, int out_features, Rng& rng);
  Tensor forward(Tape* tape, const Tensor& x) const {
    return linear(tape, x, weight, &bias);
  }
};

struct SEBlockSpec {
  int channels = 0;
  int reduction_ratio = 16;
  void validate() const;
};

// Squeeze-and-excitation: global pool -> bottleneck MLP -> sigmoid gate that
// rescales channels.
struct SEBlock {
  SEBlockSpec spec;
  Linear fc1, fc2;

  static SEBlock make(const SEBlockSpec& spec, Rng& rng);
  Tensor forward(Tape* tape, const Tensor& x) const;
};

}  // namespace stc::nn
