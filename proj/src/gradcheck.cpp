#include "stc/gradcheck.hpp"

#include <cmath>

#include "stc/nn.hpp"

namespace stc::gradcheck {

namespace {

Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> data(shape.numel());
  for (auto& v : data) v = rng.uniform(lo, hi);
  return Tensor(shape, std::move(data));
}

// Pushes every value at least `margin` away from zero (ReLU kink).
Tensor nudged(Tensor t, double margin) {
  std::vector<double> data(t.data().begin(), t.data().end());
  for (auto& v : data) {
    if (std::fabs(v) < margin) v = v >= 0.0 ? margin : -margin;
  }
  return Tensor(t.shape(), std::move(data));
}

// Scalar projection loss sum(out * r): exercises general upstream gradients.
Tensor projected(Tape* tape, const Tensor& out, const Tensor& r) {
  return ops::sum(tape, ops::mul(tape, out, r));
}

}  // namespace

double model_grad_check(STCNetModel& model, const Tensor& rgb, const Tensor& res,
                        int label, double eps) {
  model.set_training(true);
  std::array<int, 1> labels{label};

  auto eval_loss = [&]() {
    Tensor logits = model.forward(nullptr, rgb, res);
    return nn::softmax_cross_entropy(nullptr, logits, labels).value();
  };

  model.zero_grads();
  {
    Tape tape;
    Tensor logits = model.forward(&tape, rgb, res);
    Tensor loss = nn::softmax_cross_entropy(&tape, logits, labels);
    tape.backward(loss);
  }

  double worst = 0.0;
  for (auto& p : model.parameters()) {
    auto w = p.tensor.mutable_data();
    auto g = p.tensor.grad();
    for (size_t i = 0; i < w.size(); ++i) {
      double orig = w[i];
      w[i] = orig + eps;
      double fp = eval_loss();
      w[i] = orig - eps;
      double fm = eval_loss();
      w[i] = orig;
      double numeric = (fp - fm) / (2.0 * eps);
      double denom = std::max({1.0, std::fabs(g[i]), std::fabs(numeric)});
      worst = std::max(worst, std::fabs(g[i] - numeric) / denom);
    }
  }
  model.zero_grads();
  return worst;
}

OpResult run_model_check(uint64_t seed, double eps) {
  STCNetModel model = build_model(BackboneConfig::nano(), FusionVariant::Full, seed);
  Rng rng(mix_seed(seed, 0x6E2Du));
  int r = model.config.input_resolution;
  int t = model.config.n_frames;
  Tensor rgb = random_tensor(Shape{t, 3, r, r}, rng, 0.0, 1.0);
  Tensor res = random_tensor(Shape{t, 3, r, r}, rng, 0.0, 1.0);
  int label = static_cast<int>(rng.uniform_int(0, model.config.n_classes - 1));
  return {"stcnet_micro_loss", model_grad_check(model, rgb, res, label, eps)};
}

std::vector<OpResult> run_op_suite(int seeds, double eps) {
  std::vector<OpResult> results;
  auto run = [&](const std::string& name, auto&& one_seed) {
    double worst = 0.0;
    for (int s = 0; s < seeds; ++s) {
      Rng rng(mix_seed(0xFD0Cu, static_cast<uint64_t>(s),
                       std::hash<std::string>{}(name)));
      worst = std::max(worst, one_seed(rng));
    }
    results.push_back({name, worst});
  };

  run("elementwise_add", [&](Rng& rng) {
    Shape s{2, 3, 4};
    Tensor b = random_tensor(s, rng);
    Tensor r = random_tensor(s, rng);
    return ops::finite_diff_check(
        [&](Tape* t, const Tensor& x) { return projected(t, ops::add(t, x, b), r); },
        random_tensor(s, rng), eps);
  });

  run("scalar_scale", [&](Rng& rng) {
    Shape s{3, 5};
    double k = rng.uniform(-3.0, 3.0);
    Tensor r = random_tensor(s, rng);
    return ops::finite_diff_check(
        [&](Tape* t, const Tensor& x) { return projected(t, ops::scale(t, x, k), r); },
        random_tensor(s, rng), eps);
  });

  run("relu", [&](Rng& rng) {
    Shape s{4, 6};
    Tensor r = random_tensor(s, rng);
    return ops::finite_diff_check(
        [&](Tape* t, const Tensor& x) { return projected(t, ops::relu(t, x), r); },
        nudged(random_tensor(s, rng), 1e-3), eps);
  });

  run("sigmoid", [&](Rng& rng) {
    Shape s{4, 6};
    Tensor r = random_tensor(s, rng);
    return ops::finite_diff_check(
        [&](Tape* t, const Tensor& x) { return projected(t, ops::sigmoid(t, x), r); },
        random_tensor(s, rng, -4.0, 4.0), eps);
  });

  run("conv2d_x", [&](Rng& rng) {
    nn::Conv2dSpec spec{3, 4, 3, 3, 2, 2, 1, 1, 1};
    Tensor w = random_tensor(Shape{4, 3, 3, 3}, rng);
    Tensor b = random_tensor(Shape{4}, rng);
    Tensor r = random_tensor(Shape{2, 4, 4, 4}, rng);
    return ops::finite_diff_check(
        [&](Tape* t, const Tensor& x) {
          return projected(t, nn::conv2d(t, x, w, &b, spec), r);
        },
        random_tensor(Shape{2, 3, 7, 7}, rng), eps);
  });

  run("conv2d_w_grouped", [&](Rng& rng) {
    nn::Conv2dSpec spec{4, 6, 3, 3, 1, 1, 1, 1, 2};
    Tensor x = random_tensor(Shape{2, 4, 6, 6}, rng);
    Tensor r = random_tensor(Shape{2, 6, 6, 6}, rng);
    return ops::finite_diff_check(
        [&](Tape* t, const Tensor& w) {
          return projected(t, nn::conv2d(t, x, w, nullptr, spec), r);
        },
        random_tensor(Shape{6, 2, 3, 3}, rng), eps);
  });

  run("conv2d_bias", [&](Rng& rng) {
    nn::Conv2dSpec spec{2, 3, 1, 1, 1, 1, 0, 0, 1};
    Tensor x = random_tensor(Shape{2, 2, 5, 5}, rng);
    Tensor w = random_tensor(Shape{3, 2, 1, 1}, rng);
    Tensor r = random_tensor(Shape{2, 3, 5, 5}, rng);
    return ops::finite_diff_check(
        [&](Tape* t, const Tensor& b) {
          return projected(t, nn::conv2d(t, x, w, &b, spec), r);
        },
        random_tensor(Shape{3}, rng), eps);
  });

  run("maxpool2d", [&](Rng& rng) {
    Tensor r = random_tensor(Shape{2, 2, 4, 4}, rng);
    return ops::finite_diff_check(
        [&](Tape* t, const Tensor& x) {
          return projected(t, nn::maxpool2d(t, x, 3, 3, 2, 2, 1, 1), r);
        },
        random_tensor(Shape{2, 2, 7, 7}, rng), eps);
  });

  run("adaptive_avg_pool", [&](Rng& rng) {
    Tensor r = random_tensor(Shape{1, 3, 1, 1}, rng);
    return ops::finite_diff_check(
        [&](Tape* t, const Tensor& x) {
          return projected(t, nn::adaptive_avg_pool(t, x), r);
        },
        random_tensor(Shape{2, 3, 4, 4}, rng), eps);
  });

  run("global_avg_pool_hw", [&](Rng& rng) {
    Tensor r = random_tensor(Shape{2, 3}, rng);
    return ops::finite_diff_check(
        [&](Tape* t, const Tensor& x) {
          return projected(t, nn::global_avg_pool_hw(t, x), r);
        },
        random_tensor(Shape{2, 3, 4, 4}, rng), eps);
  });

  run("channel_scale_x", [&](Rng& rng) {
    Tensor s = random_tensor(Shape{2, 3}, rng);
    Tensor r = random_tensor(Shape{2, 3, 4, 4}, rng);
    return ops::finite_diff_check(
        [&](Tape* t, const Tensor& x) { return projected(t, nn::channel_scale(t, x, s), r); },
        random_tensor(Shape{2, 3, 4, 4}, rng), eps);
  });

  run("channel_scale_gate", [&](Rng& rng) {
    Tensor x = random_tensor(Shape{2, 3, 4, 4}, rng);
    Tensor r = random_tensor(Shape{2, 3, 4, 4}, rng);
    return ops::finite_diff_check(
        [&](Tape* t, const Tensor& s) { return projected(t, nn::channel_scale(t, x, s), r); },
        random_tensor(Shape{2, 3}, rng), eps);
  });

  run("batchnorm_x", [&](Rng& rng) {
    nn::BatchNorm2d bn = nn::BatchNorm2d::make(3);
    auto gd = bn.gamma.mutable_data();
    auto bd = bn.beta.mutable_data();
    for (size_t i = 0; i < gd.size(); ++i) {
      gd[i] = rng.uniform(0.5, 1.5);
      bd[i] = rng.uniform(-0.5, 0.5);
    }
    Tensor r = random_tensor(Shape{2, 3, 4, 4}, rng);
    return ops::finite_diff_check(
        [&](Tape* t, const Tensor& x) {
          return projected(t, bn.forward(t, x, true), r);
        },
        random_tensor(Shape{2, 3, 4, 4}, rng), eps);
  });

  run("batchnorm_gamma_beta", [&](Rng& rng) {
    nn::BatchNorm2d bn = nn::BatchNorm2d::make(3);
    Tensor x = random_tensor(Shape{2, 3, 4, 4}, rng);
    Tensor r = random_tensor(Shape{2, 3, 4, 4}, rng);
    // Both affine parameters at once, via a [2,C] packed tensor.
    return ops::finite_diff_check(
        [&](Tape* t, const Tensor& packed) {
          nn::BatchNorm2d local = nn::BatchNorm2d::make(3);
          local.gamma = ops::slice(t, packed, 0, 3);
          local.beta = ops::slice(t, packed, 3, 3);
          return projected(t, local.forward(t, x, true), r);
        },
        random_tensor(Shape{2, 3}, rng, 0.5, 1.5), eps);
  });

  run("linear_x", [&](Rng& rng) {
    Tensor w = random_tensor(Shape{4, 5}, rng);
    Tensor b = random_tensor(Shape{4}, rng);
    Tensor r = random_tensor(Shape{3, 4}, rng);
    return ops::finite_diff_check(
        [&](Tape* t, const Tensor& x) { return projected(t, nn::linear(t, x, w, &b), r); },
        random_tensor(Shape{3, 5}, rng), eps);
  });

  run("linear_w", [&](Rng& rng) {
    Tensor x = random_tensor(Shape{3, 5}, rng);
    Tensor b = random_tensor(Shape{4}, rng);
    Tensor r = random_tensor(Shape{3, 4}, rng);
    return ops::finite_diff_check(
        [&](Tape* t, const Tensor& w) { return projected(t, nn::linear(t, x, w, &b), r); },
        random_tensor(Shape{4, 5}, rng), eps);
  });

  run("softmax_cross_entropy", [&](Rng& rng) {
    std::array<int, 3> labels{0, 1, 1};
    return ops::finite_diff_check(
        [&](Tape* t, const Tensor& logits) {
          return nn::softmax_cross_entropy(t, logits, labels);
        },
        random_tensor(Shape{3, 2}, rng, -2.0, 2.0), eps);
  });

  run("se_block", [&](Rng& rng) {
    Rng init(rng.next_u64());
    nn::SEBlock se = nn::SEBlock::make({4, 2}, init);
    Tensor r = random_tensor(Shape{2, 4, 3, 3}, rng);
    return ops::finite_diff_check(
        [&](Tape* t, const Tensor& x) { return projected(t, se.forward(t, x), r); },
        random_tensor(Shape{2, 4, 3, 3}, rng), eps);
  });

  return results;
}

}  // namespace stc::gradcheck
