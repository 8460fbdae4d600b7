#include "stc/nn.hpp"

#include <cmath>
#include <cstring>
#include <limits>

#include "stc/kernels.hpp"
#include "stc/threadpool.hpp"

namespace stc::nn {

namespace {

void require_rank4(const char* op, const Tensor& x) {
  if (x.shape().rank() != 4)
    throw ValidationError(strfmt("%s: expected rank-4 [N,C,H,W] input, got %s", op,
                                 x.shape().str().c_str()));
}

bool wants_tape(Tape* tape, std::initializer_list<const Tensor*> inputs) {
  if (!tape) return false;
  for (const Tensor* t : inputs)
    if (t) tape->check_same_tape(*t);
  for (const Tensor* t : inputs)
    if (t && tape->tracked(*t)) return true;
  return false;
}

// col layout: rows indexed by (cin, ky, kx), columns by output pixel. Rows of
// one channel group are contiguous, so grouped convolutions slice rows.
void im2col(const double* x, int c, int h, int w, const Conv2dSpec& s, int oh, int ow,
            double* col) {
  for (int ci = 0; ci < c; ++ci) {
    const double* plane = x + static_cast<int64_t>(ci) * h * w;
    for (int ky = 0; ky < s.kh; ++ky) {
      for (int kx = 0; kx < s.kw; ++kx) {
        double* row = col + (static_cast<int64_t>(ci) * s.kh * s.kw + ky * s.kw + kx) *
                                (static_cast<int64_t>(oh) * ow);
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * s.sh - s.ph + ky;
          if (iy < 0 || iy >= h) {
            std::memset(row + static_cast<int64_t>(oy) * ow, 0, sizeof(double) * ow);
            continue;
          }
          for (int ox = 0; ox < ow; ++ox) {
            int ix = ox * s.sw - s.pw + kx;
            row[static_cast<int64_t>(oy) * ow + ox] =
                (ix >= 0 && ix < w) ? plane[static_cast<int64_t>(iy) * w + ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_accum(const double* col, int c, int h, int w, const Conv2dSpec& s, int oh,
                  int ow, double* x) {
  for (int ci = 0; ci < c; ++ci) {
    double* plane = x + static_cast<int64_t>(ci) * h * w;
    for (int ky = 0; ky < s.kh; ++ky) {
      for (int kx = 0; kx < s.kw; ++kx) {
        const double* row = col + (static_cast<int64_t>(ci) * s.kh * s.kw + ky * s.kw + kx) *
                                      (static_cast<int64_t>(oh) * ow);
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * s.sh - s.ph + ky;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < ow; ++ox) {
            int ix = ox * s.sw - s.pw + kx;
            if (ix >= 0 && ix < w)
              plane[static_cast<int64_t>(iy) * w + ix] += row[static_cast<int64_t>(oy) * ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace

void Conv2dSpec::validate() const {
  if (in_channels < 1 || out_channels < 1)
    throw ValidationError(strfmt("conv2d: channels must be positive, got %s", str().c_str()));
  if (kh < 1 || kw < 1 || sh < 1 || sw < 1 || ph < 0 || pw < 0 || groups < 1)
    throw ValidationError(strfmt("conv2d: bad kernel/stride/pad/groups in %s", str().c_str()));
  if (in_channels % groups != 0 || out_channels % groups != 0)
    throw ValidationError(
        strfmt("conv2d: groups=%d must divide in=%d and out=%d channels", groups,
               in_channels, out_channels));
}

std::string Conv2dSpec::str() const {
  return strfmt("{in=%d out=%d k=%dx%d s=%dx%d p=%dx%d g=%d}", in_channels, out_channels,
                kh, kw, sh, sw, ph, pw, groups);
}

Tensor conv2d(Tape* tape, const Tensor& x, const Tensor& weight, const Tensor* bias,
              const Conv2dSpec& spec) {
  spec.validate();
  require_rank4("conv2d", x);
  int64_t n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  if (c != spec.in_channels)
    throw ValidationError(strfmt("conv2d: input has %lld channels, spec %s",
                                 (long long)c, spec.str().c_str()));
  int cg = spec.in_channels / spec.groups;
  Shape wshape{spec.out_channels, cg, spec.kh, spec.kw};
  if (weight.shape() != wshape)
    throw ValidationError(strfmt("conv2d: weight shape %s, expected %s for spec %s",
                                 weight.shape().str().c_str(), wshape.str().c_str(),
                                 spec.str().c_str()));
  if (bias && bias->shape() != Shape{spec.out_channels})
    throw ValidationError(strfmt("conv2d: bias shape %s, expected [%d]",
                                 bias->shape().str().c_str(), spec.out_channels));
  if (h + 2 * spec.ph < spec.kh || w + 2 * spec.pw < spec.kw)
    throw ValidationError(strfmt("conv2d: input %lldx%lld smaller than kernel for %s",
                                 (long long)h, (long long)w, spec.str().c_str()));
  int64_t oh = Conv2dSpec::out_dim(h, spec.kh, spec.sh, spec.ph);
  int64_t ow = Conv2dSpec::out_dim(w, spec.kw, spec.sw, spec.pw);
  if (oh < 1 || ow < 1)
    throw ValidationError(strfmt("conv2d: degenerate output %lldx%lld for %s",
                                 (long long)oh, (long long)ow, spec.str().c_str()));

  int og = spec.out_channels / spec.groups;
  int64_t p = oh * ow;
  int64_t kdim = static_cast<int64_t>(cg) * spec.kh * spec.kw;
  bool direct = spec.kh == 1 && spec.kw == 1 && spec.sh == 1 && spec.sw == 1 &&
                spec.ph == 0 && spec.pw == 0;

  std::vector<double> out(n * spec.out_channels * p);
  const double* xd = x.data().data();
  const double* wd = weight.data().data();
  const double* bd = bias ? bias->data().data() : nullptr;

  // Tiny convolutions are not worth a pool wakeup.
  bool parallel = n * spec.out_channels * p * kdim >= 1 << 17;
  auto frame_loop = [&](int64_t lo, int64_t hi,
                        const std::function<void(int64_t, int64_t)>& body) {
    if (parallel)
      ThreadPool::global().parallel_for(lo, hi, body);
    else
      body(lo, hi);
  };

  frame_loop(0, n, [&](int64_t n0, int64_t n1) {
    std::vector<double> colbuf;
    if (!direct) colbuf.resize(static_cast<int64_t>(c) * spec.kh * spec.kw * p);
    for (int64_t i = n0; i < n1; ++i) {
      const double* xi = xd + i * c * h * w;
      const double* col = xi;
      if (!direct) {
        im2col(xi, c, h, w, spec, oh, ow, colbuf.data());
        col = colbuf.data();
      }
      double* oi = out.data() + i * spec.out_channels * p;
      for (int g = 0; g < spec.groups; ++g)
        kernels::gemm(og, p, kdim, wd + static_cast<int64_t>(g) * og * kdim,
                      col + static_cast<int64_t>(g) * kdim * p,
                      oi + static_cast<int64_t>(g) * og * p, false);
      if (bd)
        for (int co = 0; co < spec.out_channels; ++co) {
          double bv = bd[co];
          double* orow = oi + static_cast<int64_t>(co) * p;
          for (int64_t j = 0; j < p; ++j) orow[j] += bv;
        }
    }
  });

  Tensor result(Shape{n, spec.out_channels, oh, ow}, std::move(out));
  if (!wants_tape(tape, {&x, &weight, bias})) return result;

  int nx = tape->input_node(x);
  int nw = tape->input_node(weight);
  int nb = bias ? tape->input_node(*bias) : -1;
  auto sx = x.shared_data();
  auto sw = weight.shared_data();
  Conv2dSpec sp = spec;
  tape->record(result, {nx, nw, nb},
               [=](Tape& t, std::span<const double> g) {
    int64_t pp = oh * ow;
    double* dx = nx >= 0 ? t.grad_buffer(nx).data() : nullptr;
    double* dw = nw >= 0 ? t.grad_buffer(nw).data() : nullptr;
    if (nb >= 0) {
      auto db = t.grad_buffer(nb);
      for (int64_t i = 0; i < n; ++i)
        for (int co = 0; co < sp.out_channels; ++co) {
          const double* grow = g.data() + (i * sp.out_channels + co) * pp;
          double acc = 0.0;
          for (int64_t j = 0; j < pp; ++j) acc += grow[j];
          db[co] += acc;
        }
    }
    if (!dx && !dw) return;

    int64_t wnumel = static_cast<int64_t>(sp.out_channels) * kdim;
    // Per-frame weight-gradient scratch lets frames run in parallel; the
    // frame-ordered reduction below keeps the sum deterministic.
    std::vector<double> dw_scratch;
    if (dw) dw_scratch.assign(n * wnumel, 0.0);

    bool par = n * sp.out_channels * pp * kdim >= 1 << 17;
    auto frames = [&](const std::function<void(int64_t, int64_t)>& body) {
      if (par)
        ThreadPool::global().parallel_for(0, n, body);
      else
        body(0, n);
    };
    frames([&](int64_t n0, int64_t n1) {
      std::vector<double> colbuf, dcolbuf;
      if (!direct) {
        colbuf.resize(static_cast<int64_t>(c) * sp.kh * sp.kw * pp);
        if (dx) dcolbuf.resize(colbuf.size());
      }
      std::vector<double> wt(dx ? static_cast<size_t>(kdim) * og : 0);
      for (int64_t i = n0; i < n1; ++i) {
        const double* xi = sx->data() + i * c * h * w;
        const double* gi = g.data() + i * sp.out_channels * pp;
        const double* col = xi;
        if (!direct) {
          im2col(xi, c, h, w, sp, oh, ow, colbuf.data());
          col = colbuf.data();
        }
        if (dw) {
          double* dwf = dw_scratch.data() + i * wnumel;
          for (int gr = 0; gr < sp.groups; ++gr)
            kernels::gemm_nt(og, kdim, pp, gi + static_cast<int64_t>(gr) * og * pp,
                             col + static_cast<int64_t>(gr) * kdim * pp,
                             dwf + static_cast<int64_t>(gr) * og * kdim, true);
        }
        if (dx) {
          double* dcol = direct ? dx + i * c * h * w : dcolbuf.data();
          for (int gr = 0; gr < sp.groups; ++gr) {
            // Transposed weight block for the data gradient.
            const double* wg = sw->data() + static_cast<int64_t>(gr) * og * kdim;
            for (int oc = 0; oc < og; ++oc)
              for (int64_t kk = 0; kk < kdim; ++kk) wt[kk * og + oc] = wg[oc * kdim + kk];
            kernels::gemm(kdim, pp, og, wt.data(), gi + static_cast<int64_t>(gr) * og * pp,
                          dcol + static_cast<int64_t>(gr) * kdim * pp, direct);
          }
          if (!direct) col2im_accum(dcol, c, h, w, sp, oh, ow, dx + i * c * h * w);
        }
      }
    });
    if (dw)
      for (int64_t i = 0; i < n; ++i)
        kernels::axpy(1.0, dw_scratch.data() + i * wnumel, dw, wnumel);
  });
  return result;
}

Tensor maxpool2d(Tape* tape, const Tensor& x, int kh, int kw, int sh, int sw, int ph,
                 int pw) {
  require_rank4("maxpool2d", x);
  int64_t n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  if (kh < 1 || kw < 1 || sh < 1 || sw < 1 || ph < 0 || pw < 0)
    throw ValidationError("maxpool2d: bad kernel/stride/pad");
  if (ph > kh / 2 || pw > kw / 2)
    throw ValidationError("maxpool2d: padding may not exceed half the window");
  if (h + 2 * ph < kh || w + 2 * pw < kw)
    throw ValidationError(strfmt("maxpool2d: input %lldx%lld smaller than %dx%d window",
                                 (long long)h, (long long)w, kh, kw));
  int64_t oh = Conv2dSpec::out_dim(h, kh, sh, ph);
  int64_t ow = Conv2dSpec::out_dim(w, kw, sw, pw);
  if (oh < 1 || ow < 1)
    throw ValidationError("maxpool2d: degenerate output size");

  std::vector<double> out(n * c * oh * ow);
  auto argmax = std::make_shared<std::vector<int64_t>>(out.size());
  const double* xd = x.data().data();

  auto plane_loop = [&](const std::function<void(int64_t, int64_t)>& body) {
    if (static_cast<int64_t>(out.size()) * kh * kw >= 1 << 17)
      ThreadPool::global().parallel_for(0, n * c, body);
    else
      body(0, n * c);
  };
  plane_loop([&](int64_t p0, int64_t p1) {
    for (int64_t plane = p0; plane < p1; ++plane) {
      const double* in = xd + plane * h * w;
      double* o = out.data() + plane * oh * ow;
      int64_t* am = argmax->data() + plane * oh * ow;
      for (int64_t oy = 0; oy < oh; ++oy)
        for (int64_t ox = 0; ox < ow; ++ox) {
          double best = -std::numeric_limits<double>::infinity();
          int64_t besti = -1;
          for (int ky = 0; ky < kh; ++ky) {
            int64_t iy = oy * sh - ph + ky;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < kw; ++kx) {
              int64_t ix = ox * sw - pw + kx;
              if (ix < 0 || ix >= w) continue;
              double v = in[iy * w + ix];
              if (v > best) {  // strict: first occurrence wins ties
                best = v;
                besti = plane * h * w + iy * w + ix;
              }
            }
          }
          o[oy * ow + ox] = best;
          am[oy * ow + ox] = besti;
        }
    }
  });

  Tensor result(Shape{n, c, oh, ow}, std::move(out));
  if (!wants_tape(tape, {&x})) return result;
  int nx = tape->input_node(x);
  int64_t total = result.numel();
  tape->record(result, {nx}, [nx, argmax, total](Tape& t, std::span<const double> g) {
    if (nx < 0) return;
    auto dx = t.grad_buffer(nx);
    for (int64_t i = 0; i < total; ++i) dx[(*argmax)[i]] += g[i];
  });
  return result;
}

Tensor adaptive_avg_pool(Tape* tape, const Tensor& x) {
  require_rank4("adaptive_avg_pool", x);
  int64_t n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  int64_t m = n * h * w;
  std::vector<double> out(c, 0.0);
  const double* xd = x.data().data();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ci = 0; ci < c; ++ci) {
      const double* plane = xd + (i * c + ci) * h * w;
      double acc = 0.0;
      for (int64_t j = 0; j < h * w; ++j) acc += plane[j];
      out[ci] += acc;
    }
  for (int64_t ci = 0; ci < c; ++ci) out[ci] /= static_cast<double>(m);

  Tensor result(Shape{1, c, 1, 1}, std::move(out));
  if (!wants_tape(tape, {&x})) return result;
  int nx = tape->input_node(x);
  tape->record(result, {nx}, [nx, n, c, h, w, m](Tape& t, std::span<const double> g) {
    if (nx < 0) return;
    auto dx = t.grad_buffer(nx);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t ci = 0; ci < c; ++ci) {
        double gv = g[ci] / static_cast<double>(m);
        double* plane = dx.data() + (i * c + ci) * h * w;
        for (int64_t j = 0; j < h * w; ++j) plane[j] += gv;
      }
  });
  return result;
}

Tensor global_avg_pool_hw(Tape* tape, const Tensor& x) {
  require_rank4("global_avg_pool_hw", x);
  int64_t n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  int64_t hw = h * w;
  std::vector<double> out(n * c);
  const double* xd = x.data().data();
  for (int64_t i = 0; i < n * c; ++i) {
    const double* plane = xd + i * hw;
    double acc = 0.0;
    for (int64_t j = 0; j < hw; ++j) acc += plane[j];
    out[i] = acc / static_cast<double>(hw);
  }
  Tensor result(Shape{n, c}, std::move(out));
  if (!wants_tape(tape, {&x})) return result;
  int nx = tape->input_node(x);
  tape->record(result, {nx}, [nx, n, c, hw](Tape& t, std::span<const double> g) {
    if (nx < 0) return;
    auto dx = t.grad_buffer(nx);
    for (int64_t i = 0; i < n * c; ++i) {
      double gv = g[i] / static_cast<double>(hw);
      double* plane = dx.data() + i * hw;
      for (int64_t j = 0; j < hw; ++j) plane[j] += gv;
    }
  });
  return result;
}

Tensor channel_scale(Tape* tape, const Tensor& x, const Tensor& s) {
  require_rank4("channel_scale", x);
  int64_t n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  if (s.shape() != Shape{n, c})
    throw ValidationError(strfmt("channel_scale: gate shape %s, expected [%lld,%lld]",
                                 s.shape().str().c_str(), (long long)n, (long long)c));
  int64_t hw = h * w;
  std::vector<double> out(x.numel());
  const double* xd = x.data().data();
  const double* sd = s.data().data();
  for (int64_t i = 0; i < n * c; ++i)
    kernels::scale(xd + i * hw, sd[i], out.data() + i * hw, hw);

  Tensor result(x.shape(), std::move(out));
  if (!wants_tape(tape, {&x, &s})) return result;
  int nx = tape->input_node(x);
  int ns = tape->input_node(s);
  auto sx = x.shared_data();
  auto ss = s.shared_data();
  tape->record(result, {nx, ns}, [=](Tape& t, std::span<const double> g) {
    if (nx >= 0) {
      auto dx = t.grad_buffer(nx);
      for (int64_t i = 0; i < n * c; ++i)
        kernels::axpy((*ss)[i], g.data() + i * hw, dx.data() + i * hw, hw);
    }
    if (ns >= 0) {
      auto ds = t.grad_buffer(ns);
      for (int64_t i = 0; i < n * c; ++i) {
        const double* grow = g.data() + i * hw;
        const double* xrow = sx->data() + i * hw;
        double acc = 0.0;
        for (int64_t j = 0; j < hw; ++j) acc += grow[j] * xrow[j];
        ds[i] += acc;
      }
    }
  });
  return result;
}

Tensor linear(Tape* tape, const Tensor& x, const Tensor& weight, const Tensor* bias) {
  if (x.shape().rank() != 2 || weight.shape().rank() != 2)
    throw ValidationError(strfmt("linear: expected rank-2 operands, got x=%s w=%s",
                                 x.shape().str().c_str(), weight.shape().str().c_str()));
  int64_t n = x.shape()[0], din = x.shape()[1];
  int64_t dout = weight.shape()[0];
  if (weight.shape()[1] != din)
    throw ValidationError(strfmt("linear: x=%s incompatible with weight=%s",
                                 x.shape().str().c_str(), weight.shape().str().c_str()));
  if (bias && bias->shape() != Shape{dout})
    throw ValidationError(strfmt("linear: bias shape %s, expected [%lld]",
                                 bias->shape().str().c_str(), (long long)dout));

  std::vector<double> out(n * dout);
  kernels::gemm_nt(n, dout, din, x.data().data(), weight.data().data(), out.data(), false);
  if (bias) {
    const double* bd = bias->data().data();
    for (int64_t i = 0; i < n; ++i) kernels::add(out.data() + i * dout, bd, out.data() + i * dout, dout);
  }
  Tensor result(Shape{n, dout}, std::move(out));
  if (!wants_tape(tape, {&x, &weight, bias})) return result;

  int nx = tape->input_node(x);
  int nw = tape->input_node(weight);
  int nb = bias ? tape->input_node(*bias) : -1;
  auto sx = x.shared_data();
  auto sw = weight.shared_data();
  tape->record(result, {nx, nw, nb}, [=](Tape& t, std::span<const double> g) {
    if (nx >= 0)
      kernels::gemm(n, din, dout, g.data(), sw->data(), t.grad_buffer(nx).data(), true);
    if (nw >= 0) {
      // dW = g^T * x via an explicit transpose of g.
      std::vector<double> gt(dout * n);
      for (int64_t i = 0; i < n; ++i)
        for (int64_t o = 0; o < dout; ++o) gt[o * n + i] = g[i * dout + o];
      kernels::gemm(dout, din, n, gt.data(), sx->data(), t.grad_buffer(nw).data(), true);
    }
    if (nb >= 0) {
      auto db = t.grad_buffer(nb);
      for (int64_t i = 0; i < n; ++i) kernels::axpy(1.0, g.data() + i * dout, db.data(), dout);
    }
  });
  return result;
}

Tensor softmax_cross_entropy(Tape* tape, const Tensor& logits,
                             std::span<const int> labels) {
  if (logits.shape().rank() != 2)
    throw ValidationError(strfmt("softmax_cross_entropy: expected [N,K] logits, got %s",
                                 logits.shape().str().c_str()));
  int64_t n = logits.shape()[0], k = logits.shape()[1];
  if (static_cast<int64_t>(labels.size()) != n)
    throw ValidationError(strfmt("softmax_cross_entropy: %zu labels for %lld rows",
                                 labels.size(), (long long)n));
  for (int64_t i = 0; i < n; ++i)
    if (labels[i] < 0 || labels[i] >= k)
      throw ValidationError(strfmt("softmax_cross_entropy: label %d out of [0,%lld)",
                                   labels[i], (long long)k));

  auto probs = std::make_shared<std::vector<double>>(n * k);
  const double* ld = logits.data().data();
  double loss = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double* row = ld + i * k;
    double m = row[0];
    for (int64_t j = 1; j < k; ++j) m = std::max(m, row[j]);
    double z = 0.0;
    for (int64_t j = 0; j < k; ++j) z += std::exp(row[j] - m);
    double logz = std::log(z);
    for (int64_t j = 0; j < k; ++j) (*probs)[i * k + j] = std::exp(row[j] - m) / z;
    loss += logz - (row[labels[i]] - m);
  }
  loss /= static_cast<double>(n);

  Tensor result = Tensor::scalar(loss);
  if (!wants_tape(tape, {&logits})) return result;
  int nx = tape->input_node(logits);
  std::vector<int> lab(labels.begin(), labels.end());
  tape->record(result, {nx}, [nx, n, k, probs, lab](Tape& t, std::span<const double> g) {
    if (nx < 0) return;
    auto dx = t.grad_buffer(nx);
    double gv = g[0] / static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < k; ++j)
        dx[i * k + j] += gv * ((*probs)[i * k + j] - (j == lab[i] ? 1.0 : 0.0));
  });
  return result;
}

// ---- BatchNorm --------------------------------------------------------------

BatchNorm2d BatchNorm2d::make(int channels) {
  BatchNorm2d bn;
  // Gradient buffers are allocated here, before any copies are taken, so
  // every later copy of these tensors shares them.
  bn.gamma = Tensor(Shape{channels}, 1.0).set_requires_grad(true);
  bn.beta = Tensor(Shape{channels}, 0.0).set_requires_grad(true);
  bn.running_mean.assign(channels, 0.0);
  bn.running_var.assign(channels, 1.0);
  return bn;
}

Tensor BatchNorm2d::forward(Tape* tape, const Tensor& x, bool training) {
  require_rank4("batchnorm", x);
  int64_t n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  if (c != channels())
    throw ValidationError(strfmt("batchnorm: input has %lld channels, layer has %d",
                                 (long long)c, channels()));
  int64_t m = n * h * w;
  int64_t hw = h * w;
  const double* xd = x.data().data();
  const double* gam = gamma.data().data();
  const double* bet = beta.data().data();

  std::vector<double> mean(c), invstd(c);
  if (training) {
    if (m < 2)
      throw ValidationError("batchnorm: training mode needs >= 2 samples per channel");
    for (int64_t ci = 0; ci < c; ++ci) {
      double acc = 0.0;
      for (int64_t i = 0; i < n; ++i) {
        const double* plane = xd + (i * c + ci) * hw;
        for (int64_t j = 0; j < hw; ++j) acc += plane[j];
      }
      mean[ci] = acc / static_cast<double>(m);
      double var = 0.0;
      for (int64_t i = 0; i < n; ++i) {
        const double* plane = xd + (i * c + ci) * hw;
        for (int64_t j = 0; j < hw; ++j) {
          double d = plane[j] - mean[ci];
          var += d * d;
        }
      }
      var /= static_cast<double>(m);
      invstd[ci] = 1.0 / std::sqrt(var + eps);
      running_mean[ci] = (1.0 - momentum) * running_mean[ci] + momentum * mean[ci];
      running_var[ci] = (1.0 - momentum) * running_var[ci] + momentum * var;
    }
  } else {
    for (int64_t ci = 0; ci < c; ++ci) {
      mean[ci] = running_mean[ci];
      invstd[ci] = 1.0 / std::sqrt(running_var[ci] + eps);
    }
  }

  std::vector<double> out(x.numel());
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ci = 0; ci < c; ++ci) {
      const double* src = xd + (i * c + ci) * hw;
      double* dst = out.data() + (i * c + ci) * hw;
      double a = gam[ci] * invstd[ci];
      double b = bet[ci] - a * mean[ci];
      for (int64_t j = 0; j < hw; ++j) dst[j] = a * src[j] + b;
    }

  Tensor result(x.shape(), std::move(out));
  if (!wants_tape(tape, {&x, &gamma, &beta})) return result;

  int nx = tape->input_node(x);
  int ng = tape->input_node(gamma);
  int nb = tape->input_node(beta);
  auto sx = x.shared_data();
  auto sgamma = gamma.shared_data();
  auto smean = std::make_shared<std::vector<double>>(std::move(mean));
  auto sinv = std::make_shared<std::vector<double>>(std::move(invstd));
  tape->record(result, {nx, ng, nb},
               [=](Tape& t, std::span<const double> g) {
    std::vector<double> s1(c, 0.0), s2(c, 0.0);  // sum g, sum g*xhat
    for (int64_t i = 0; i < n; ++i)
      for (int64_t ci = 0; ci < c; ++ci) {
        const double* grow = g.data() + (i * c + ci) * hw;
        const double* xrow = sx->data() + (i * c + ci) * hw;
        double a1 = 0.0, a2 = 0.0;
        for (int64_t j = 0; j < hw; ++j) {
          a1 += grow[j];
          a2 += grow[j] * (xrow[j] - (*smean)[ci]) * (*sinv)[ci];
        }
        s1[ci] += a1;
        s2[ci] += a2;
      }
    if (nb >= 0) {
      auto db = t.grad_buffer(nb);
      for (int64_t ci = 0; ci < c; ++ci) db[ci] += s1[ci];
    }
    if (ng >= 0) {
      auto dg = t.grad_buffer(ng);
      for (int64_t ci = 0; ci < c; ++ci) dg[ci] += s2[ci];
    }
    if (nx >= 0) {
      auto dx = t.grad_buffer(nx);
      for (int64_t i = 0; i < n; ++i)
        for (int64_t ci = 0; ci < c; ++ci) {
          const double* grow = g.data() + (i * c + ci) * hw;
          const double* xrow = sx->data() + (i * c + ci) * hw;
          double* drow = dx.data() + (i * c + ci) * hw;
          double gi = (*sgamma)[ci] * (*sinv)[ci];
          if (training) {
            double c1 = s1[ci] / static_cast<double>(m);
            double c2 = s2[ci] / static_cast<double>(m);
            for (int64_t j = 0; j < hw; ++j) {
              double xhat = (xrow[j] - (*smean)[ci]) * (*sinv)[ci];
              drow[j] += gi * (grow[j] - c1 - xhat * c2);
            }
          } else {
            for (int64_t j = 0; j < hw; ++j) drow[j] += gi * grow[j];
          }
        }
    }
  });
  return result;
}

// ---- Layer factories ---------------------------------------------------------

Conv2d Conv2d::make(const Conv2dSpec& spec, bool with_bias, Rng& rng) {
  spec.validate();
  Conv2d layer;
  layer.spec = spec;
  int64_t fan_in = static_cast<int64_t>(spec.in_channels / spec.groups) * spec.kh * spec.kw;
  double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  std::vector<double> w(static_cast<int64_t>(spec.out_channels) * fan_in);
  for (auto& v : w) v = rng.normal(0.0, stddev);
  layer.weight = Tensor(Shape{spec.out_channels, spec.in_channels / spec.groups, spec.kh, spec.kw},
                        std::move(w))
                     .set_requires_grad(true);
  if (with_bias) layer.bias = Tensor(Shape{spec.out_channels}, 0.0).set_requires_grad(true);
  return layer;
}

Linear Linear::make(int in_features, int out_features, Rng& rng) {
  Linear layer;
  double stddev = std::sqrt(1.0 / static_cast<double>(in_features));
  std::vector<double> w(static_cast<int64_t>(out_features) * in_features);
  for (auto& v : w) v = rng.normal(0.0, stddev);
  layer.weight = Tensor(Shape{out_features, in_features}, std::move(w)).set_requires_grad(true);
  layer.bias = Tensor(Shape{out_features}, 0.0).set_requires_grad(true);
  return layer;
}

void SEBlockSpec::validate() const {
  if (channels < 1 || reduction_ratio < 1)
    throw ValidationError(strfmt("se_block: channels=%d ratio=%d must be positive",
                                 channels, reduction_ratio));
  if (channels % reduction_ratio != 0)
    throw ValidationError(strfmt("se_block: reduction ratio %d does not divide channels %d",
                                 reduction_ratio, channels));
}

SEBlock SEBlock::make(const SEBlockSpec& spec, Rng& rng) {
  spec.validate();
  SEBlock block;
  block.spec = spec;
  int mid = spec.channels / spec.reduction_ratio;
  block.fc1 = Linear::make(spec.channels, mid, rng);
  block.fc2 = Linear::make(mid, spec.channels, rng);
  return block;
}

Tensor SEBlock::forward(Tape* tape, const Tensor& x) const {
  if (x.shape()[1] != spec.channels)
    throw ValidationError(strfmt("se_block: input has %lld channels, spec has %d",
                                 (long long)x.shape()[1], spec.channels));
  Tensor pooled = global_avg_pool_hw(tape, x);
  Tensor z = ops::relu(tape, fc1.forward(tape, pooled));
  Tensor gate = ops::sigmoid(tape, fc2.forward(tape, z));
  return channel_scale(tape, x, gate);
}

}  // namespace stc::nn
