#include "stc/ops.hpp"

#include <cmath>

#include "stc/kernels.hpp"

namespace stc::ops {

namespace {

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ValidationError(strfmt("%s: shape mismatch %s vs %s", op,
                                 a.shape().str().c_str(), b.shape().str().c_str()));
}

bool wants_tape(Tape* tape, std::initializer_list<const Tensor*> inputs) {
  if (!tape) return false;
  for (const Tensor* t : inputs) tape->check_same_tape(*t);
  for (const Tensor* t : inputs)
    if (tape->tracked(*t)) return true;
  return false;
}

}  // namespace

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
  check_same_shape("elementwise_add", a, b);
  int64_t n = a.numel();
  std::vector<double> out(n);
  kernels::add(a.data().data(), b.data().data(), out.data(), n);
  Tensor result(a.shape(), std::move(out));
  if (!wants_tape(tape, {&a, &b})) return result;
  int na = tape->input_node(a);
  int nb = tape->input_node(b);
  tape->record(result, {na, nb}, [na, nb, n](Tape& t, std::span<const double> g) {
    if (na >= 0) kernels::axpy(1.0, g.data(), t.grad_buffer(na).data(), n);
    if (nb >= 0) kernels::axpy(1.0, g.data(), t.grad_buffer(nb).data(), n);
  });
  return result;
}

Tensor scale(Tape* tape, const Tensor& a, double k) {
  if (!std::isfinite(k))
    throw ValidationError(strfmt("scalar_scale: factor %g is not finite", k));
  int64_t n = a.numel();
  std::vector<double> out(n);
  kernels::scale(a.data().data(), k, out.data(), n);
  Tensor result(a.shape(), std::move(out));
  if (!wants_tape(tape, {&a})) return result;
  int na = tape->input_node(a);
  tape->record(result, {na}, [na, k, n](Tape& t, std::span<const double> g) {
    if (na >= 0) kernels::axpy(k, g.data(), t.grad_buffer(na).data(), n);
  });
  return result;
}

Tensor relu(Tape* tape, const Tensor& a) {
  int64_t n = a.numel();
  std::vector<double> out(n);
  kernels::relu(a.data().data(), out.data(), n);
  Tensor result(a.shape(), std::move(out));
  if (!wants_tape(tape, {&a})) return result;
  int na = tape->input_node(a);
  auto saved = a.shared_data();
  tape->record(result, {na}, [na, n, saved](Tape& t, std::span<const double> g) {
    if (na >= 0) kernels::relu_bwd(saved->data(), g.data(), t.grad_buffer(na).data(), n);
  });
  return result;
}

Tensor sigmoid(Tape* tape, const Tensor& a) {
  int64_t n = a.numel();
  std::vector<double> out(n);
  kernels::sigmoid(a.data().data(), out.data(), n);
  Tensor result(a.shape(), std::move(out));
  if (!wants_tape(tape, {&a})) return result;
  int na = tape->input_node(a);
  auto saved = result.shared_data();
  tape->record(result, {na}, [na, n, saved](Tape& t, std::span<const double> g) {
    if (na >= 0) kernels::sigmoid_bwd(saved->data(), g.data(), t.grad_buffer(na).data(), n);
  });
  return result;
}

Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
  check_same_shape("elementwise_mul", a, b);
  int64_t n = a.numel();
  std::vector<double> out(n, 0.0);
  kernels::mul_accum(a.data().data(), b.data().data(), out.data(), n);
  Tensor result(a.shape(), std::move(out));
  if (!wants_tape(tape, {&a, &b})) return result;
  int na = tape->input_node(a);
  int nb = tape->input_node(b);
  auto sa = a.shared_data();
  auto sb = b.shared_data();
  tape->record(result, {na, nb}, [na, nb, n, sa, sb](Tape& t, std::span<const double> g) {
    if (na >= 0) kernels::mul_accum(g.data(), sb->data(), t.grad_buffer(na).data(), n);
    if (nb >= 0) kernels::mul_accum(g.data(), sa->data(), t.grad_buffer(nb).data(), n);
  });
  return result;
}

Tensor sum(Tape* tape, const Tensor& a) {
  int64_t n = a.numel();
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  Tensor result = Tensor::scalar(acc);
  if (!wants_tape(tape, {&a})) return result;
  int na = tape->input_node(a);
  tape->record(result, {na}, [na, n](Tape& t, std::span<const double> g) {
    if (na >= 0) {
      auto gx = t.grad_buffer(na);
      for (int64_t i = 0; i < n; ++i) gx[i] += g[0];
    }
  });
  return result;
}

Tensor pick(Tape* tape, const Tensor& a, int64_t flat_index) {
  if (flat_index < 0 || flat_index >= a.numel())
    throw ValidationError(strfmt("pick: index %lld out of range for %lld elements",
                                 (long long)flat_index, (long long)a.numel()));
  Tensor result = Tensor::scalar(a[flat_index]);
  if (!wants_tape(tape, {&a})) return result;
  int na = tape->input_node(a);
  tape->record(result, {na}, [na, flat_index](Tape& t, std::span<const double> g) {
    if (na >= 0) t.grad_buffer(na)[flat_index] += g[0];
  });
  return result;
}

Tensor reshape(Tape* tape, const Tensor& a, const Shape& shape) {
  if (shape.numel() != a.numel())
    throw ValidationError(strfmt("reshape: %s has %lld elements, target %s has %lld",
                                 a.shape().str().c_str(), (long long)a.numel(),
                                 shape.str().c_str(), (long long)shape.numel()));
  Tensor result(shape, std::vector<double>(a.data().begin(), a.data().end()));
  if (!wants_tape(tape, {&a})) return result;
  int na = tape->input_node(a);
  int64_t n = a.numel();
  tape->record(result, {na}, [na, n](Tape& t, std::span<const double> g) {
    if (na >= 0) kernels::axpy(1.0, g.data(), t.grad_buffer(na).data(), n);
  });
  return result;
}

Tensor slice(Tape* tape, const Tensor& a, int64_t offset, int64_t len) {
  if (offset < 0 || len < 1 || offset + len > a.numel())
    throw ValidationError(strfmt("slice: range [%lld,%lld) outside %lld elements",
                                 (long long)offset, (long long)(offset + len),
                                 (long long)a.numel()));
  std::vector<double> out(a.data().begin() + offset, a.data().begin() + offset + len);
  Tensor result(Shape{len}, std::move(out));
  if (!wants_tape(tape, {&a})) return result;
  int na = tape->input_node(a);
  tape->record(result, {na}, [na, offset, len](Tape& t, std::span<const double> g) {
    if (na >= 0) kernels::axpy(1.0, g.data(), t.grad_buffer(na).data() + offset, len);
  });
  return result;
}

double finite_diff_check(const std::function<Tensor(Tape*, const Tensor&)>& f,
                         const Tensor& x, double eps) {
  if (!(eps >= 1e-6 && eps <= 1e-3))
    throw ValidationError(strfmt("finite_diff_check: eps %g outside [1e-6, 1e-3]", eps));
  // Snap the step to the nearest power of two: x +- eps and their difference
  // are then exact for moderate |x|, so linear functions check to exactly 0.
  eps = std::exp2(std::nearbyint(std::log2(eps)));

  auto eval = [&f](const Tensor& p) {
    Tensor v = f(nullptr, p);
    if (v.numel() != 1)
      throw ValidationError("finite_diff_check: f must be scalar-valued");
    return v.value();
  };

  // Determinism gate: two evaluations must agree bitwise.
  Tensor probe(x.shape(), std::vector<double>(x.data().begin(), x.data().end()));
  double v1 = eval(probe);
  double v2 = eval(probe);
  if (!(v1 == v2))
    throw ValidationError(strfmt("finite_diff_check: f is non-deterministic (%.17g vs %.17g)", v1, v2));

  // Analytic gradient.
  Tensor leaf(x.shape(), std::vector<double>(x.data().begin(), x.data().end()));
  leaf.set_requires_grad(true);
  Tape tape;
  Tensor loss = f(&tape, leaf);
  if (loss.numel() != 1)
    throw ValidationError("finite_diff_check: f must be scalar-valued");
  tape.backward(loss);
  std::vector<double> analytic(leaf.grad().begin(), leaf.grad().end());

  double worst = 0.0;
  std::vector<double> bumped(x.data().begin(), x.data().end());
  for (int64_t i = 0; i < x.numel(); ++i) {
    double orig = bumped[i];
    bumped[i] = orig + eps;
    double fp = eval(Tensor(x.shape(), bumped));
    bumped[i] = orig - eps;
    double fm = eval(Tensor(x.shape(), bumped));
    bumped[i] = orig;
    double numeric = (fp - fm) / (2.0 * eps);
    double denom = std::max({1.0, std::fabs(analytic[i]), std::fabs(numeric)});
    worst = std::max(worst, std::fabs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace stc::ops
