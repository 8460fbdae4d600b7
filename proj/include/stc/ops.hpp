#pragma once

#include <functional>

#include "stc/tape.hpp"

namespace stc::ops {

// All ops take the recording tape first; pass nullptr for a pure forward pass
// (no graph is built, gradients do not flow).

Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape* tape, const Tensor& a, double k);
Tensor relu(Tape* tape, const Tensor& a);
Tensor sigmoid(Tape* tape, const Tensor& a);
// Sum of all elements -> shape [1].
Tensor sum(Tape* tape, const Tensor& a);
// Single element by flat index -> shape [1].
Tensor pick(Tape* tape, const Tensor& a, int64_t flat_index);
// Same data, new shape (element count must match).
Tensor reshape(Tape* tape, const Tensor& a, const Shape& shape);
// Contiguous flat range [offset, offset+len) -> rank-1 tensor.
Tensor slice(Tape* tape, const Tensor& a, int64_t offset, int64_t len);
// out += a (elementwise), as a*1 + b convenience for tests.
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);

// Max over coordinates of |analytic - central difference| normalized by
// max(1, |analytic|, |numeric|). `f` must be deterministic (verified by a
// double evaluation) and must route gradients to x when given a tape.
double finite_diff_check(const std::function<Tensor(Tape*, const Tensor&)>& f,
                         const Tensor& x, double eps);

}  // namespace stc::ops
