#pragma once

#include "stc/stcnet.hpp"

namespace stc::gradcheck {

struct OpResult {
  std::string name;
  double max_rel_err;
};

// Central finite differences against the analytic gradient for every
// differentiable op, over `seeds` random draws each. Inputs are nudged at
// least 1e-3 away from ReLU kinks. Returns the per-op worst relative error.
std::vector<OpResult> run_op_suite(int seeds, double eps);

// End-to-end check: forward + softmax cross-entropy on the given model in
// training mode, every parameter coordinate perturbed by +-eps. Returns the
// max relative error over all parameters.
double model_grad_check(STCNetModel& model, const Tensor& rgb, const Tensor& res,
                        int label, double eps);

// Builds a nano-config Full-variant model with seeded random inputs and runs
// model_grad_check on it.
OpResult run_model_check(uint64_t seed, double eps);

}  // namespace stc::gradcheck
