#pragma once

#include <functional>

#include "nalu/tape.hpp"
#include "nalu/tensor.hpp"

namespace nalu {

// Builds a scalar-valued graph from an input variable.
using GraphFn = std::function<Var(Tape&, Var)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;  // at worst_index
  double numeric = 0.0;   // at worst_index
};

// Compares the tape gradient of f at x against central differences
// (f(x+h) - f(x-h)) / 2h, element by element. Per-element error is
// |g_a - g_n| / max(1e-6, |g_a| + |g_n|); the worst one is reported.
GradCheckResult grad_check(const GraphFn& f, const Tensor& x, float h = 1e-3f);

}  // namespace nalu
