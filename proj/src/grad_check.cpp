#include "nalu/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "nalu/error.hpp"

namespace nalu {

namespace {

double evaluate(const GraphFn& f, const Tensor& x) {
  Tape tape;
  const Var in = tape.constant(x);
  return tape.value(f(tape, in)).item();
}

}  // namespace

GradCheckResult grad_check(const GraphFn& f, const Tensor& x, float h) {
  Tape tape;
  const Var in = tape.leaf(x, true);
  const Var out = f(tape, in);
  if (tape.value(out).numel() != 1) {
    throw DimensionError("grad_check: graph must produce a scalar, got " +
                         shape_str(tape.value(out).shape()));
  }
  tape.backward(out);
  const Tensor analytic = tape.grad(in);

  GradCheckResult r;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const float orig = x[i];
    probe[i] = orig + h;
    const double up = evaluate(f, probe);
    probe[i] = orig - h;
    const double down = evaluate(f, probe);
    probe[i] = orig;
    const double numeric = (up - down) / (2.0 * static_cast<double>(h));
    const double a = analytic[i];
    const double err = std::fabs(a - numeric) / std::max(1e-6, std::fabs(a) + std::fabs(numeric));
    if (i == 0 || err > r.max_rel_error) r = GradCheckResult{err, i, a, numeric};
  }
  return r;
}

}  // namespace nalu
