#include "nalu/params.hpp"

#include <cmath>

#include "nalu/error.hpp"

namespace nalu {

std::size_t ParamSet::add(std::string name, Tensor init) {
  if (find(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  names_.push_back(std::move(name));
  values_.push_back(std::move(init));
  return values_.size() - 1;
}

std::optional<std::size_t> ParamSet::find(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return i;
  return std::nullopt;
}

std::size_t ParamSet::count() const {
  std::size_t n = 0;
  for (const Tensor& t : values_) n += t.numel();
  return n;
}

std::vector<Var> ParamSet::bind(Tape& tape) const {
  std::vector<Var> vars;
  vars.reserve(values_.size());
  for (const Tensor& t : values_) vars.push_back(tape.leaf(t, true));
  return vars;
}

std::vector<Tensor> ParamSet::grads(const Tape& tape, const std::vector<Var>& bound) const {
  std::vector<Tensor> g;
  g.reserve(bound.size());
  for (Var v : bound) g.push_back(tape.grad(v));
  return g;
}

void Adam::step(ParamSet& params, const std::vector<Tensor>& grads) {
  if (grads.size() != params.size()) {
    throw DimensionError("optimizer: " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(params.size()) + " parameters");
  }
  if (m_.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_.emplace_back(params.value(i).numel(), 0.0);
      v_.emplace_back(params.value(i).numel(), 0.0);
    }
  }
  ++t_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params.value(i);
    const Tensor& g = grads[i];
    if (g.shape() != p.shape()) {
      throw DimensionError("optimizer: gradient shape " + shape_str(g.shape()) +
                           " does not match parameter '" + params.name(i) + "' " +
                           shape_str(p.shape()));
    }
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < p.numel(); ++j) {
      const double gj = g[j];
      m[j] = b1 * m[j] + (1.0 - b1) * gj;
      v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
      const double mh = m[j] / c1;
      const double vh = v[j] / c2;
      p[j] = static_cast<float>(p[j] - cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps));
    }
    if (!p.all_finite()) throw NumericError("parameter '" + params.name(i) + "' became non-finite");
  }
}

}  // namespace nalu
