#include "nalu/arithmetic_units.hpp"

#include <algorithm>
#include <string>

#include "nalu/error.hpp"
#include "nalu/ops.hpp"

namespace nalu::units {

GateKind parse_gate_kind(std::string_view name) {
  if (name == "sigmoid") return GateKind::Sigmoid;
  if (name == "tanh") return GateKind::Tanh;
  if (name == "hard_sigmoid") return GateKind::HardSigmoid;
  throw ConfigError("unknown gate kind '" + std::string(name) + "'");
}

std::string_view to_string(GateKind kind) {
  switch (kind) {
    case GateKind::Sigmoid: return "sigmoid";
    case GateKind::Tanh: return "tanh";
    case GateKind::HardSigmoid: return "hard_sigmoid";
  }
  return "?";
}

UnitKind parse_unit_kind(std::string_view name) {
  if (name == "none") return UnitKind::None;
  if (name == "nac") return UnitKind::Nac;
  if (name == "nalu") return UnitKind::Nalu;
  if (name == "nalu_tanh") return UnitKind::NaluTanh;
  if (name == "nalu_hard_sigmoid") return UnitKind::NaluHardSigmoid;
  throw ConfigError("unknown unit kind '" + std::string(name) + "'");
}

std::string_view to_string(UnitKind kind) {
  switch (kind) {
    case UnitKind::None: return "none";
    case UnitKind::Nac: return "nac";
    case UnitKind::Nalu: return "nalu";
    case UnitKind::NaluTanh: return "nalu_tanh";
    case UnitKind::NaluHardSigmoid: return "nalu_hard_sigmoid";
  }
  return "?";
}

GateKind gate_of(UnitKind kind) {
  switch (kind) {
    case UnitKind::Nalu: return GateKind::Sigmoid;
    case UnitKind::NaluTanh: return GateKind::Tanh;
    case UnitKind::NaluHardSigmoid: return GateKind::HardSigmoid;
    default: throw ConfigError("unit kind '" + std::string(to_string(kind)) + "' has no gate");
  }
}

namespace {

Tensor uniform_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (float& v : t.data()) v = static_cast<float>(rng.uniform(-kInitRange, kInitRange));
  return t;
}

void check_nac_shapes(const Tensor& w_hat, const Tensor& m_hat) {
  if (w_hat.rank() != 2 || w_hat.shape() != m_hat.shape()) {
    throw DimensionError("NAC parameters must be matching matrices, got " +
                         shape_str(w_hat.shape()) + " and " + shape_str(m_hat.shape()));
  }
}

}  // namespace

NacParams init_nac(std::size_t in, std::size_t out, Rng& rng) {
  NacParams p;
  p.w_hat = uniform_tensor({out, in}, rng);
  p.m_hat = uniform_tensor({out, in}, rng);
  return p;
}

NaluParams init_nalu(std::size_t in, std::size_t out, GateKind gate, Rng& rng) {
  NaluParams p;
  p.nac = init_nac(in, out, rng);
  p.gate_weights = uniform_tensor({out, in}, rng);
  p.gate = gate;
  return p;
}

Var nac_weight(Tape& t, const NacVars& p) {
  check_nac_shapes(t.value(p.w_hat), t.value(p.m_hat));
  const Var w = ops::mul(t, ops::unary(t, p.w_hat, ops::UnaryKind::Tanh),
                         ops::unary(t, p.m_hat, ops::UnaryKind::Sigmoid));
  // tanh and sigmoid round to exactly 1 in float32 once saturated; keep every
  // entry strictly inside (-1, 1). Both derivatives are already 0 there, so the
  // gradient passes straight through.
  constexpr float kEdge = 1.0f - 0x1p-24f;
  Tensor clamped = t.value(w);
  for (float& v : clamped.data()) v = std::clamp(v, -kEdge, kEdge);
  return t.record("nac_clamp", std::move(clamped), {w}, [w](Tape& tape, std::size_t self) {
    if (Tensor* g = tape.grad_slot(w)) {
      const Tensor& up = tape.out_grad(self);
      for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += up[i];
    }
  });
}

Var nac_forward(Tape& t, Var x, const NacVars& p) {
  const Var w = nac_weight(t, p);
  if (t.value(x).rank() != 2 || t.value(x).dim(1) != t.value(w).dim(1)) {
    throw DimensionError("NAC input " + shape_str(t.value(x).shape()) +
                         " does not match weights " + shape_str(t.value(w).shape()));
  }
  return ops::matmul(t, x, ops::transpose(t, w));
}

Var gate(Tape& t, GateKind kind, Var z) {
  switch (kind) {
    case GateKind::Sigmoid: return ops::unary(t, z, ops::UnaryKind::Sigmoid);
    case GateKind::HardSigmoid: return ops::unary(t, z, ops::UnaryKind::HardSigmoid);
    case GateKind::Tanh:
      return ops::scale(t, ops::add_scalar(t, ops::unary(t, z, ops::UnaryKind::Tanh), 1.0f), 0.5f);
  }
  throw ConfigError("unknown gate kind");
}

Var nalu_forward(Tape& t, Var x, const NaluVars& p) {
  if (!(p.eps > 0.0f)) throw ConfigError("NALU eps must be positive");
  const Tensor& xv = t.value(x);
  const Tensor& gv = t.value(p.gate_weights);
  if (gv.shape() != t.value(p.nac.w_hat).shape()) {
    throw DimensionError("NALU gate weights " + shape_str(gv.shape()) +
                         " do not match NAC weights " + shape_str(t.value(p.nac.w_hat).shape()));
  }
  if (xv.rank() != 2 || xv.dim(1) != gv.dim(1)) {
    throw DimensionError("NALU input " + shape_str(xv.shape()) + " does not match weights " +
                         shape_str(gv.shape()));
  }
  const Var w_t = ops::transpose(t, nac_weight(t, p.nac));
  const Var a = ops::matmul(t, x, w_t);
  const Var log_x =
      ops::unary(t, ops::add_scalar(t, ops::unary(t, x, ops::UnaryKind::Abs), p.eps),
                 ops::UnaryKind::Log);
  const Var m = ops::unary(t, ops::matmul(t, log_x, w_t), ops::UnaryKind::Exp);
  const Var g = gate(t, p.gate, ops::matmul(t, x, ops::transpose(t, p.gate_weights)));
  // g*a + (1-g)*m == m + g*(a-m)
  return ops::add(t, m, ops::mul(t, g, ops::sub(t, a, m)));
}

Var unit_forward(Tape& t, Var x, const UnitVars& u) {
  return u.nalu ? nalu_forward(t, x, u.vars) : nac_forward(t, x, u.vars.nac);
}

Var unit_channel_map(Tape& t, Var x, const UnitVars& u) {
  const Tensor& xv = t.value(x);
  if (xv.rank() != 4) {
    throw DimensionError("unit_channel_map expects [N,C,H,W], got " + shape_str(xv.shape()));
  }
  const std::size_t in = t.value(u.vars.nac.w_hat).dim(1);
  if (xv.dim(1) != in) {
    throw DimensionError("unit_channel_map: input has " + std::to_string(xv.dim(1)) +
                         " channels, unit expects " + std::to_string(in));
  }
  const std::size_t n = xv.dim(0), h = xv.dim(2), w = xv.dim(3);
  const Var rows = ops::channels_to_rows(t, x);
  return ops::rows_to_channels(t, unit_forward(t, rows, u), n, h, w);
}

Tensor nac_weight(const NacParams& p) {
  Tape t;
  return t.value(nac_weight(t, NacVars{t.constant(p.w_hat), t.constant(p.m_hat)}));
}

Tensor nac_forward(const Tensor& x, const NacParams& p) {
  Tape t;
  return t.value(nac_forward(t, t.constant(x), NacVars{t.constant(p.w_hat), t.constant(p.m_hat)}));
}

Tensor nalu_forward(const Tensor& x, const NaluParams& p) {
  Tape t;
  const NaluVars v{NacVars{t.constant(p.nac.w_hat), t.constant(p.nac.m_hat)},
                   t.constant(p.gate_weights), p.eps, p.gate};
  return t.value(nalu_forward(t, t.constant(x), v));
}

UnitSlots add_unit(ParamSet& params, const std::string& prefix, UnitKind kind, std::size_t in,
                   std::size_t out, Rng& rng) {
  if (kind == UnitKind::None) throw ConfigError("add_unit: unit kind 'none'");
  UnitSlots s;
  s.kind = kind;
  if (kind == UnitKind::Nac) {
    NacParams p = init_nac(in, out, rng);
    s.w_hat = params.add(prefix + ".w_hat", std::move(p.w_hat));
    s.m_hat = params.add(prefix + ".m_hat", std::move(p.m_hat));
  } else {
    NaluParams p = init_nalu(in, out, gate_of(kind), rng);
    s.w_hat = params.add(prefix + ".w_hat", std::move(p.nac.w_hat));
    s.m_hat = params.add(prefix + ".m_hat", std::move(p.nac.m_hat));
    s.gate_weights = params.add(prefix + ".gate", std::move(p.gate_weights));
  }
  return s;
}

UnitVars bind_unit(const UnitSlots& slots, const std::vector<Var>& bound) {
  UnitVars u;
  u.vars.nac = NacVars{bound.at(slots.w_hat), bound.at(slots.m_hat)};
  u.nalu = slots.kind != UnitKind::Nac;
  if (u.nalu) {
    u.vars.gate_weights = bound.at(slots.gate_weights);
    u.vars.gate = gate_of(slots.kind);
  }
  return u;
}

}  // namespace nalu::units
