#pragma once

#include <string_view>

#include "nalu/params.hpp"
#include "nalu/rng.hpp"
#include "nalu/tape.hpp"
#include "nalu/tensor.hpp"

// Neural accumulator (NAC) and neural arithmetic logic unit (NALU) layers.
//
//   W = tanh(W_hat) * sigmoid(M_hat)          (elementwise, entries in (-1, 1))
//   a = x W^T                                 (additive path, no bias)
//   m = exp(log(|x| + eps) W^T)               (multiplicative path, shares W)
//   g = gate(x G^T)                           (in [0, 1])
//   y = g * a + (1 - g) * m
namespace nalu::units {

enum class GateKind { Sigmoid, Tanh, HardSigmoid };

// Unit choice for layers that may or may not carry an arithmetic unit.
enum class UnitKind { None, Nac, Nalu, NaluTanh, NaluHardSigmoid };

GateKind parse_gate_kind(std::string_view name);
std::string_view to_string(GateKind kind);
UnitKind parse_unit_kind(std::string_view name);
std::string_view to_string(UnitKind kind);
// Gate used by a NALU unit kind; throws for None and Nac.
GateKind gate_of(UnitKind kind);

inline constexpr float kDefaultEps = 1e-7f;
inline constexpr float kInitRange = 0.5f;

struct NacParams {
  Tensor w_hat;  // [out, in]
  Tensor m_hat;  // [out, in]

  std::size_t in() const { return w_hat.dim(1); }
  std::size_t out() const { return w_hat.dim(0); }
};

struct NaluParams {
  NacParams nac;
  Tensor gate_weights;  // [out, in]
  float eps = kDefaultEps;
  GateKind gate = GateKind::Sigmoid;
};

// Uniform(-0.5, 0.5) initialization of every weight tensor.
NacParams init_nac(std::size_t in, std::size_t out, Rng& rng);
NaluParams init_nalu(std::size_t in, std::size_t out, GateKind gate, Rng& rng);

// Tape handles for a unit's parameters.
struct NacVars {
  Var w_hat;
  Var m_hat;
};

struct NaluVars {
  NacVars nac;
  Var gate_weights;
  float eps = kDefaultEps;
  GateKind gate = GateKind::Sigmoid;
};

// A NAC or NALU unit on the tape. `nalu` is false for a plain NAC, in which
// case gate_weights/eps/gate are unused.
struct UnitVars {
  NaluVars vars;
  bool nalu = false;
};

Var nac_weight(Tape& t, const NacVars& p);
// x [batch, in] -> [batch, out]
Var nac_forward(Tape& t, Var x, const NacVars& p);
Var gate(Tape& t, GateKind kind, Var z);
Var nalu_forward(Tape& t, Var x, const NaluVars& p);
Var unit_forward(Tape& t, Var x, const UnitVars& u);
// Applies the unit independently at every pixel of x [N,C,H,W], mixing
// channels with shared weights: [N,C,H,W] -> [N,out,H,W].
Var unit_channel_map(Tape& t, Var x, const UnitVars& u);

// Value-level conveniences (no gradients).
Tensor nac_weight(const NacParams& p);
Tensor nac_forward(const Tensor& x, const NacParams& p);
Tensor nalu_forward(const Tensor& x, const NaluParams& p);

// Registers a unit's tensors in a parameter set under `prefix` and returns the
// parameter indices, in the order w_hat, m_hat[, gate].
struct UnitSlots {
  std::size_t w_hat = 0;
  std::size_t m_hat = 0;
  std::size_t gate_weights = 0;
  UnitKind kind = UnitKind::None;
};
UnitSlots add_unit(ParamSet& params, const std::string& prefix, UnitKind kind, std::size_t in,
                   std::size_t out, Rng& rng);
UnitVars bind_unit(const UnitSlots& slots, const std::vector<Var>& bound);

}  // namespace nalu::units
