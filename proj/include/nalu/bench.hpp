#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include "nalu/arithmetic_units.hpp"
#include "nalu/params.hpp"
#include "nalu/rng.hpp"
#include "nalu/tape.hpp"
#include "nalu/tensor.hpp"

// Addition-extrapolation benchmark: small 2-3-1 networks trained on a + b over
// a narrow range and scored on a range ten times wider.
namespace nalu::bench {

enum class Variant {
  Linear,
  Sigmoid,
  Tanh,
  Elu,
  Relu,
  LeakyRelu,
  Prelu,
  Nac,
  Nalu,
  NaluTanh,
  NaluHardSigmoid,
};

Variant parse_variant(std::string_view name);
std::string_view to_string(Variant v);
const std::vector<Variant>& all_variants();
bool is_unit_variant(Variant v);

struct BenchConfig {
  std::size_t n_train = std::size_t{1} << 14;
  double train_lo = 0.0;
  double train_hi = 10.0;
  double test_multiplier = 10.0;
  std::size_t n_test = 4096;
  std::vector<Variant> variants = all_variants();
  std::uint64_t seed = 0;
  // 1024-sample batches leave the NALU variants far from converged in any
  // affordable epoch budget; small batches converge.
  std::size_t epochs = 1000;
  std::size_t batch = 64;
  double lr = 1e-3;
  std::size_t jobs = 1;

  // [train_lo, train_lo + test_multiplier * (train_hi - train_lo))
  double test_hi() const { return train_lo + test_multiplier * (train_hi - train_lo); }
  void validate() const;
};

struct AdditionData {
  Tensor inputs;   // [n, 2]
  Tensor targets;  // [n, 1]
};

// a, b ~ U[lo, hi) i.i.d., target a + b.
AdditionData gen_addition_data(long n, double lo, double hi, Rng& rng);

class SmallNet {
 public:
  SmallNet(Variant v, Rng& rng);

  Variant variant() const { return variant_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  std::size_t param_count() const { return params_.count(); }

  // x [batch, 2] -> [batch, 1], using parameters already bound on the tape.
  Var forward(Tape& t, const std::vector<Var>& bound, Var x) const;
  Tensor predict(const Tensor& x) const;

 private:
  Variant variant_;
  ParamSet params_;
  units::UnitSlots unit1_, unit2_;
};

SmallNet build_small_net(Variant v, Rng& rng);

struct VariantResult {
  Variant variant = Variant::Linear;
  double mae = 0.0;         // extrapolation range
  double interp_mae = 0.0;  // training range
  double final_loss = 0.0;
  bool diverged = false;
  std::string diverged_reason;
  double seconds = 0.0;
};

struct BenchReport {
  std::vector<VariantResult> rows;  // ascending extrapolation MAE, diverged last
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  double wall_seconds = 0.0;

  const VariantResult* find(Variant v) const;
};

// Mean absolute error of the model on (inputs, exact double targets a + b).
double eval_mae(const SmallNet& net, const Tensor& inputs);

BenchReport run_bench(const BenchConfig& cfg);

// Columns: variant,mae,interp_mae,diverged,seed,epochs. Machine-readable; no
// wall-time fields so reruns compare byte-for-byte.
void write_bench_csv(std::ostream& out, const BenchReport& r);
void print_bench_table(std::ostream& out, const BenchReport& r);

struct SurfaceRow {
  double w_hat = 0.0;
  double m_hat = 0.0;
  std::optional<double> x;  // probe input, NALU grids only
  double value = 0.0;
};

inline constexpr double kSurfaceProbe = 2.0;

// nac: W = tanh(w_hat) * sigmoid(m_hat) over the grid. nalu: output of a 1->1
// NALU with gate weight 0 at the probe input.
std::vector<SurfaceRow> surface_grid(units::UnitKind kind, double lo, double hi, double step,
                                     double probe = kSurfaceProbe);
void write_surface_csv(std::ostream& out, const std::vector<SurfaceRow>& rows);

}  // namespace nalu::bench
