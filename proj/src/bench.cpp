#include "nalu/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <thread>

#include "nalu/error.hpp"
#include "nalu/ops.hpp"

namespace nalu::bench {

namespace {

struct VariantName {
  Variant v;
  std::string_view name;
};

constexpr VariantName kNames[] = {
    {Variant::Linear, "linear"},
    {Variant::Sigmoid, "sigmoid"},
    {Variant::Tanh, "tanh"},
    {Variant::Elu, "elu"},
    {Variant::Relu, "relu"},
    {Variant::LeakyRelu, "leaky_relu"},
    {Variant::Prelu, "prelu"},
    {Variant::Nac, "nac"},
    {Variant::Nalu, "nalu"},
    {Variant::NaluTanh, "nalu_tanh"},
    {Variant::NaluHardSigmoid, "nalu_hard_sigmoid"},
};

units::UnitKind unit_kind(Variant v) {
  switch (v) {
    case Variant::Nac: return units::UnitKind::Nac;
    case Variant::Nalu: return units::UnitKind::Nalu;
    case Variant::NaluTanh: return units::UnitKind::NaluTanh;
    case Variant::NaluHardSigmoid: return units::UnitKind::NaluHardSigmoid;
    default: return units::UnitKind::None;
  }
}

ops::UnaryKind activation(Variant v) {
  switch (v) {
    case Variant::Linear: return ops::UnaryKind::Linear;
    case Variant::Sigmoid: return ops::UnaryKind::Sigmoid;
    case Variant::Tanh: return ops::UnaryKind::Tanh;
    case Variant::Elu: return ops::UnaryKind::Elu;
    case Variant::Relu: return ops::UnaryKind::Relu;
    case Variant::LeakyRelu: return ops::UnaryKind::LeakyRelu;
    case Variant::Prelu: return ops::UnaryKind::Prelu;
    default: throw ConfigError("variant '" + std::string(to_string(v)) + "' has no activation");
  }
}

// U(-1/sqrt(in), 1/sqrt(in)) for dense weights and biases.
Tensor dense_init(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t(std::move(shape));
  for (float& v : t.data()) v = static_cast<float>(rng.uniform(-bound, bound));
  return t;
}

Var dense(Tape& t, Var x, Var w, Var b) {
  return ops::add_row_bias(t, ops::matmul(t, x, ops::transpose(t, w)), b);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

Variant parse_variant(std::string_view name) {
  for (const auto& [v, n] : kNames)
    if (n == name) return v;
  throw ConfigError("unknown variant '" + std::string(name) + "'");
}

std::string_view to_string(Variant v) {
  for (const auto& [k, n] : kNames)
    if (k == v) return n;
  return "?";
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> all = [] {
    std::vector<Variant> out;
    for (const auto& [v, n] : kNames) out.push_back(v);
    return out;
  }();
  return all;
}

bool is_unit_variant(Variant v) { return unit_kind(v) != units::UnitKind::None; }

void BenchConfig::validate() const {
  if (!(train_lo < train_hi)) throw ConfigError("train_lo must be below train_hi");
  if (!(test_multiplier > 0.0)) throw ConfigError("test_multiplier must be positive");
  if (n_train == 0 || n_test == 0) throw ConfigError("n_train and n_test must be positive");
  if (batch == 0) throw ConfigError("batch must be at least 1");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (variants.empty()) throw ConfigError("no variants selected");
  if (jobs == 0) throw ConfigError("jobs must be at least 1");
}

AdditionData gen_addition_data(long n, double lo, double hi, Rng& rng) {
  if (n <= 0) throw ValueError("gen_addition_data: n must be positive");
  if (!(lo < hi)) throw ValueError("gen_addition_data: lo must be below hi");
  const auto count = static_cast<std::size_t>(n);
  AdditionData d{Tensor({count, 2}), Tensor({count, 1})};
  for (std::size_t i = 0; i < count; ++i) {
    const auto a = static_cast<float>(rng.uniform(lo, hi));
    const auto b = static_cast<float>(rng.uniform(lo, hi));
    d.inputs[2 * i] = a;
    d.inputs[2 * i + 1] = b;
    d.targets[i] = a + b;
  }
  return d;
}

SmallNet::SmallNet(Variant v, Rng& rng) : variant_(v) {
  if (is_unit_variant(v)) {
    unit1_ = units::add_unit(params_, "unit1", unit_kind(v), 2, 3, rng);
    unit2_ = units::add_unit(params_, "unit2", unit_kind(v), 3, 1, rng);
    return;
  }
  params_.add("fc1.weight", dense_init({3, 2}, 2, rng));
  params_.add("fc1.bias", dense_init({3}, 2, rng));
  params_.add("fc2.weight", dense_init({1, 3}, 3, rng));
  params_.add("fc2.bias", dense_init({1}, 3, rng));
  if (v == Variant::Prelu) params_.add("fc1.prelu", Tensor({3}, ops::kPreluInit));
}

Var SmallNet::forward(Tape& t, const std::vector<Var>& bound, Var x) const {
  if (is_unit_variant(variant_)) {
    const Var h = units::unit_forward(t, x, units::bind_unit(unit1_, bound));
    return units::unit_forward(t, h, units::bind_unit(unit2_, bound));
  }
  Var h = dense(t, x, bound[0], bound[1]);
  h = variant_ == Variant::Prelu ? ops::prelu(t, h, bound[4])
                                 : ops::unary(t, h, activation(variant_));
  return dense(t, h, bound[2], bound[3]);
}

Tensor SmallNet::predict(const Tensor& x) const {
  Tape t;
  std::vector<Var> bound;
  for (std::size_t i = 0; i < params_.size(); ++i) bound.push_back(t.constant(params_.value(i)));
  return t.value(forward(t, bound, t.constant(x)));
}

SmallNet build_small_net(Variant v, Rng& rng) { return SmallNet(v, rng); }

const VariantResult* BenchReport::find(Variant v) const {
  for (const VariantResult& r : rows)
    if (r.variant == v) return &r;
  return nullptr;
}

double eval_mae(const SmallNet& net, const Tensor& inputs) {
  const Tensor pred = net.predict(inputs);
  const std::size_t n = inputs.dim(0);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double truth = static_cast<double>(inputs[2 * i]) + static_cast<double>(inputs[2 * i + 1]);
    s += std::fabs(static_cast<double>(pred[i]) - truth);
  }
  return s / static_cast<double>(n);
}

namespace {

struct Datasets {
  AdditionData train;
  AdditionData test;
  AdditionData interp;
};

VariantResult train_variant(const BenchConfig& cfg, const Datasets& data, std::size_t index) {
  const auto start = std::chrono::steady_clock::now();
  VariantResult res;
  res.variant = cfg.variants[index];
  const Rng root(cfg.seed);
  // Keyed by variant identity so a variant's init does not depend on which
  // other variants were selected.
  Rng init = root.split(100 + static_cast<std::uint64_t>(res.variant));
  SmallNet net(res.variant, init);
  // Every variant sees the same minibatch order.
  Rng order = root.split(3);
  Adam opt(AdamConfig{static_cast<float>(cfg.lr)});
  const std::size_t n = data.train.inputs.dim(0);
  std::vector<std::size_t> perm(n);
  try {
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      for (std::size_t i = n; i > 1; --i) {
        std::swap(perm[i - 1], perm[static_cast<std::size_t>(order.uniform_int(0, static_cast<long>(i - 1)))]);
      }
      for (std::size_t b0 = 0; b0 < n; b0 += cfg.batch) {
        const std::size_t bn = std::min(cfg.batch, n - b0);
        Tensor xb({bn, 2}), yb({bn, 1});
        for (std::size_t j = 0; j < bn; ++j) {
          xb[2 * j] = data.train.inputs[2 * perm[b0 + j]];
          xb[2 * j + 1] = data.train.inputs[2 * perm[b0 + j] + 1];
          yb[j] = data.train.targets[perm[b0 + j]];
        }
        Tape t;
        const std::vector<Var> bound = net.params().bind(t);
        const Var loss = ops::mse(t, net.forward(t, bound, t.constant(xb)), t.constant(yb));
        t.backward(loss);
        res.final_loss = t.value(loss).item();
        opt.step(net.params(), net.params().grads(t, bound));
      }
    }
    res.mae = eval_mae(net, data.test.inputs);
    res.interp_mae = eval_mae(net, data.interp.inputs);
    if (!std::isfinite(res.mae) || !std::isfinite(res.interp_mae)) {
      throw NumericError("non-finite evaluation error");
    }
  } catch (const NumericError& e) {
    res.diverged = true;
    res.diverged_reason = e.what();
    res.mae = std::numeric_limits<double>::infinity();
    res.interp_mae = std::numeric_limits<double>::infinity();
  }
  res.seconds = seconds_since(start);
  return res;
}

}  // namespace

BenchReport run_bench(const BenchConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const Rng root(cfg.seed);
  Rng r_train = root.split(0), r_test = root.split(1), r_interp = root.split(2);
  const Datasets data{
      gen_addition_data(static_cast<long>(cfg.n_train), cfg.train_lo, cfg.train_hi, r_train),
      gen_addition_data(static_cast<long>(cfg.n_test), cfg.train_lo, cfg.test_hi(), r_test),
      gen_addition_data(static_cast<long>(cfg.n_test), cfg.train_lo, cfg.train_hi, r_interp)};

  std::vector<VariantResult> results(cfg.variants.size());
  if (cfg.jobs <= 1) {
    for (std::size_t i = 0; i < results.size(); ++i) results[i] = train_variant(cfg, data, i);
  } else {
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    for (std::size_t w = 0; w < std::min(cfg.jobs, results.size()); ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < results.size(); i = next++) {
          results[i] = train_variant(cfg, data, i);
        }
      });
    }
    for (std::thread& th : pool) th.join();
  }

  BenchReport rep;
  rep.seed = cfg.seed;
  rep.epochs = cfg.epochs;
  rep.rows = std::move(results);
  std::stable_sort(rep.rows.begin(), rep.rows.end(), [](const VariantResult& a, const VariantResult& b) {
    if (a.diverged != b.diverged) return !a.diverged;
    return a.mae < b.mae;
  });
  rep.wall_seconds = seconds_since(start);
  return rep;
}

void write_bench_csv(std::ostream& out, const BenchReport& r) {
  out << "variant,mae,interp_mae,diverged,seed,epochs\n";
  const auto flags = out.flags();
  out << std::setprecision(17);
  for (const VariantResult& v : r.rows) {
    out << to_string(v.variant) << ',';
    if (v.diverged) {
      out << "nan,nan,1,";
    } else {
      out << v.mae << ',' << v.interp_mae << ",0,";
    }
    out << r.seed << ',' << r.epochs << '\n';
  }
  out.flags(flags);
}

void print_bench_table(std::ostream& out, const BenchReport& r) {
  const auto flags = out.flags();
  out << std::left << std::setw(20) << "variant" << std::right << std::setw(14) << "extrap MAE"
      << std::setw(14) << "interp MAE" << std::setw(10) << "seconds" << '\n';
  for (const VariantResult& v : r.rows) {
    out << std::left << std::setw(20) << to_string(v.variant) << std::right;
    if (v.diverged) {
      out << std::setw(14) << "diverged" << std::setw(14) << "-";
    } else {
      out << std::scientific << std::setprecision(3) << std::setw(14) << v.mae << std::setw(14)
          << v.interp_mae;
    }
    out << std::fixed << std::setprecision(1) << std::setw(10) << v.seconds << '\n';
    out.flags(flags);
  }
  out << "seed " << r.seed << ", " << r.epochs << " epochs, " << std::fixed << std::setprecision(1)
      << r.wall_seconds << " s\n";
  out.flags(flags);
}

std::vector<SurfaceRow> surface_grid(units::UnitKind kind, double lo, double hi, double step,
                                     double probe) {
  if (!(step > 0.0)) throw ValueError("surface_grid: step must be positive");
  if (!(lo <= hi)) throw ValueError("surface_grid: empty grid");
  if (kind != units::UnitKind::Nac && kind != units::UnitKind::Nalu) {
    throw ConfigError("surface_grid: unit kind must be nac or nalu");
  }
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<SurfaceRow> rows;
  rows.reserve(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    const double w_hat = lo + static_cast<double>(i) * step;
    for (std::size_t j = 0; j < n; ++j) {
      const double m_hat = lo + static_cast<double>(j) * step;
      units::NacParams p{Tensor({1, 1}, static_cast<float>(w_hat)),
                         Tensor({1, 1}, static_cast<float>(m_hat))};
      SurfaceRow row{w_hat, m_hat, std::nullopt, 0.0};
      if (kind == units::UnitKind::Nac) {
        row.value = units::nac_weight(p).item();
      } else {
        const units::NaluParams np{p, Tensor({1, 1}), units::kDefaultEps, units::GateKind::Sigmoid};
        row.x = probe;
        row.value = units::nalu_forward(Tensor({1, 1}, static_cast<float>(probe)), np).item();
      }
      rows.push_back(row);
    }
  }
  return rows;
}

void write_surface_csv(std::ostream& out, const std::vector<SurfaceRow>& rows) {
  const bool probe = !rows.empty() && rows.front().x.has_value();
  out << (probe ? "w_hat,m_hat,x,value\n" : "w_hat,m_hat,value\n");
  const auto flags = out.flags();
  out << std::setprecision(9);
  for (const SurfaceRow& r : rows) {
    out << r.w_hat << ',' << r.m_hat << ',';
    if (probe) out << *r.x << ',';
    out << r.value << '\n';
  }
  out.flags(flags);
}

}  // namespace nalu::bench
