#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "nalu/arithmetic_units.hpp"
#include "nalu/data.hpp"
#include "nalu/ops.hpp"
#include "nalu/params.hpp"
#include "nalu/tape.hpp"

// Density-regression networks for cell counting and their training harness.
namespace nalu::models {

enum class Arch { Fcrn, Unet };
enum class Activation { Relu, LeakyRelu, Linear };

Arch parse_arch(std::string_view name);
std::string_view to_string(Arch a);
Activation parse_activation(std::string_view name);
std::string_view to_string(Activation a);

inline constexpr std::size_t kFcrnBase = 32;
inline constexpr std::size_t kUnetBase = 64;

struct ModelConfig {
  Arch arch = Arch::Fcrn;
  units::UnitKind unit = units::UnitKind::None;
  Activation activation = Activation::Relu;
  std::size_t base = 0;  // 0 selects the architecture default
  std::size_t height = 64;
  std::size_t width = 64;
  std::uint64_t seed = 0;

  std::size_t channels() const;
  void validate() const;
};

// Experiment variant names: relu, leaky_relu, linear (activation baselines)
// and nac, nalu, nalu_tanh, nalu_hard_sigmoid (ReLU network plus residual
// unit branches).
struct Variant {
  Activation activation = Activation::Relu;
  units::UnitKind unit = units::UnitKind::None;
};
Variant parse_variant(std::string_view name);
std::string variant_name(Activation a, units::UnitKind u);

class Model {
 public:
  explicit Model(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  std::size_t param_count() const { return params_.count(); }
  std::vector<ops::BatchNormState>& bn_states() { return bn_; }
  const std::vector<ops::BatchNormState>& bn_states() const { return bn_; }
  const std::vector<std::string>& bn_names() const { return bn_names_; }

  // Train mode normalizes with batch statistics and updates `states`.
  Var forward(Tape& t, const std::vector<Var>& bound, Var x, ops::Mode mode,
              std::vector<ops::BatchNormState>& states) const;
  // Infer-mode density prediction for x [N,1,H,W].
  Tensor predict(const Tensor& x) const;

  // Predicted densities are this multiple of unit-mass densities.
  double density_scale = 1.0;

 private:
  struct Conv {
    std::size_t weight = 0, bias = 0;
  };
  struct Norm {
    std::size_t gamma = 0, beta = 0, state = 0;
  };
  struct Stage {
    Conv conv;
    Norm norm;
  };
  struct Residual {
    units::UnitSlots unit;
    Norm unit_norm;
    Stage squeeze;
  };

  Conv add_conv(const std::string& name, std::size_t cin, std::size_t cout, std::size_t k, Rng& rng);
  Norm add_norm(const std::string& name, std::size_t c);
  Stage add_stage(const std::string& name, std::size_t cin, std::size_t cout, Rng& rng);
  Var conv(Tape& t, const std::vector<Var>& bound, const Conv& c, Var x) const;
  Var norm(Tape& t, const std::vector<Var>& bound, const Norm& n, Var x, ops::Mode mode,
           std::vector<ops::BatchNormState>& states) const;
  Var activate(Tape& t, Var x) const;
  Var stage(Tape& t, const std::vector<Var>& bound, const Stage& s, Var x, ops::Mode mode,
            std::vector<ops::BatchNormState>& states) const;

  ModelConfig cfg_;
  ParamSet params_;
  std::vector<ops::BatchNormState> bn_;
  std::vector<std::string> bn_names_;
  std::vector<Stage> encoder_;
  Stage bottleneck_;
  std::vector<Stage> decoder_;
  Conv head_;
  std::vector<Residual> residual_;
};

Model build_fcrn(ModelConfig cfg);
Model build_unet(ModelConfig cfg);
Model build_model(const ModelConfig& cfg);
// Same network with a residual unit branch on every encoder block. Shared
// parameters and normalization statistics are carried over by name.
Model attach_residual_concat(const Model& model, units::UnitKind kind);

Tensor forward(const Model& m, const Tensor& batch);

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch = 8;
  double lr = 1e-3;
  std::string optimizer = "adam";
  double sigma = 2.0;
  double density_scale = 1.0;
  std::uint64_t seed = 0;
  double split = 0.75;
  // Stop after the first epoch whose train MAE falls below this; 0 never stops.
  double target_train_mae = 0.0;

  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;       // mean over minibatches of the pixel MSE
  double train_mae = 0.0;  // count MAE of the train-mode predictions
};

struct History {
  std::vector<EpochStats> epochs;
};

// Returning false stops training after this epoch.
using EpochCallback = std::function<bool(const EpochStats&)>;

// Throws NumericError naming the epoch and batch if the loss or an update
// becomes non-finite.
History train(Model& m, const std::vector<data::Sample>& samples, const TrainConfig& cfg,
              const EpochCallback& on_epoch = {});

std::vector<double> predict_counts(const Model& m, const std::vector<data::Sample>& samples,
                                   std::size_t batch = 8);
double evaluate(const Model& m, const std::vector<data::Sample>& samples, std::size_t batch = 8);

// Checkpoint directory: one NTSR file per parameter and normalization
// statistic plus manifest.txt (config echo and name -> file table).
void save_checkpoint(const Model& m, const std::filesystem::path& dir);
Model load_checkpoint(const std::filesystem::path& dir);

struct ExperimentConfig {
  std::vector<Arch> archs{Arch::Fcrn};
  std::vector<std::string> variants{"relu", "nalu"};
  std::size_t base = 0;
  TrainConfig train;
  std::size_t jobs = 1;
};

struct ExperimentRow {
  Arch arch = Arch::Fcrn;
  std::string variant;
  std::size_t params = 0;
  double test_mae = 0.0;
  double val_mae = 0.0;
  double test_rip = 0.0;
  double val_rip = 0.0;
  double final_loss = 0.0;
  double seconds = 0.0;
};

struct ExperimentReport {
  std::vector<ExperimentRow> rows;  // arch-major, variants in the requested order
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;

  const ExperimentRow* find(Arch a, const std::string& variant) const;
};

// Trains every arch x variant on `train` with the same seeds, evaluates on
// `test` and the high-count `validation` pool, and scores RIP against the
// relu row of the same arch. Throws ConfigError without a relu variant.
ExperimentReport run_experiment(const ExperimentConfig& cfg, const std::vector<data::Sample>& train,
                                const std::vector<data::Sample>& test,
                                const std::vector<data::Sample>& validation);

// Columns: arch,variant,params,test_mae,val_mae,test_rip,val_rip,seed.
void write_experiment_csv(std::ostream& out, const ExperimentReport& r);
void print_experiment_table(std::ostream& out, const ExperimentReport& r);

}  // namespace nalu::models
