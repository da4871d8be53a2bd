#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <sstream>

#include "nalu/density.hpp"
#include "nalu/error.hpp"
#include "nalu/models.hpp"
#include "model_grad.hpp"
#include "oracles.hpp"

using namespace nalu;
using namespace nalu::models;

namespace {

std::size_t conv_params(std::size_t cin, std::size_t cout, std::size_t k) {
  return cin * cout * k * k + cout;
}
std::size_t stage_params(std::size_t cin, std::size_t cout) { return conv_params(cin, cout, 3) + 2 * cout; }

std::size_t fcrn_oracle(std::size_t b) {
  return stage_params(1, b) + stage_params(b, 2 * b) + stage_params(2 * b, 4 * b) +
         stage_params(4 * b, 8 * b) + stage_params(8 * b, 4 * b) + stage_params(4 * b, 2 * b) +
         stage_params(2 * b, b) + conv_params(b, 1, 1);
}

std::size_t unet_oracle(std::size_t b) {
  return stage_params(1, b) + stage_params(b, 2 * b) + stage_params(2 * b, 4 * b) +
         stage_params(4 * b, 4 * b) + stage_params(8 * b, 4 * b) + stage_params(6 * b, 2 * b) +
         stage_params(3 * b, b) + conv_params(b, 1, 1);
}

ModelConfig tiny(Arch a, std::size_t base = 2, std::size_t size = 8) {
  ModelConfig c;
  c.arch = a;
  c.base = base;
  c.height = c.width = size;
  c.seed = 11;
  return c;
}

Tensor random_batch(std::size_t n, std::size_t h, std::size_t w, Rng& rng, double lo = 0.0,
                    double hi = 1.0) {
  return oracle::random_tensor({n, 1, h, w}, rng, lo, hi);
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("nalu_models_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("variant and architecture names") {
  CHECK(parse_arch("fcrn") == Arch::Fcrn);
  CHECK(parse_arch("unet") == Arch::Unet);
  CHECK_THROWS_AS(parse_arch("resnet"), ConfigError);
  CHECK(parse_variant("leaky_relu").activation == Activation::LeakyRelu);
  CHECK(parse_variant("leaky_relu").unit == units::UnitKind::None);
  CHECK(parse_variant("nalu_tanh").activation == Activation::Relu);
  CHECK(parse_variant("nalu_tanh").unit == units::UnitKind::NaluTanh);
  CHECK_THROWS_AS(parse_variant("sigmoid"), ConfigError);
  for (const char* v : {"relu", "leaky_relu", "linear", "nac", "nalu", "nalu_tanh", "nalu_hard_sigmoid"}) {
    const Variant p = parse_variant(v);
    CHECK(variant_name(p.activation, p.unit) == v);
  }
}

TEST_CASE("parameter counts follow the layer plan") {
  const Model f = build_fcrn(ModelConfig{});
  CHECK(f.config().channels() == kFcrnBase);
  CHECK(f.param_count() == fcrn_oracle(32));
  CHECK(f.params().value(0).numel() + f.params().value(1).numel() == 320);
  const Model u = build_unet(ModelConfig{});
  CHECK(u.config().channels() == kUnetBase);
  CHECK(u.param_count() == unet_oracle(64));
  const double ratio = double(u.param_count()) / double(f.param_count());
  CHECK(ratio >= 2.0);
  CHECK(ratio <= 4.0);
}

TEST_CASE("output shape matches input and rejects bad sizes") {
  Rng rng(1);
  for (Arch a : {Arch::Fcrn, Arch::Unet}) {
    const Model m(tiny(a, 2, 16));
    const Tensor y = m.predict(random_batch(3, 16, 24, rng));
    CHECK(y.shape() == Shape{3, 1, 16, 24});
    CHECK_THROWS_AS(m.predict(random_batch(1, 12, 16, rng)), DimensionError);
    CHECK_THROWS_AS(m.predict(Tensor({1, 2, 8, 8})), DimensionError);
  }
  ModelConfig bad;
  bad.height = 60;
  CHECK_THROWS_AS(Model{bad}, ConfigError);
}

TEST_CASE("U-Net decoder reads the skip connections") {
  Rng rng(2);
  Model m(tiny(Arch::Unet, 2, 16));
  const Tensor x = random_batch(2, 16, 16, rng);
  const Tensor before = m.predict(x);
  // dec3 sees [upsampled b | skip b]; zero the skip half of its kernel.
  const std::size_t w = *m.params().find("dec3.conv.weight");
  Tensor& k = m.params().value(w);
  const std::size_t cout = k.dim(0), cin = k.dim(1), half = cin / 2;
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t c = half; c < cin; ++c)
      for (std::size_t i = 0; i < 9; ++i) k[(o * cin + c) * 9 + i] = 0.0f;
  CHECK(max_abs_diff(before, m.predict(x)) > 1e-4);
  CHECK_FALSE(build_fcrn(tiny(Arch::Fcrn)).params().find("dec3.conv.weight") == std::nullopt);
  CHECK(build_fcrn(tiny(Arch::Fcrn)).params().value(*build_fcrn(tiny(Arch::Fcrn)).params().find("dec3.conv.weight")).dim(1) == 4);
}

TEST_CASE("attaching residual unit branches") {
  Rng rng(3);
  for (Arch a : {Arch::Fcrn, Arch::Unet}) {
    const Model base(tiny(a, 2, 16));
    for (units::UnitKind kind : {units::UnitKind::Nac, units::UnitKind::Nalu, units::UnitKind::NaluTanh,
                                 units::UnitKind::NaluHardSigmoid}) {
      const Model r = attach_residual_concat(base, kind);
      CHECK(r.config().unit == kind);
      CHECK(r.param_count() > base.param_count());
      for (std::size_t i = 0; i < base.params().size(); ++i) {
        const auto j = r.params().find(base.params().name(i));
        REQUIRE(j.has_value());
        CHECK(max_abs_diff(r.params().value(*j), base.params().value(i)) == 0.0);
      }
      const Tensor y = r.predict(random_batch(2, 16, 16, rng, 0.1, 1.0));
      CHECK(y.shape() == Shape{2, 1, 16, 16});
      CHECK(y.all_finite());
    }
  }
  CHECK_THROWS_AS(attach_residual_concat(Model(tiny(Arch::Fcrn)), units::UnitKind::None), ConfigError);
}

TEST_CASE("residual branch output depends on the unit path") {
  Rng rng(4);
  Model m(tiny(Arch::Fcrn, 2, 8));
  m = attach_residual_concat(m, units::UnitKind::Nac);
  const Tensor x = random_batch(2, 8, 8, rng);
  // Train a step so normalization statistics differ from identity.
  std::vector<ops::BatchNormState> st = m.bn_states();
  {
    Tape t;
    m.forward(t, m.params().bind(t), t.constant(x), ops::Mode::Train, st);
  }
  m.bn_states() = st;
  const Tensor before = m.predict(x);
  const std::size_t w = *m.params().find("enc1.squeeze.conv.weight");
  Tensor& k = m.params().value(w);
  const std::size_t cout = k.dim(0), cin = k.dim(1);
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t c = cin / 2; c < cin; ++c)
      for (std::size_t i = 0; i < 9; ++i) k[(o * cin + c) * 9 + i] = 0.0f;
  CHECK(max_abs_diff(before, m.predict(x)) > 1e-5);
}

TEST_CASE("inference is per-sample and deterministic") {
  Rng rng(5);
  for (Arch a : {Arch::Fcrn, Arch::Unet}) {
    const Model m(tiny(a, 2, 8));
    const Tensor x = random_batch(4, 8, 8, rng);
    const Tensor y = m.predict(x);
    // Reverse the batch: outputs must follow their inputs.
    Tensor xr(x.shape());
    for (std::size_t s = 0; s < 4; ++s)
      for (std::size_t i = 0; i < 64; ++i) xr[s * 64 + i] = x[(3 - s) * 64 + i];
    const Tensor yr = m.predict(xr);
    double d = 0.0;
    for (std::size_t s = 0; s < 4; ++s)
      for (std::size_t i = 0; i < 64; ++i) d = std::max(d, std::fabs(double(y[s * 64 + i]) - yr[(3 - s) * 64 + i]));
    CHECK(d < 1e-5);
    const Model m2(tiny(a, 2, 8));
    CHECK(max_abs_diff(y, m2.predict(x)) == 0.0);
  }
  ModelConfig other = tiny(Arch::Fcrn);
  other.seed = 12;
  Rng r2(6);
  const Tensor x = random_batch(1, 8, 8, r2);
  CHECK(max_abs_diff(Model(tiny(Arch::Fcrn)).predict(x), Model(other).predict(x)) > 0.0);
}

TEST_CASE("parameter gradients of tiny networks") {
  Rng rng(7);
  struct Case {
    Arch arch;
    Activation act;
    units::UnitKind unit;
  };
  // NALU blocks past the first read batch-normalized features that cross
  // zero, where log|x| leaves float32 differences untrustworthy; the NALU
  // layers themselves are checked with inputs bounded away from zero.
  const Case cases[] = {
      {Arch::Fcrn, Activation::Relu, units::UnitKind::None},
      {Arch::Fcrn, Activation::Linear, units::UnitKind::None},
      {Arch::Unet, Activation::LeakyRelu, units::UnitKind::None},
      {Arch::Unet, Activation::Relu, units::UnitKind::None},
      {Arch::Fcrn, Activation::Relu, units::UnitKind::Nac},
  };
  for (const Case& c : cases) {
    ModelConfig mc = tiny(c.arch, 2, 8);
    mc.activation = c.act;
    mc.unit = c.unit;
    mc.seed = 5;
    INFO(to_string(c.arch), " ", variant_name(c.act, c.unit));
    const Model m(mc);
    const oracle::ModelGradReport r = oracle::model_grad_check(m, random_batch(4, 8, 8, rng, 0.2, 0.6), rng);
    INFO("worst ", r.worst_name, " checked ", r.checked, "/", r.groups);
    CHECK(r.worst < 1e-3);
    CHECK(r.worst_structural < 1e-4);
    CHECK(r.checked * 8 >= r.groups - r.structural);
    MESSAGE(to_string(c.arch), " ", variant_name(c.act, c.unit), ": ", r.checked, " of ", r.groups - r.structural, " groups conditioned, worst ", r.worst);
  }
}

TEST_CASE("training reduces the loss and respects zero epochs") {
  Rng rng(8);
  const auto samples = data::gen_synthetic_cells(8, 16, 16, data::CountRange{2, 6}, rng);
  Model m(tiny(Arch::Fcrn, 4, 16));
  TrainConfig tc;
  tc.epochs = 0;
  const Tensor x = data::stack_images(samples, 0, samples.size());
  const Tensor before = m.predict(x);
  CHECK(train(m, samples, tc).epochs.empty());
  CHECK(max_abs_diff(before, m.predict(x)) == 0.0);

  tc.epochs = 40;
  tc.batch = 4;
  tc.lr = 3e-3;
  tc.density_scale = 100.0;
  std::size_t calls = 0;
  const History h = train(m, samples, tc, [&](const EpochStats& s) {
    CHECK(s.epoch == calls++);
    return true;
  });
  CHECK(calls == 40);
  REQUIRE(h.epochs.size() == 40);
  CHECK(h.epochs.back().loss < 0.5 * h.epochs.front().loss);
  CHECK(m.density_scale == 100.0);
  for (const auto& s : h.epochs) {
    CHECK(std::isfinite(s.loss));
    CHECK(s.train_mae >= 0.0);
  }
}

TEST_CASE("training stops at the target train MAE or on request") {
  Rng rng(14);
  const auto samples = data::gen_synthetic_cells(4, 16, 16, data::CountRange{2, 4}, rng);
  Model m(tiny(Arch::Fcrn, 2, 16));
  TrainConfig tc;
  tc.epochs = 5;
  tc.target_train_mae = 1e9;
  CHECK(train(m, samples, tc).epochs.size() == 1);
  tc.target_train_mae = 0.0;
  CHECK(train(m, samples, tc, [](const EpochStats& s) { return s.epoch < 2; }).epochs.size() == 3);
  tc.target_train_mae = -1.0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
}

TEST_CASE("training divergence names the epoch") {
  Rng rng(9);
  auto samples = data::gen_synthetic_cells(2, 16, 16, data::CountRange{1, 2}, rng);
  Model m(tiny(Arch::Fcrn, 2, 16));
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch = 1;
  tc.lr = 1e38;
  try {
    train(m, samples, tc);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("epoch 0") != std::string::npos);
  }
}

TEST_CASE("training config validation") {
  TrainConfig tc;
  CHECK_NOTHROW(tc.validate());
  tc.batch = 0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = TrainConfig{};
  tc.optimizer = "sgd";
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = TrainConfig{};
  tc.lr = 0.0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = TrainConfig{};
  tc.split = 1.0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  Model m(tiny(Arch::Fcrn));
  CHECK_THROWS_AS(train(m, {}, TrainConfig{}), ValueError);
}

TEST_CASE("evaluation against count oracles") {
  Rng rng(10);
  const auto samples = data::gen_synthetic_cells(5, 16, 16, data::CountRange{3, 9}, rng);
  double mean = 0.0;
  for (const auto& s : samples) mean += double(s.dots.size());
  mean /= double(samples.size());

  Model m(tiny(Arch::Fcrn, 2, 16));
  // A zero head predicts an empty density everywhere.
  for (const char* n : {"head.weight", "head.bias"}) {
    Tensor& v = m.params().value(*m.params().find(n));
    for (float& f : v.data()) f = 0.0f;
  }
  CHECK(evaluate(m, samples) == doctest::Approx(mean).epsilon(1e-12));

  // A head that is only a bias yields bias*H*W per image.
  Tensor& bias = m.params().value(*m.params().find("head.bias"));
  bias[0] = 0.01f;
  for (double c : predict_counts(m, samples, 2)) CHECK(c == doctest::Approx(0.01 * 256).epsilon(1e-5));
  m.density_scale = 2.0;
  for (double c : predict_counts(m, samples, 3)) CHECK(c == doctest::Approx(0.01 * 128).epsilon(1e-5));
  double err = 0.0;
  for (const auto& s : samples) err += std::fabs(0.01 * 128 - double(s.dots.size()));
  CHECK(evaluate(m, samples, 4) == doctest::Approx(err / 5).epsilon(1e-5));
  CHECK_THROWS_AS(evaluate(m, {}), ValueError);
}

TEST_CASE("a trained model counts held-out images") {
  Rng rng(11);
  const auto train_set = data::gen_synthetic_cells(48, 32, 32, data::CountRange{4, 12}, rng);
  const auto test = data::gen_synthetic_cells(16, 32, 32, data::CountRange{4, 12}, rng);
  Model m(tiny(Arch::Fcrn, 8, 32));
  TrainConfig tc;
  tc.epochs = 30;
  tc.batch = 8;
  tc.lr = 3e-3;
  tc.density_scale = 100.0;
  train(m, train_set, tc);
  double mean = 0.0;
  for (const auto& s : test) mean += double(s.dots.size());
  mean /= double(test.size());
  const double mae = evaluate(m, test);
  MESSAGE("held-out MAE ", mae, " mean count ", mean);
  CHECK(mae < 0.25 * mean);
}

TEST_CASE("checkpoint round trip") {
  Rng rng(12);
  Model m = attach_residual_concat(Model(tiny(Arch::Unet, 2, 8)), units::UnitKind::NaluTanh);
  m.density_scale = 50.0;
  const Tensor x = random_batch(2, 8, 8, rng, 0.1, 1.0);
  std::vector<ops::BatchNormState> st = m.bn_states();
  {
    Tape t;
    m.forward(t, m.params().bind(t), t.constant(x), ops::Mode::Train, st);
  }
  m.bn_states() = st;
  const auto dir = temp_dir("ckpt");
  save_checkpoint(m, dir);
  CHECK(std::filesystem::exists(dir / "manifest.txt"));
  const Model back = load_checkpoint(dir);
  CHECK(back.config().arch == Arch::Unet);
  CHECK(back.config().unit == units::UnitKind::NaluTanh);
  CHECK(back.config().channels() == 2);
  CHECK(back.density_scale == 50.0);
  CHECK(back.param_count() == m.param_count());
  CHECK(max_abs_diff(back.predict(x), m.predict(x)) == 0.0);

  std::filesystem::remove(dir / "head.bias.ntsr");
  CHECK_THROWS_AS(load_checkpoint(dir), IoError);
  CHECK_THROWS_AS(load_checkpoint(temp_dir("missing")), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("experiment runner") {
  Rng rng(13);
  const auto train_set = data::gen_synthetic_cells(4, 16, 16, data::CountRange{1, 3}, rng);
  const auto test = data::gen_synthetic_cells(2, 16, 16, data::CountRange{1, 3}, rng);
  const auto val = data::gen_synthetic_cells(2, 32, 32, data::CountRange{4, 6}, rng);
  ExperimentConfig ec;
  ec.archs = {Arch::Fcrn, Arch::Unet};
  ec.variants = {"relu", "nac"};
  ec.base = 2;
  ec.train.epochs = 2;
  ec.train.batch = 2;
  ec.train.seed = 5;
  const ExperimentReport r = run_experiment(ec, train_set, test, val);
  REQUIRE(r.rows.size() == 4);
  CHECK(r.rows[0].arch == Arch::Fcrn);
  CHECK(r.rows[1].variant == "nac");
  CHECK(r.rows[2].arch == Arch::Unet);
  for (const auto& row : r.rows) {
    const ExperimentRow* base = r.find(row.arch, "relu");
    REQUIRE(base != nullptr);
    CHECK(row.test_rip == doctest::Approx(density::rip(base->test_mae, row.test_mae)));
    CHECK(row.val_rip == doctest::Approx(density::rip(base->val_mae, row.val_mae)));
  }
  CHECK(r.find(Arch::Fcrn, "relu")->test_rip == 0.0);
  CHECK(r.find(Arch::Fcrn, "nac")->params > r.find(Arch::Fcrn, "relu")->params);

  ec.jobs = 3;
  const ExperimentReport p = run_experiment(ec, train_set, test, val);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(p.rows[i].test_mae == r.rows[i].test_mae);
    CHECK(p.rows[i].val_mae == r.rows[i].val_mae);
  }

  std::ostringstream csv;
  write_experiment_csv(csv, r);
  CHECK(csv.str().rfind("arch,variant,params,test_mae,val_mae,test_rip,val_rip,seed\n", 0) == 0);
  const std::string text = csv.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 5);
  std::ostringstream table;
  print_experiment_table(table, r);
  CHECK(table.str().find("nac") != std::string::npos);

  ec.variants = {"nalu", "nac"};
  CHECK_THROWS_AS(run_experiment(ec, train_set, test, val), ConfigError);
  ec.variants = {"relu", "bogus"};
  CHECK_THROWS_AS(run_experiment(ec, train_set, test, val), ConfigError);
  ec.variants = {"relu"};
  CHECK_THROWS_AS(run_experiment(ec, {}, test, val), ValueError);
}
