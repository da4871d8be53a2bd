#include "nalu/models.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "nalu/density.hpp"
#include "nalu/error.hpp"
#include "nalu/ntsr.hpp"

namespace nalu::models {

namespace fs = std::filesystem;
using ops::Mode;

namespace {

constexpr std::size_t kStages = 3;

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void require_batch(const Tensor& x) {
  if (x.rank() != 4 || x.dim(1) != 1) {
    throw DimensionError("model input must be [N,1,H,W], got " + shape_str(x.shape()));
  }
  if (x.dim(2) % 8 != 0 || x.dim(3) % 8 != 0) {
    throw DimensionError("model input spatial size " + shape_str(x.shape()) +
                         " is not divisible by 8");
  }
}

}  // namespace

Arch parse_arch(std::string_view name) {
  if (name == "fcrn") return Arch::Fcrn;
  if (name == "unet") return Arch::Unet;
  throw ConfigError("unknown architecture '" + std::string(name) + "'");
}

std::string_view to_string(Arch a) { return a == Arch::Fcrn ? "fcrn" : "unet"; }

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::Relu;
  if (name == "leaky_relu") return Activation::LeakyRelu;
  if (name == "linear") return Activation::Linear;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::LeakyRelu: return "leaky_relu";
    case Activation::Linear: return "linear";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  if (name == "relu" || name == "leaky_relu" || name == "linear") {
    return {parse_activation(name), units::UnitKind::None};
  }
  if (name == "nac" || name == "nalu" || name == "nalu_tanh" || name == "nalu_hard_sigmoid") {
    return {Activation::Relu, units::parse_unit_kind(name)};
  }
  throw ConfigError("unknown variant '" + std::string(name) + "'");
}

std::string variant_name(Activation a, units::UnitKind u) {
  if (u != units::UnitKind::None) {
    const std::string base(units::to_string(u));
    return a == Activation::Relu ? base : std::string(to_string(a)) + "+" + base;
  }
  return std::string(to_string(a));
}

std::size_t ModelConfig::channels() const {
  if (base != 0) return base;
  return arch == Arch::Fcrn ? kFcrnBase : kUnetBase;
}

void ModelConfig::validate() const {
  if (height == 0 || width == 0 || height % 8 != 0 || width % 8 != 0) {
    throw ConfigError("model input size " + std::to_string(height) + "x" + std::to_string(width) +
                      " must be a positive multiple of 8");
  }
}

Model::Conv Model::add_conv(const std::string& name, std::size_t cin, std::size_t cout,
                            std::size_t k, Rng& rng) {
  // He-normal weights, zero bias.
  const double stddev = std::sqrt(2.0 / static_cast<double>(cin * k * k));
  Tensor w({cout, cin, k, k});
  for (float& v : w.data()) v = static_cast<float>(rng.normal(0.0, stddev));
  Conv c;
  c.weight = params_.add(name + ".weight", std::move(w));
  c.bias = params_.add(name + ".bias", Tensor({cout}));
  return c;
}

Model::Norm Model::add_norm(const std::string& name, std::size_t c) {
  Norm n;
  n.gamma = params_.add(name + ".gamma", Tensor({c}, 1.0f));
  n.beta = params_.add(name + ".beta", Tensor({c}));
  n.state = bn_.size();
  bn_.emplace_back(c);
  bn_names_.push_back(name);
  return n;
}

Model::Stage Model::add_stage(const std::string& name, std::size_t cin, std::size_t cout, Rng& rng) {
  Stage s;
  s.conv = add_conv(name + ".conv", cin, cout, 3, rng);
  s.norm = add_norm(name + ".bn", cout);
  return s;
}

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t b = cfg_.channels();
  if (b == 0) throw ConfigError("base channels must be positive");
  Rng rng(cfg_.seed);
  Rng main_rng = rng.split(0), unit_rng = rng.split(1);
  const std::size_t enc[kStages] = {b, 2 * b, 4 * b};
  std::size_t cin = 1;
  for (std::size_t i = 0; i < kStages; ++i) {
    const std::string name = "enc" + std::to_string(i + 1);
    encoder_.push_back(add_stage(name, cin, enc[i], main_rng));
    if (cfg_.unit != units::UnitKind::None) {
      Residual r;
      r.unit = units::add_unit(params_, name + ".unit", cfg_.unit, cin, enc[i], unit_rng);
      r.unit_norm = add_norm(name + ".unit_bn", enc[i]);
      r.squeeze = add_stage(name + ".squeeze", 2 * enc[i], enc[i], unit_rng);
      residual_.push_back(r);
    }
    cin = enc[i];
  }
  if (cfg_.arch == Arch::Fcrn) {
    bottleneck_ = add_stage("bottleneck", 4 * b, 8 * b, main_rng);
    const std::size_t dec_in[kStages] = {8 * b, 4 * b, 2 * b};
    const std::size_t dec_out[kStages] = {4 * b, 2 * b, b};
    for (std::size_t i = 0; i < kStages; ++i) {
      decoder_.push_back(add_stage("dec" + std::to_string(i + 1), dec_in[i], dec_out[i], main_rng));
    }
  } else {
    bottleneck_ = add_stage("bottleneck", 4 * b, 4 * b, main_rng);
    // Each decoder stage sees the upsampled path concatenated with the skip
    // saved before the matching encoder pool.
    const std::size_t dec_in[kStages] = {4 * b + 4 * b, 4 * b + 2 * b, 2 * b + b};
    const std::size_t dec_out[kStages] = {4 * b, 2 * b, b};
    for (std::size_t i = 0; i < kStages; ++i) {
      decoder_.push_back(add_stage("dec" + std::to_string(i + 1), dec_in[i], dec_out[i], main_rng));
    }
  }
  head_ = add_conv("head", b, 1, 1, main_rng);
}

Var Model::conv(Tape& t, const std::vector<Var>& bound, const Conv& c, Var x) const {
  return ops::add_channel_bias(t, ops::conv2d(t, x, bound[c.weight], ops::Padding::Same),
                               bound[c.bias]);
}

Var Model::norm(Tape& t, const std::vector<Var>& bound, const Norm& n, Var x, Mode mode,
                std::vector<ops::BatchNormState>& states) const {
  return ops::batchnorm(t, x, bound[n.gamma], bound[n.beta], states.at(n.state), mode);
}

Var Model::activate(Tape& t, Var x) const {
  switch (cfg_.activation) {
    case Activation::Relu: return ops::unary(t, x, ops::UnaryKind::Relu);
    case Activation::LeakyRelu: return ops::unary(t, x, ops::UnaryKind::LeakyRelu);
    case Activation::Linear: return x;
  }
  return x;
}

Var Model::stage(Tape& t, const std::vector<Var>& bound, const Stage& s, Var x, Mode mode,
                 std::vector<ops::BatchNormState>& states) const {
  return activate(t, norm(t, bound, s.norm, conv(t, bound, s.conv, x), mode, states));
}

Var Model::forward(Tape& t, const std::vector<Var>& bound, Var x, Mode mode,
                   std::vector<ops::BatchNormState>& states) const {
  require_batch(t.value(x));
  if (bound.size() != params_.size()) {
    throw DimensionError("forward: " + std::to_string(bound.size()) + " bound parameters, model has " +
                         std::to_string(params_.size()));
  }
  if (states.size() != bn_.size()) throw DimensionError("forward: normalization state count mismatch");
  std::vector<Var> skips;
  Var h = x;
  for (std::size_t i = 0; i < kStages; ++i) {
    const Var in = h;
    const Var a = stage(t, bound, encoder_[i], in, mode, states);
    if (cfg_.arch == Arch::Unet) skips.push_back(a);
    h = ops::maxpool2(t, a);
    if (!residual_.empty()) {
      const Residual& r = residual_[i];
      Var n = units::unit_channel_map(t, in, units::bind_unit(r.unit, bound));
      n = norm(t, bound, r.unit_norm, ops::maxpool2(t, n), mode, states);
      // The squeezed block output carries no activation of its own.
      h = norm(t, bound, r.squeeze.norm, conv(t, bound, r.squeeze.conv, ops::concat_channels(t, h, n)),
               mode, states);
    }
  }
  h = stage(t, bound, bottleneck_, h, mode, states);
  for (std::size_t i = 0; i < kStages; ++i) {
    h = ops::upsample_repeat(t, h, 2);
    if (cfg_.arch == Arch::Unet) h = ops::concat_channels(t, h, skips[kStages - 1 - i]);
    h = stage(t, bound, decoder_[i], h, mode, states);
  }
  return conv(t, bound, head_, h);
}

Tensor Model::predict(const Tensor& x) const {
  Tape t;
  std::vector<Var> bound;
  bound.reserve(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) bound.push_back(t.constant(params_.value(i)));
  std::vector<ops::BatchNormState> states = bn_;
  return t.value(forward(t, bound, t.constant(x), Mode::Infer, states));
}

Model build_fcrn(ModelConfig cfg) {
  cfg.arch = Arch::Fcrn;
  return Model(cfg);
}

Model build_unet(ModelConfig cfg) {
  cfg.arch = Arch::Unet;
  return Model(cfg);
}

Model build_model(const ModelConfig& cfg) { return Model(cfg); }

Model attach_residual_concat(const Model& model, units::UnitKind kind) {
  if (kind == units::UnitKind::None) throw ConfigError("attach_residual_concat: unit kind 'none'");
  ModelConfig cfg = model.config();
  cfg.unit = kind;
  Model out(cfg);
  out.density_scale = model.density_scale;
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    if (const auto j = out.params().find(model.params().name(i))) {
      if (out.params().value(*j).shape() == model.params().value(i).shape()) {
        out.params().value(*j) = model.params().value(i);
      }
    }
  }
  for (std::size_t i = 0; i < model.bn_names().size(); ++i) {
    const auto& names = out.bn_names();
    const auto it = std::find(names.begin(), names.end(), model.bn_names()[i]);
    if (it != names.end()) out.bn_states()[static_cast<std::size_t>(it - names.begin())] = model.bn_states()[i];
  }
  return out;
}

Tensor forward(const Model& m, const Tensor& batch) { return m.predict(batch); }

void TrainConfig::validate() const {
  if (batch == 0) throw ConfigError("batch size must be at least 1");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (optimizer != "adam") throw ConfigError("unknown optimizer '" + optimizer + "' (supported: adam)");
  if (!(sigma > 0.0)) throw ConfigError("target sigma must be positive");
  if (!(density_scale > 0.0)) throw ConfigError("density scale must be positive");
  if (!(split > 0.0 && split < 1.0)) throw ConfigError("split fraction must lie strictly between 0 and 1");
  if (!(target_train_mae >= 0.0)) throw ConfigError("target train MAE must be nonnegative");
}

History train(Model& m, const std::vector<data::Sample>& samples, const TrainConfig& cfg,
              const EpochCallback& on_epoch) {
  cfg.validate();
  if (samples.empty()) throw ValueError("train: empty training set");
  m.density_scale = cfg.density_scale;
  const std::size_t n = samples.size();
  const std::size_t h = samples[0].height(), w = samples[0].width();
  std::vector<Tensor> targets;
  targets.reserve(n);
  for (const data::Sample& s : samples) {
    if (s.height() != h || s.width() != w) throw DimensionError("train: samples differ in size");
    Tensor d = density::render_density(s.dots, h, w, cfg.sigma).map;
    for (float& v : d.data()) v = static_cast<float>(v * cfg.density_scale);
    targets.push_back(std::move(d));
  }

  Adam opt(AdamConfig{static_cast<float>(cfg.lr)});
  Rng order = Rng(cfg.seed).split(1);
  std::vector<std::size_t> perm(n);
  History hist;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) {
      std::swap(perm[i - 1], perm[static_cast<std::size_t>(order.uniform_int(0, static_cast<long>(i - 1)))]);
    }
    double loss_sum = 0.0, err_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b0 = 0; b0 < n; b0 += cfg.batch) {
      const std::size_t bn = std::min(cfg.batch, n - b0);
      Tensor xb({bn, 1, h, w}), yb({bn, 1, h, w});
      for (std::size_t j = 0; j < bn; ++j) {
        const auto& img = samples[perm[b0 + j]].image.storage();
        const auto& tgt = targets[perm[b0 + j]].storage();
        std::copy(img.begin(), img.end(), xb.storage().begin() + static_cast<long>(j * h * w));
        std::copy(tgt.begin(), tgt.end(), yb.storage().begin() + static_cast<long>(j * h * w));
      }
      try {
        Tape t;
        const std::vector<Var> bound = m.params().bind(t);
        const Var pred = m.forward(t, bound, t.constant(xb), Mode::Train, m.bn_states());
        const Var loss = ops::mse(t, pred, t.constant(yb));
        t.backward(loss);
        opt.step(m.params(), m.params().grads(t, bound));
        loss_sum += t.value(loss).item();
        const Tensor& p = t.value(pred);
        for (std::size_t j = 0; j < bn; ++j) {
          double c = 0.0;
          for (std::size_t k = 0; k < h * w; ++k) c += p[j * h * w + k];
          err_sum += std::fabs(c / cfg.density_scale -
                               static_cast<double>(samples[perm[b0 + j]].dots.size()));
        }
      } catch (const NumericError& e) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batches) + ": " + e.what());
      }
      ++batches;
    }
    EpochStats st{epoch, loss_sum / static_cast<double>(batches), err_sum / static_cast<double>(n)};
    hist.epochs.push_back(st);
    if (on_epoch && !on_epoch(st)) break;
    if (st.train_mae < cfg.target_train_mae) break;
  }
  return hist;
}

std::vector<double> predict_counts(const Model& m, const std::vector<data::Sample>& samples,
                                   std::size_t batch) {
  if (batch == 0) throw ConfigError("batch size must be at least 1");
  std::vector<double> counts;
  counts.reserve(samples.size());
  for (std::size_t b0 = 0; b0 < samples.size(); b0 += batch) {
    const std::size_t bn = std::min(batch, samples.size() - b0);
    const Tensor pred = m.predict(data::stack_images(samples, b0, bn));
    const std::size_t per = pred.numel() / bn;
    for (std::size_t j = 0; j < bn; ++j) {
      double c = 0.0;
      for (std::size_t k = 0; k < per; ++k) c += pred[j * per + k];
      counts.push_back(c / m.density_scale);
    }
  }
  return counts;
}

double evaluate(const Model& m, const std::vector<data::Sample>& samples, std::size_t batch) {
  if (samples.empty()) throw ValueError("evaluate: empty sample set");
  const std::vector<double> pred = predict_counts(m, samples, batch);
  std::vector<double> truth;
  truth.reserve(samples.size());
  for (const data::Sample& s : samples) truth.push_back(static_cast<double>(s.dots.size()));
  return density::mae(pred, truth);
}

namespace {

std::string file_name_for(const std::string& name) { return name + ".ntsr"; }

}  // namespace

void save_checkpoint(const Model& m, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw IoError("cannot create checkpoint directory " + dir.string());
  std::ofstream man(dir / "manifest.txt");
  if (!man) throw IoError("cannot write " + (dir / "manifest.txt").string());
  const ModelConfig& c = m.config();
  man << "# model checkpoint\n"
      << "arch " << to_string(c.arch) << '\n'
      << "unit " << units::to_string(c.unit) << '\n'
      << "activation " << to_string(c.activation) << '\n'
      << "base " << c.channels() << '\n'
      << "height " << c.height << '\n'
      << "width " << c.width << '\n'
      << "seed " << c.seed << '\n'
      << "density_scale " << std::setprecision(17) << m.density_scale << '\n';
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    const std::string& name = m.params().name(i);
    ntsr::write_file(dir / file_name_for(name), m.params().value(i));
    man << "param " << name << ' ' << file_name_for(name) << '\n';
  }
  for (std::size_t i = 0; i < m.bn_names().size(); ++i) {
    const std::string mean = m.bn_names()[i] + ".running_mean";
    const std::string var = m.bn_names()[i] + ".running_var";
    ntsr::write_file(dir / file_name_for(mean), m.bn_states()[i].running_mean);
    ntsr::write_file(dir / file_name_for(var), m.bn_states()[i].running_var);
    man << "state " << mean << ' ' << file_name_for(mean) << '\n'
        << "state " << var << ' ' << file_name_for(var) << '\n';
  }
  if (!man) throw IoError("write failed for " + (dir / "manifest.txt").string());
}

Model load_checkpoint(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.txt";
  std::ifstream in(mpath);
  if (!in) throw IoError("cannot open " + mpath.string());
  ModelConfig cfg;
  double scale = 1.0;
  std::map<std::string, std::string> params, states;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key, a, b;
    ls >> key >> a;
    try {
      if (key == "arch") cfg.arch = parse_arch(a);
      else if (key == "unit") cfg.unit = units::parse_unit_kind(a);
      else if (key == "activation") cfg.activation = parse_activation(a);
      else if (key == "base") cfg.base = std::stoul(a);
      else if (key == "height") cfg.height = std::stoul(a);
      else if (key == "width") cfg.width = std::stoul(a);
      else if (key == "seed") cfg.seed = std::stoull(a);
      else if (key == "density_scale") scale = std::stod(a);
      else if (key == "param" && (ls >> b)) params[a] = b;
      else if (key == "state" && (ls >> b)) states[a] = b;
      else throw IoError("unrecognized line");
    } catch (const std::exception& e) {
      throw IoError(mpath.string() + ": bad line '" + line + "': " + e.what());
    }
  }
  Model m(cfg);
  m.density_scale = scale;
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    const auto it = params.find(m.params().name(i));
    if (it == params.end()) throw IoError(mpath.string() + ": missing parameter " + m.params().name(i));
    Tensor t = ntsr::read_file(dir / it->second);
    if (t.shape() != m.params().value(i).shape()) {
      throw IoError((dir / it->second).string() + ": shape " + shape_str(t.shape()) + ", expected " +
                    shape_str(m.params().value(i).shape()));
    }
    m.params().value(i) = std::move(t);
  }
  for (std::size_t i = 0; i < m.bn_names().size(); ++i) {
    for (const char* suffix : {".running_mean", ".running_var"}) {
      const std::string name = m.bn_names()[i] + suffix;
      const auto it = states.find(name);
      if (it == states.end()) throw IoError(mpath.string() + ": missing state " + name);
      Tensor t = ntsr::read_file(dir / it->second);
      Tensor& slot = std::string(suffix) == ".running_mean" ? m.bn_states()[i].running_mean
                                                            : m.bn_states()[i].running_var;
      if (t.shape() != slot.shape()) throw IoError((dir / it->second).string() + ": wrong shape");
      slot = std::move(t);
    }
  }
  return m;
}

const ExperimentRow* ExperimentReport::find(Arch a, const std::string& variant) const {
  for (const ExperimentRow& r : rows)
    if (r.arch == a && r.variant == variant) return &r;
  return nullptr;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, const std::vector<data::Sample>& train_set,
                                const std::vector<data::Sample>& test,
                                const std::vector<data::Sample>& validation) {
  cfg.train.validate();
  if (std::find(cfg.variants.begin(), cfg.variants.end(), "relu") == cfg.variants.end()) {
    throw ConfigError("experiment needs the relu baseline variant for RIP");
  }
  if (cfg.archs.empty()) throw ConfigError("experiment needs at least one architecture");
  if (train_set.empty() || test.empty() || validation.empty()) {
    throw ValueError("experiment needs nonempty train, test and validation pools");
  }
  if (cfg.jobs == 0) throw ConfigError("jobs must be at least 1");
  const auto start = std::chrono::steady_clock::now();

  struct Job {
    Arch arch;
    std::string variant;
  };
  std::vector<Job> jobs;
  for (Arch a : cfg.archs)
    for (const std::string& v : cfg.variants) {
      parse_variant(v);
      jobs.push_back({a, v});
    }

  std::vector<ExperimentRow> rows(jobs.size());
  auto run_one = [&](std::size_t i) {
    const auto t0 = std::chrono::steady_clock::now();
    const Variant v = parse_variant(jobs[i].variant);
    ModelConfig mc;
    mc.arch = jobs[i].arch;
    mc.unit = v.unit;
    mc.activation = v.activation;
    mc.base = cfg.base;
    mc.height = train_set[0].height();
    mc.width = train_set[0].width();
    // Same main-path init for every variant of an arch.
    mc.seed = cfg.train.seed;
    Model m(mc);
    const History h = train(m, train_set, cfg.train);
    ExperimentRow& r = rows[i];
    r.arch = jobs[i].arch;
    r.variant = jobs[i].variant;
    r.params = m.param_count();
    r.final_loss = h.epochs.empty() ? 0.0 : h.epochs.back().loss;
    r.test_mae = evaluate(m, test, cfg.train.batch);
    r.val_mae = evaluate(m, validation, 1);
    r.seconds = seconds_since(t0);
  };
  if (cfg.jobs <= 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(cfg.jobs, jobs.size()); ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
          try {
            run_one(i);
          } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mu);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (std::thread& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }

  ExperimentReport rep;
  rep.seed = cfg.train.seed;
  for (ExperimentRow& r : rows) {
    const ExperimentRow* base = nullptr;
    for (const ExperimentRow& b : rows)
      if (b.arch == r.arch && b.variant == "relu") base = &b;
    // A perfect baseline leaves RIP undefined; report it as NaN.
    r.test_rip = base->test_mae > 0.0 ? density::rip(base->test_mae, r.test_mae) : std::nan("");
    r.val_rip = base->val_mae > 0.0 ? density::rip(base->val_mae, r.val_mae) : std::nan("");
  }
  rep.rows = std::move(rows);
  rep.wall_seconds = seconds_since(start);
  return rep;
}

void write_experiment_csv(std::ostream& out, const ExperimentReport& r) {
  out << "arch,variant,params,test_mae,val_mae,test_rip,val_rip,seed\n";
  const auto flags = out.flags();
  out << std::setprecision(17);
  for (const ExperimentRow& row : r.rows) {
    out << to_string(row.arch) << ',' << row.variant << ',' << row.params << ',' << row.test_mae << ','
        << row.val_mae << ',' << row.test_rip << ',' << row.val_rip << ',' << r.seed << '\n';
  }
  out.flags(flags);
}

void print_experiment_table(std::ostream& out, const ExperimentReport& r) {
  const auto flags = out.flags();
  out << std::left << std::setw(6) << "arch" << std::setw(20) << "variant" << std::right << std::setw(10)
      << "params" << std::setw(11) << "test MAE" << std::setw(11) << "val MAE" << std::setw(10)
      << "test RIP" << std::setw(10) << "val RIP" << std::setw(9) << "seconds" << '\n';
  for (const ExperimentRow& row : r.rows) {
    out << std::left << std::setw(6) << to_string(row.arch) << std::setw(20) << row.variant << std::right
        << std::setw(10) << row.params << std::fixed << std::setprecision(3) << std::setw(11)
        << row.test_mae << std::setw(11) << row.val_mae << std::setprecision(2) << std::setw(9)
        << row.test_rip << '%' << std::setw(9) << row.val_rip << '%' << std::setprecision(1)
        << std::setw(9) << row.seconds << '\n';
    out.flags(flags);
  }
  out << "seed " << r.seed << ", " << std::fixed << std::setprecision(1) << r.wall_seconds << " s\n";
  out.flags(flags);
}

}  // namespace nalu::models
