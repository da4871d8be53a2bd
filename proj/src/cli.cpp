#include "nalu/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include "nalu/bench.hpp"
#include "nalu/data.hpp"
#include "nalu/density.hpp"
#include "nalu/error.hpp"
#include "nalu/models.hpp"
#include "nalu/ntsr.hpp"
#include "nalu/png_io.hpp"
#include "nalu/rng.hpp"

namespace nalu::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kResolvedFile = "config.resolved";

std::string format(const std::string& v) { return v; }
std::string format(bool v) { return v ? "true" : "false"; }
template <class T>
std::string format(const T& v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  return f;
}

// Registers options on one subcommand and remembers how to echo each value.
class Options {
 public:
  explicit Options(CLI::App* app) : app_(app) {}

  template <class T>
  Options& add(const std::string& name, T& var, const std::string& help) {
    app_->add_option("--" + name, var, help);
    echo_.emplace_back(name, [&var] { return format(var); });
    return *this;
  }
  Options& flag(const std::string& name, bool& var, const std::string& help) {
    app_->add_flag("--" + name, var, help);
    echo_.emplace_back(name, [&var] { return format(var); });
    return *this;
  }

  void write_resolved(const fs::path& path) const {
    std::ofstream f = open_out(path);
    f << "# " << app_->get_name() << '\n';
    for (const auto& [name, value] : echo_) f << name << '=' << value() << '\n';
    if (!f) throw IoError("write failed for " + path.string());
  }

 private:
  CLI::App* app_;
  std::vector<std::pair<std::string, std::function<std::string()>>> echo_;
};

struct Common {
  std::uint64_t seed = 0;
  std::string out = "run";
  std::size_t jobs = 1;
  std::string config;
};

struct Command {
  CLI::App* app = nullptr;
  std::unique_ptr<Options> options;
  std::function<void(std::ostream&)> run;
};

// key=value lines; '#' starts a comment line.
std::vector<std::pair<std::string, std::string>> read_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::vector<std::pair<std::string, std::string>> kv;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    line.erase(0, line.find_first_not_of(" \t\r"));
    line.erase(line.find_last_not_of(" \t\r") + 1);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError(path.string() + ":" + std::to_string(n) + ": expected key=value");
    }
    std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    key.erase(key.find_last_not_of(" \t") + 1);
    value.erase(0, value.find_first_not_of(" \t"));
    kv.emplace_back(key, value);
  }
  return kv;
}

std::optional<std::string> config_path(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return std::nullopt;
}

data::AnnotationKind annotations(const std::string& s) { return data::parse_annotation_kind(s); }

void add_common(Options& o, Common& c) {
  o.add("seed", c.seed, "Root seed for every random stream")
      .add("out", c.out, "Output directory")
      .add("jobs", c.jobs, "Parallel workers for variant training (default sequential)");
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  bench::BenchConfig cfg;
  std::string variants;
};

Command bench_command(CLI::App& app, Common& common) {
  auto a = std::make_shared<BenchArgs>();
  for (bench::Variant v : bench::all_variants()) {
    if (!a->variants.empty()) a->variants += ',';
    a->variants += bench::to_string(v);
  }
  Command c;
  c.app = app.add_subcommand("bench-add", "Learn a + b on a small range and test far outside it");
  c.options = std::make_unique<Options>(c.app);
  add_common(*c.options, common);
  c.options->add("variants", a->variants, "Comma-separated variant list")
      .add("epochs", a->cfg.epochs, "Training epochs")
      .add("batch", a->cfg.batch, "Minibatch size")
      .add("lr", a->cfg.lr, "Adam learning rate")
      .add("n-train", a->cfg.n_train, "Training pairs")
      .add("n-test", a->cfg.n_test, "Test pairs")
      .add("train-lo", a->cfg.train_lo, "Lower end of the training range")
      .add("train-hi", a->cfg.train_hi, "Upper end of the training range")
      .add("test-multiplier", a->cfg.test_multiplier, "Test range width relative to training");
  c.run = [a, &common](std::ostream& out) {
    bench::BenchConfig cfg = a->cfg;
    cfg.seed = common.seed;
    cfg.jobs = common.jobs;
    cfg.variants.clear();
    for (const std::string& v : split_list(a->variants)) cfg.variants.push_back(bench::parse_variant(v));
    const bench::BenchReport r = bench::run_bench(cfg);
    std::ofstream csv = open_out(fs::path(common.out) / "bench.csv");
    bench::write_bench_csv(csv, r);
    bench::print_bench_table(out, r);
  };
  return c;
}

struct SurfaceArgs {
  std::string unit = "nac";
  double lo = -10.0, hi = 10.0, step = 0.5, probe = bench::kSurfaceProbe;
};

Command surface_command(CLI::App& app, Common& common) {
  auto a = std::make_shared<SurfaceArgs>();
  Command c;
  c.app = app.add_subcommand("surface", "Effective NAC weight or NALU output over a (w_hat, m_hat) grid");
  c.options = std::make_unique<Options>(c.app);
  add_common(*c.options, common);
  c.options->add("unit", a->unit, "nac or nalu")
      .add("lo", a->lo, "Grid start")
      .add("hi", a->hi, "Grid end")
      .add("step", a->step, "Grid spacing")
      .add("probe", a->probe, "NALU probe input");
  c.run = [a, &common](std::ostream& out) {
    const units::UnitKind kind = units::parse_unit_kind(a->unit);
    const auto rows = bench::surface_grid(kind, a->lo, a->hi, a->step, a->probe);
    const fs::path path = fs::path(common.out) / ("surface_" + a->unit + ".csv");
    std::ofstream csv = open_out(path);
    bench::write_surface_csv(csv, rows);
    out << rows.size() << " grid points written to " << path.string() << '\n';
  };
  return c;
}

struct GenArgs {
  std::size_t n = 40, height = 64, width = 64;
  int min_count = 10, max_count = 30;
  double split = 0.75;
};

Command gen_command(CLI::App& app, Common& common) {
  auto a = std::make_shared<GenArgs>();
  Command c;
  c.app = app.add_subcommand("gen-data", "Synthetic fluorescence-like cell images with dot annotations");
  c.options = std::make_unique<Options>(c.app);
  add_common(*c.options, common);
  c.options->add("n", a->n, "Number of images")
      .add("height", a->height, "Image height")
      .add("width", a->width, "Image width")
      .add("min-count", a->min_count, "Fewest cells per image")
      .add("max-count", a->max_count, "Most cells per image")
      .add("split", a->split, "Training fraction written to manifest.csv");
  c.run = [a, &common](std::ostream& out) {
    if (!(a->split > 0.0 && a->split < 1.0)) throw ConfigError("split must lie strictly between 0 and 1");
    Rng root(common.seed);
    Rng gen = root.split(0), order = root.split(1);
    std::vector<data::Sample> samples =
        data::gen_synthetic_cells(a->n, a->height, a->width, {a->min_count, a->max_count}, gen);
    const data::Split sp = data::split_samples(samples, a->split, order);
    std::map<std::string, std::string> label;
    for (const auto& s : sp.train) label[s.source] = "train";
    for (const auto& s : sp.test) label[s.source] = "test";
    std::vector<std::string> splits;
    for (const auto& s : samples) splits.push_back(label[s.source]);
    data::write_dataset(common.out, samples, &splits);
    out << samples.size() << " images (" << sp.train.size() << " train, " << sp.test.size()
        << " test) written to " << common.out << '\n';
  };
  return c;
}

struct DataArgs {
  std::string data;
  std::string annotations = "dots";
};

void add_data(Options& o, DataArgs& d) {
  o.add("data", d.data, "Dataset directory (images/ plus dots/ or masks/)")
      .add("annotations", d.annotations, "dots or masks");
}

std::vector<data::Sample> load(const DataArgs& d) {
  if (d.data.empty()) throw ConfigError("--data is required");
  return data::ingest_dataset(d.data, annotations(d.annotations));
}

Command ingest_command(CLI::App& app, Common& common) {
  auto a = std::make_shared<DataArgs>();
  Command c;
  c.app = app.add_subcommand("ingest", "Validate an external dataset and summarize it");
  c.options = std::make_unique<Options>(c.app);
  add_common(*c.options, common);
  add_data(*c.options, *a);
  c.run = [a, &common](std::ostream& out) {
    const auto samples = load(*a);
    std::ofstream csv = open_out(fs::path(common.out) / "ingest.csv");
    csv << "name,height,width,count\n";
    std::size_t total = 0;
    for (const auto& s : samples) {
      data::check_sample(s);
      csv << s.source << ',' << s.height() << ',' << s.width() << ',' << s.dots.size() << '\n';
      total += s.dots.size();
    }
    out << samples.size() << " samples, " << total << " annotated objects\n";
  };
  return c;
}

struct AugmentArgs {
  DataArgs data;
  data::AugmentConfig cfg;
  std::size_t copies = 1;
};

Command augment_command(CLI::App& app, Common& common) {
  auto a = std::make_shared<AugmentArgs>();
  Command c;
  c.app = app.add_subcommand("augment", "Write randomly transformed copies of a dataset");
  c.options = std::make_unique<Options>(c.app);
  add_common(*c.options, common);
  add_data(*c.options, a->data);
  c.options->add("copies", a->copies, "Augmented copies per input sample")
      .flag("hflip", a->cfg.hflip, "Random horizontal flips")
      .flag("vflip", a->cfg.vflip, "Random vertical flips")
      .flag("rotate", a->cfg.rotate, "Random quarter turns")
      .flag("shift", a->cfg.shift, "Random integer shifts")
      .flag("shear", a->cfg.shear, "Random horizontal shear")
      .flag("elastic", a->cfg.elastic, "Random elastic deformation")
      .add("shift-range", a->cfg.shift_range, "Largest shift per axis in px")
      .add("shear-range", a->cfg.shear_range, "Largest shear angle in radians")
      .add("elastic-grid", a->cfg.elastic_grid, "Control grid size for elastic deformation")
      .add("elastic-alpha", a->cfg.elastic_alpha, "Displacement stddev in px");
  c.run = [a, &common](std::ostream& out) {
    a->cfg.validate();
    const auto samples = load(a->data);
    Rng rng = Rng(common.seed).split(0);
    std::vector<data::Sample> aug;
    std::ofstream log = [&] {
      fs::create_directories(common.out);
      return open_out(fs::path(common.out) / "augment_log.csv");
    }();
    log << "name,source,transforms\n";
    for (const auto& s : samples) {
      for (std::size_t j = 0; j < a->copies; ++j) {
        data::Sample t = data::augment(s, a->cfg, rng);
        t.source = s.source + "_aug" + std::to_string(j);
        std::string steps;
        for (const std::string& e : t.log) steps += (steps.empty() ? "" : ";") + e;
        log << t.source << ',' << s.source << ",\"" << steps << "\"\n";
        aug.push_back(std::move(t));
      }
    }
    data::write_dataset(common.out, aug);
    out << aug.size() << " augmented samples written to " << common.out << '\n';
  };
  return c;
}

struct TileArgs {
  DataArgs data;
  std::size_t k = 4;
  bool flips = false;
  std::size_t out_height = 0, out_width = 0;
};

Command tile_command(CLI::App& app, Common& common) {
  auto a = std::make_shared<TileArgs>();
  Command c;
  c.app = app.add_subcommand("tile", "Build high-count images by k x k tiling");
  c.options = std::make_unique<Options>(c.app);
  add_common(*c.options, common);
  add_data(*c.options, a->data);
  c.options->add("k", a->k, "Tiles per side")
      .flag("flips", a->flips, "Flip each tile at random on both axes")
      .add("out-height", a->out_height, "Average-pool the tiled image to this height (0 keeps k*H)")
      .add("out-width", a->out_width, "Average-pool the tiled image to this width (0 keeps k*W)");
  c.run = [a, &common](std::ostream& out) {
    if ((a->out_height == 0) != (a->out_width == 0)) {
      throw ConfigError("--out-height and --out-width must be given together");
    }
    const auto samples = load(a->data);
    Rng rng = Rng(common.seed).split(0);
    std::optional<std::pair<std::size_t, std::size_t>> size;
    if (a->out_height != 0) size = std::make_pair(a->out_height, a->out_width);
    std::vector<data::Sample> tiled;
    for (const auto& s : samples) {
      data::Sample t = data::tile_grid(s, a->k, a->flips, rng, size);
      t.source = s.source + "_tile" + std::to_string(a->k);
      tiled.push_back(std::move(t));
    }
    data::write_dataset(common.out, tiled);
    std::size_t total = 0;
    for (const auto& t : tiled) total += t.dots.size();
    out << tiled.size() << " tiled samples with " << total << " dots written to " << common.out << '\n';
  };
  return c;
}

struct ModelArgs {
  std::string arch = "fcrn";
  std::string variant = "relu";
  std::size_t base = 0;
};

void add_model(Options& o, ModelArgs& m) {
  o.add("arch", m.arch, "fcrn or unet")
      .add("variant", m.variant, "relu, leaky_relu, linear, nac, nalu, nalu_tanh or nalu_hard_sigmoid")
      .add("base", m.base, "Base channel width (0 picks the architecture default)");
}

void add_train(Options& o, models::TrainConfig& t) {
  o.add("epochs", t.epochs, "Training epochs")
      .add("batch", t.batch, "Minibatch size")
      .add("lr", t.lr, "Learning rate")
      .add("optimizer", t.optimizer, "Optimizer (adam)")
      .add("sigma", t.sigma, "Gaussian sigma of the density targets")
      .add("density-scale", t.density_scale, "Multiplier applied to density targets")
      .add("split", t.split, "Training fraction when the dataset has no manifest")
      .add("target-train-mae", t.target_train_mae, "Stop once an epoch's train MAE is below this (0 never)");
}

struct TrainArgs {
  DataArgs data;
  ModelArgs model;
  models::TrainConfig train;
};

Command train_command(CLI::App& app, Common& common) {
  auto a = std::make_shared<TrainArgs>();
  Command c;
  c.app = app.add_subcommand("train", "Train a density-regression counting model");
  c.options = std::make_unique<Options>(c.app);
  add_common(*c.options, common);
  add_data(*c.options, a->data);
  add_model(*c.options, a->model);
  add_train(*c.options, a->train);
  c.run = [a, &common](std::ostream& out) {
    models::TrainConfig tc = a->train;
    tc.seed = common.seed;
    tc.validate();
    auto samples = load(a->data);
    if (samples.empty()) throw ValueError("dataset " + a->data.data + " has no samples");
    Rng order = Rng(common.seed).split(0);
    const data::Split sp = data::split_dataset(std::move(samples), a->data.data, tc.split, order);
    const models::Variant v = models::parse_variant(a->model.variant);
    models::ModelConfig mc;
    mc.arch = models::parse_arch(a->model.arch);
    mc.unit = v.unit;
    mc.activation = v.activation;
    mc.base = a->model.base;
    mc.height = sp.train.at(0).height();
    mc.width = sp.train.at(0).width();
    mc.seed = common.seed;
    models::Model m(mc);
    std::ofstream hist = open_out(fs::path(common.out) / "history.csv");
    hist << "epoch,loss,train_mae\n" << std::setprecision(17);
    models::train(m, sp.train, tc, [&](const models::EpochStats& s) {
      hist << s.epoch << ',' << s.loss << ',' << s.train_mae << '\n';
      return true;
    });
    models::save_checkpoint(m, fs::path(common.out) / "model");
    std::ofstream summary = open_out(fs::path(common.out) / "train_summary.csv");
    summary << "params,train_samples,test_samples,train_mae,test_mae\n" << std::setprecision(17);
    const double train_mae = models::evaluate(m, sp.train, tc.batch);
    const double test_mae = sp.test.empty() ? std::nan("") : models::evaluate(m, sp.test, tc.batch);
    summary << m.param_count() << ',' << sp.train.size() << ',' << sp.test.size() << ',' << train_mae << ','
            << test_mae << '\n';
    out << std::fixed << std::setprecision(3) << "trained " << a->model.arch << '/' << a->model.variant
        << " (" << m.param_count() << " params) train MAE " << train_mae << ", test MAE " << test_mae
        << '\n';
  };
  return c;
}

struct EvalArgs {
  DataArgs data;
  std::string model;
  std::size_t batch = 8;
};

Command eval_command(CLI::App& app, Common& common) {
  auto a = std::make_shared<EvalArgs>();
  Command c;
  c.app = app.add_subcommand("eval", "Count MAE of a checkpoint on a dataset");
  c.options = std::make_unique<Options>(c.app);
  add_common(*c.options, common);
  add_data(*c.options, a->data);
  c.options->add("model", a->model, "Checkpoint directory").add("batch", a->batch, "Inference batch size");
  c.run = [a, &common](std::ostream& out) {
    if (a->model.empty()) throw ConfigError("--model is required");
    const models::Model m = models::load_checkpoint(a->model);
    const auto samples = load(a->data);
    if (samples.empty()) throw ValueError("dataset " + a->data.data + " has no samples");
    // Samples of different sizes cannot share a batch.
    std::vector<double> pred;
    for (const auto& s : samples) pred.push_back(models::predict_counts(m, {s}, 1).at(0));
    std::vector<double> truth;
    std::ofstream csv = open_out(fs::path(common.out) / "eval.csv");
    csv << "name,count,predicted\n" << std::setprecision(17);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      truth.push_back(static_cast<double>(samples[i].dots.size()));
      csv << samples[i].source << ',' << samples[i].dots.size() << ',' << pred[i] << '\n';
    }
    const double mae = density::mae(pred, truth);
    std::ofstream summary = open_out(fs::path(common.out) / "eval_summary.csv");
    summary << "samples,mae\n" << samples.size() << ',' << std::setprecision(17) << mae << '\n';
    out << std::fixed << std::setprecision(3) << samples.size() << " samples, MAE " << mae << '\n';
  };
  return c;
}

struct PredictArgs {
  std::string model;
  std::string image;
};

Command predict_command(CLI::App& app, Common& common) {
  auto a = std::make_shared<PredictArgs>();
  Command c;
  c.app = app.add_subcommand("predict", "Density map and count for one image");
  c.options = std::make_unique<Options>(c.app);
  add_common(*c.options, common);
  c.options->add("model", a->model, "Checkpoint directory").add("image", a->image, "Grayscale PNG");
  c.run = [a, &common](std::ostream& out) {
    if (a->model.empty() || a->image.empty()) throw ConfigError("--model and --image are required");
    const models::Model m = models::load_checkpoint(a->model);
    const Tensor img = png::read(a->image);
    const std::size_t h = img.dim(1), w = img.dim(2);
    Tensor d = m.predict(img.reshaped({1, 1, h, w})).reshaped({h, w});
    for (float& v : d.data()) v = static_cast<float>(v / m.density_scale);
    const double count = density::count_from_density(d);
    const std::string stem = fs::path(a->image).stem().string();
    ntsr::write_file(fs::path(common.out) / (stem + ".density.ntsr"), d);
    std::ofstream csv = open_out(fs::path(common.out) / "predict.csv");
    csv << "image,count\n" << stem << ',' << std::setprecision(17) << count << '\n';
    out << stem << ": " << std::fixed << std::setprecision(2) << count << '\n';
  };
  return c;
}

struct ExperimentArgs {
  std::string archs = "fcrn";
  std::string variants = "relu,nalu";
  std::size_t base = 0;
  models::TrainConfig train;
  std::size_t n_images = 40, n_validation = 20, height = 64, width = 64, k = 4;
  int min_count = 10, max_count = 30;
  std::size_t pool_height = 0, pool_width = 0;
  DataArgs data;
  std::string validation;
};

Command experiment_command(CLI::App& app, Common& common) {
  auto a = std::make_shared<ExperimentArgs>();
  Command c;
  c.app = app.add_subcommand("experiment",
                             "Train variants on low-count images and test on tiled high-count images");
  c.options = std::make_unique<Options>(c.app);
  add_common(*c.options, common);
  c.options->add("archs", a->archs, "Comma-separated architectures")
      .add("variants", a->variants, "Comma-separated variants; must include relu")
      .add("base", a->base, "Base channel width (0 picks the architecture default)");
  add_train(*c.options, a->train);
  c.options->add("n-images", a->n_images, "Synthetic low-count images (train + test)")
      .add("n-validation", a->n_validation, "Tiled high-count validation images")
      .add("height", a->height, "Synthetic image height")
      .add("width", a->width, "Synthetic image width")
      .add("min-count", a->min_count, "Fewest cells per synthetic image")
      .add("max-count", a->max_count, "Most cells per synthetic image")
      .add("k", a->k, "Tiles per side for validation images")
      .add("pool-height", a->pool_height, "Pool tiled images to this height (0 keeps k*H)")
      .add("pool-width", a->pool_width, "Pool tiled images to this width (0 keeps k*W)");
  add_data(*c.options, a->data);
  c.options->add("validation", a->validation, "Validation dataset directory instead of tiling");
  c.run = [a, &common](std::ostream& out) {
    models::ExperimentConfig ec;
    ec.archs.clear();
    for (const std::string& s : split_list(a->archs)) ec.archs.push_back(models::parse_arch(s));
    ec.variants = split_list(a->variants);
    ec.base = a->base;
    ec.train = a->train;
    ec.train.seed = common.seed;
    ec.jobs = common.jobs;
    ec.train.validate();
    if (std::find(ec.variants.begin(), ec.variants.end(), "relu") == ec.variants.end()) {
      throw ConfigError("experiment needs the relu baseline variant for RIP");
    }
    if ((a->pool_height == 0) != (a->pool_width == 0)) {
      throw ConfigError("--pool-height and --pool-width must be given together");
    }
    Rng root(common.seed);
    Rng gen = root.split(10), order = root.split(12);
    std::vector<data::Sample> pool =
        a->data.data.empty()
            ? data::gen_synthetic_cells(a->n_images, a->height, a->width, {a->min_count, a->max_count}, gen)
            : load(a->data);
    const data::Split sp = a->data.data.empty()
                               ? data::split_samples(std::move(pool), ec.train.split, order)
                               : data::split_dataset(std::move(pool), a->data.data, ec.train.split, order);
    std::vector<data::Sample> validation;
    if (!a->validation.empty()) {
      validation = data::ingest_dataset(a->validation, annotations(a->data.annotations));
    } else {
      Rng vgen = root.split(11), tiles = root.split(13);
      std::optional<std::pair<std::size_t, std::size_t>> size;
      if (a->pool_height != 0) size = std::make_pair(a->pool_height, a->pool_width);
      for (const auto& s :
           data::gen_synthetic_cells(a->n_validation, a->height, a->width, {a->min_count, a->max_count}, vgen)) {
        validation.push_back(data::tile_grid(s, a->k, true, tiles, size));
      }
    }
    const models::ExperimentReport r = models::run_experiment(ec, sp.train, sp.test, validation);
    std::ofstream csv = open_out(fs::path(common.out) / "experiment.csv");
    models::write_experiment_csv(csv, r);
    out << sp.train.size() << " train, " << sp.test.size() << " test, " << validation.size()
        << " validation images\n";
    models::print_experiment_table(out, r);
  };
  return c;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Neural arithmetic units for extrapolation benchmarks and cell counting", "nalu"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  Common common;
  std::vector<Command> commands;
  commands.push_back(bench_command(app, common));
  commands.push_back(surface_command(app, common));
  commands.push_back(gen_command(app, common));
  commands.push_back(ingest_command(app, common));
  commands.push_back(augment_command(app, common));
  commands.push_back(tile_command(app, common));
  commands.push_back(train_command(app, common));
  commands.push_back(eval_command(app, common));
  commands.push_back(predict_command(app, common));
  commands.push_back(experiment_command(app, common));
  for (Command& c : commands) {
    c.app->add_option("--config", common.config, "key=value file; command-line flags take precedence");
  }

  // File values go first so later command-line flags win under TakeLast.
  std::vector<std::string> argv = args;
  if (const auto cfg = config_path(args); cfg && !argv.empty()) {
    std::vector<std::string> injected;
    for (const auto& [key, value] : read_config(*cfg)) {
      if (key == "config") continue;
      injected.push_back("--" + key + "=" + value);
    }
    argv.insert(argv.begin() + 1, injected.begin(), injected.end());
  }
  std::reverse(argv.begin(), argv.end());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  for (Command& c : commands) {
    if (!c.app->parsed()) continue;
    if (common.jobs == 0) throw ConfigError("--jobs must be at least 1");
    std::error_code ec;
    fs::create_directories(common.out, ec);
    if (!fs::is_directory(common.out)) throw IoError("cannot create output directory " + common.out);
    c.options->write_resolved(fs::path(common.out) / kResolvedFile);
    c.run(out);
  }
  return kExitOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return run(args, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numerical divergence: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace nalu::cli
