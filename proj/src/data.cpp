#include "nalu/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>

#include "nalu/error.hpp"
#include "nalu/png_io.hpp"

namespace nalu::data {

namespace fs = std::filesystem;
using density::Dot;
using density::Dots;

namespace {

std::string fmt(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

void require_image(const Tensor& t, const char* what) {
  if (t.rank() != 3 || t.dim(0) != 1) {
    throw DimensionError(std::string(what) + ": expected [1,H,W] image, got " + shape_str(t.shape()));
  }
}

// Pixel centres sit at integer coordinates, so the centres of an HxW image
// span [0, W-1] x [0, H-1]. Geometric transforms keep dots in that box.
Dot clamp_dot(Dot d, std::size_t h, std::size_t w) {
  return {std::clamp(d.x, 0.0, static_cast<double>(w) - 1.0),
          std::clamp(d.y, 0.0, static_cast<double>(h) - 1.0)};
}

// Bilinear sample of a [1,H,W] image with clamp-to-edge addressing.
float sample_clamped(const Tensor& img, double x, double y) {
  const std::size_t h = img.dim(1), w = img.dim(2);
  x = std::clamp(x, 0.0, static_cast<double>(w) - 1.0);
  y = std::clamp(y, 0.0, static_cast<double>(h) - 1.0);
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0);
  const double top = (1 - fx) * img[y0 * w + x0] + fx * img[y0 * w + x1];
  const double bot = (1 - fx) * img[y1 * w + x0] + fx * img[y1 * w + x1];
  return static_cast<float>((1 - fy) * top + fy * bot);
}

Sample with_image(const Sample& s, Tensor image) {
  Sample out;
  out.image = std::move(image);
  out.source = s.source;
  out.log = s.log;
  return out;
}

// Bilinear interpolation of a g x g node grid spanning the image corners.
struct Field {
  std::size_t g;
  std::vector<double> dx, dy;
  double sx, sy;  // pixel -> grid coordinate scale

  std::pair<double, double> at(double x, double y) const {
    const double u = std::clamp(x * sx, 0.0, static_cast<double>(g - 1));
    const double v = std::clamp(y * sy, 0.0, static_cast<double>(g - 1));
    const std::size_t i0 = std::min(static_cast<std::size_t>(u), g - 2);
    const std::size_t j0 = std::min(static_cast<std::size_t>(v), g - 2);
    const double fu = u - static_cast<double>(i0), fv = v - static_cast<double>(j0);
    auto lerp2 = [&](const std::vector<double>& a) {
      const double top = (1 - fu) * a[j0 * g + i0] + fu * a[j0 * g + i0 + 1];
      const double bot = (1 - fu) * a[(j0 + 1) * g + i0] + fu * a[(j0 + 1) * g + i0 + 1];
      return (1 - fv) * top + fv * bot;
    };
    return {lerp2(dx), lerp2(dy)};
  }
};

}  // namespace

void check_sample(const Sample& s) {
  require_image(s.image, "sample");
  if (!s.image.all_finite()) throw ValueError("sample '" + s.source + "': non-finite pixels");
  const double h = static_cast<double>(s.height()), w = static_cast<double>(s.width());
  for (const Dot& d : s.dots) {
    if (!(d.x >= 0 && d.y >= 0 && d.x < w && d.y < h)) {
      throw ValueError("sample '" + s.source + "': dot (" + fmt(d.x) + ", " + fmt(d.y) +
                       ") outside the image");
    }
  }
}

std::vector<Sample> gen_synthetic_cells(std::size_t n, std::size_t h, std::size_t w,
                                        CountRange counts, Rng& rng) {
  const auto min_side = static_cast<std::size_t>(2 * kBlobRadiusMax) + 1;
  if (h < min_side || w < min_side) {
    throw ValueError("gen_synthetic_cells: images must be at least " + std::to_string(min_side) +
                     " px on each side for the blob radius");
  }
  if (counts.lo < 0 || counts.lo > counts.hi) {
    throw ValueError("gen_synthetic_cells: invalid count range");
  }
  const Rng base(rng.next_u64());
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Rng stream = base.split(i);
    Rng blob_rng = stream.split(0), noise_rng = stream.split(1), count_rng = stream.split(2);
    const auto count = static_cast<int>(count_rng.uniform_int(counts.lo, counts.hi));
    std::vector<double> acc(h * w, 0.0);
    Sample s;
    for (int c = 0; c < count; ++c) {
      const Dot centre{blob_rng.uniform(0.0, static_cast<double>(w) - 1.0),
                       blob_rng.uniform(0.0, static_cast<double>(h) - 1.0)};
      // Radii are two standard deviations of the blob's principal axes.
      const double sa = blob_rng.uniform(kBlobRadiusMin, kBlobRadiusMax) / 2.0;
      const double sb = blob_rng.uniform(kBlobRadiusMin, kBlobRadiusMax) / 2.0;
      const double theta = blob_rng.uniform(0.0, std::numbers::pi);
      const double peak = blob_rng.uniform(0.5, 1.0);
      const double ct = std::cos(theta), st = std::sin(theta);
      const double reach = 3.0 * std::max(sa, sb);
      const long x0 = std::max(0L, static_cast<long>(std::floor(centre.x - reach)));
      const long x1 = std::min(static_cast<long>(w) - 1, static_cast<long>(std::ceil(centre.x + reach)));
      const long y0 = std::max(0L, static_cast<long>(std::floor(centre.y - reach)));
      const long y1 = std::min(static_cast<long>(h) - 1, static_cast<long>(std::ceil(centre.y + reach)));
      for (long y = y0; y <= y1; ++y) {
        for (long x = x0; x <= x1; ++x) {
          const double dx = static_cast<double>(x) - centre.x, dy = static_cast<double>(y) - centre.y;
          const double u = ct * dx + st * dy, v = -st * dx + ct * dy;
          acc[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] +=
              peak * std::exp(-0.5 * (u * u / (sa * sa) + v * v / (sb * sb)));
        }
      }
      s.dots.push_back(centre);
    }
    s.image = Tensor({1, h, w});
    for (std::size_t p = 0; p < h * w; ++p) {
      s.image[p] = static_cast<float>(std::clamp(acc[p] + noise_rng.normal(0.0, kSensorNoise), 0.0, 1.0));
    }
    std::ostringstream name;
    name << "syn_" << std::setw(5) << std::setfill('0') << i;
    s.source = name.str();
    out.push_back(std::move(s));
  }
  return out;
}

AnnotationKind parse_annotation_kind(const std::string& name) {
  if (name == "dots") return AnnotationKind::Dots;
  if (name == "masks") return AnnotationKind::Masks;
  throw ConfigError("unknown annotation kind '" + name + "' (expected dots or masks)");
}

Dots mask_to_dots(const Tensor& mask) {
  if (mask.rank() != 2 && !(mask.rank() == 3 && mask.dim(0) == 1)) {
    throw DimensionError("mask_to_dots: expected [H,W] or [1,H,W], got " + shape_str(mask.shape()));
  }
  const std::size_t h = mask.dim(mask.rank() - 2), w = mask.dim(mask.rank() - 1);
  std::vector<char> fg(h * w), eroded(h * w, 0);
  for (std::size_t i = 0; i < h * w; ++i) fg[i] = mask[i] > 0.5f;
  auto on = [&](long y, long x) {
    return y >= 0 && x >= 0 && y < static_cast<long>(h) && x < static_cast<long>(w) &&
           fg[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
  };
  for (long y = 0; y < static_cast<long>(h); ++y)
    for (long x = 0; x < static_cast<long>(w); ++x)
      eroded[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] =
          on(y, x) && on(y - 1, x) && on(y + 1, x) && on(y, x - 1) && on(y, x + 1);

  Dots dots;
  std::vector<char> seen(h * w, 0);
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < h * w; ++start) {
    if (!eroded[start] || seen[start]) continue;
    double sx = 0, sy = 0;
    std::size_t n = 0;
    stack.assign(1, start);
    seen[start] = 1;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const long py = static_cast<long>(p / w), px = static_cast<long>(p % w);
      sx += static_cast<double>(px);
      sy += static_cast<double>(py);
      ++n;
      for (long dy = -1; dy <= 1; ++dy)
        for (long dx = -1; dx <= 1; ++dx) {
          const long y = py + dy, x = px + dx;
          if (y < 0 || x < 0 || y >= static_cast<long>(h) || x >= static_cast<long>(w)) continue;
          const std::size_t q = static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x);
          if (eroded[q] && !seen[q]) {
            seen[q] = 1;
            stack.push_back(q);
          }
        }
    }
    dots.push_back({sx / static_cast<double>(n), sy / static_cast<double>(n)});
  }
  return dots;
}

std::vector<Sample> ingest_dataset(const fs::path& dir, AnnotationKind kind) {
  const fs::path images = dir / "images";
  if (!fs::is_directory(images)) throw IoError("missing image directory " + images.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(images))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<Sample> out;
  for (const fs::path& img : files) {
    Sample s;
    s.source = img.stem().string();
    s.image = png::read(img);
    if (kind == AnnotationKind::Dots) {
      const fs::path ann = dir / "dots" / (s.source + ".csv");
      if (!fs::exists(ann)) throw IoError("missing annotation " + ann.string() + " for " + img.string());
      s.dots = density::read_dots_csv(ann);
    } else {
      const fs::path ann = dir / "masks" / (s.source + ".png");
      if (!fs::exists(ann)) throw IoError("missing annotation " + ann.string() + " for " + img.string());
      const Tensor mask = png::read(ann);
      if (mask.shape() != s.image.shape()) {
        throw IoError(ann.string() + ": mask size " + shape_str(mask.shape()) +
                      " does not match image " + shape_str(s.image.shape()));
      }
      s.dots = mask_to_dots(mask);
    }
    try {
      check_sample(s);
    } catch (const ValueError& e) {
      throw IoError(img.string() + ": " + e.what());
    }
    out.push_back(std::move(s));
  }
  return out;
}

Split split_samples(std::vector<Sample> samples, double train_fraction, Rng& rng) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train fraction must lie strictly between 0 and 1");
  }
  const std::size_t n = samples.size();
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    std::swap(perm[i - 1], perm[static_cast<std::size_t>(rng.uniform_int(0, static_cast<long>(i - 1)))]);
  }
  const auto n_train = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(n)));
  std::vector<char> is_train(n, 0);
  for (std::size_t i = 0; i < n_train; ++i) is_train[perm[i]] = 1;
  Split out;
  for (std::size_t i = 0; i < n; ++i) (is_train[i] ? out.train : out.test).push_back(std::move(samples[i]));
  return out;
}

Split split_dataset(std::vector<Sample> samples, const fs::path& dir, double train_fraction, Rng& rng) {
  const fs::path manifest = dir / "manifest.csv";
  if (!fs::exists(manifest)) return split_samples(std::move(samples), train_fraction, rng);
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open " + manifest.string());
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "name,split") throw IoError(manifest.string() + ": expected header 'name,split'");
  std::map<std::string, std::string> which;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw IoError(manifest.string() + ": malformed row '" + line + "'");
    const std::string split = line.substr(comma + 1);
    if (split != "train" && split != "test") {
      throw IoError(manifest.string() + ": unknown split '" + split + "'");
    }
    which[line.substr(0, comma)] = split;
  }
  Split out;
  for (Sample& s : samples) {
    const auto it = which.find(s.source);
    if (it == which.end()) throw IoError(manifest.string() + ": no entry for '" + s.source + "'");
    (it->second == "train" ? out.train : out.test).push_back(std::move(s));
  }
  return out;
}

void write_dataset(const fs::path& dir, const std::vector<Sample>& samples,
                   const std::vector<std::string>* splits) {
  if (splits && splits->size() != samples.size()) {
    throw DimensionError("write_dataset: one split label per sample required");
  }
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  fs::create_directories(dir / "dots", ec);
  if (!fs::is_directory(dir / "images") || !fs::is_directory(dir / "dots")) {
    throw IoError("cannot create dataset directories under " + dir.string());
  }
  for (const Sample& s : samples) {
    png::write(dir / "images" / (s.source + ".png"), s.image, 16);
    density::write_dots_csv(dir / "dots" / (s.source + ".csv"), s.dots);
  }
  if (splits) {
    std::ofstream m(dir / "manifest.csv");
    if (!m) throw IoError("cannot write " + (dir / "manifest.csv").string());
    m << "name,split\n";
    for (std::size_t i = 0; i < samples.size(); ++i) m << samples[i].source << ',' << (*splits)[i] << '\n';
  }
}

AugmentConfig AugmentConfig::none() {
  AugmentConfig c;
  c.hflip = c.vflip = c.rotate = c.shift = c.shear = c.elastic = false;
  return c;
}

void AugmentConfig::validate() const {
  if (!(elastic_alpha >= 0.0)) throw ConfigError("elastic alpha must be nonnegative");
  if (elastic_grid < 2) throw ConfigError("elastic grid must be at least 2x2");
  if (shift_range < 0) throw ConfigError("shift range must be nonnegative");
  if (!(shear_range >= 0.0 && shear_range < std::numbers::pi / 2)) {
    throw ConfigError("shear range must lie in [0, pi/2)");
  }
}

Sample elastic_deform(const Sample& s, std::size_t grid, double alpha, Rng& rng) {
  require_image(s.image, "elastic_deform");
  if (grid < 2) throw ConfigError("elastic grid must be at least 2x2");
  if (!(alpha >= 0.0)) throw ConfigError("elastic alpha must be nonnegative");
  const std::size_t h = s.height(), w = s.width();
  Field f{grid, std::vector<double>(grid * grid), std::vector<double>(grid * grid),
          w > 1 ? static_cast<double>(grid - 1) / static_cast<double>(w - 1) : 0.0,
          h > 1 ? static_cast<double>(grid - 1) / static_cast<double>(h - 1) : 0.0};
  for (std::size_t i = 0; i < grid * grid; ++i) {
    f.dx[i] = rng.normal(0.0, alpha);
    f.dy[i] = rng.normal(0.0, alpha);
  }
  Tensor img({1, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const auto [dx, dy] = f.at(static_cast<double>(x), static_cast<double>(y));
      img[y * w + x] = sample_clamped(s.image, static_cast<double>(x) + dx, static_cast<double>(y) + dy);
    }
  Sample out = with_image(s, std::move(img));
  for (const Dot& q : s.dots) {
    const auto [dx, dy] = f.at(std::round(q.x), std::round(q.y));
    out.dots.push_back(clamp_dot({q.x - dx, q.y - dy}, h, w));
  }
  out.log.push_back("elastic(grid=" + std::to_string(grid) + ",alpha=" + fmt(alpha) + ")");
  return out;
}

Sample hflip(const Sample& s) {
  require_image(s.image, "hflip");
  const std::size_t h = s.height(), w = s.width();
  Tensor img({1, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) img[y * w + x] = s.image[y * w + (w - 1 - x)];
  Sample out = with_image(s, std::move(img));
  for (const Dot& d : s.dots) out.dots.push_back(clamp_dot({static_cast<double>(w) - 1 - d.x, d.y}, h, w));
  out.log.push_back("hflip");
  return out;
}

Sample vflip(const Sample& s) {
  require_image(s.image, "vflip");
  const std::size_t h = s.height(), w = s.width();
  Tensor img({1, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) img[y * w + x] = s.image[(h - 1 - y) * w + x];
  Sample out = with_image(s, std::move(img));
  for (const Dot& d : s.dots) out.dots.push_back(clamp_dot({d.x, static_cast<double>(h) - 1 - d.y}, h, w));
  out.log.push_back("vflip");
  return out;
}

Sample rot90(const Sample& s) {
  require_image(s.image, "rot90");
  const std::size_t h = s.height(), w = s.width();
  // Output is w rows by h columns; out(x', y') = in(x = y', y = h-1-x').
  Tensor img({1, w, h});
  for (std::size_t yo = 0; yo < w; ++yo)
    for (std::size_t xo = 0; xo < h; ++xo) img[yo * h + xo] = s.image[(h - 1 - xo) * w + yo];
  Sample out = with_image(s, std::move(img));
  for (const Dot& d : s.dots) out.dots.push_back(clamp_dot({static_cast<double>(h) - 1 - d.y, d.x}, w, h));
  out.log.push_back("rot90");
  return out;
}

Sample shift(const Sample& s, int dx, int dy) {
  require_image(s.image, "shift");
  const std::size_t h = s.height(), w = s.width();
  Tensor img({1, h, w});
  for (long y = 0; y < static_cast<long>(h); ++y)
    for (long x = 0; x < static_cast<long>(w); ++x) {
      const long sx = x - dx, sy = y - dy;
      if (sx >= 0 && sy >= 0 && sx < static_cast<long>(w) && sy < static_cast<long>(h)) {
        img[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] =
            s.image[static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)];
      }
    }
  Sample out = with_image(s, std::move(img));
  std::size_t dropped = 0;
  for (const Dot& d : s.dots) {
    const Dot m{d.x + dx, d.y + dy};
    if (m.x >= 0 && m.y >= 0 && m.x < static_cast<double>(w) && m.y < static_cast<double>(h)) {
      out.dots.push_back(m);
    } else {
      ++dropped;
    }
  }
  out.log.push_back("shift(" + std::to_string(dx) + "," + std::to_string(dy) + ") dropped " +
                    std::to_string(dropped));
  return out;
}

Sample shear(const Sample& s, double theta) {
  require_image(s.image, "shear");
  const std::size_t h = s.height(), w = s.width();
  const double t = std::tan(theta);
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  Tensor img({1, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      img[y * w + x] = sample_clamped(s.image, static_cast<double>(x) - t * (static_cast<double>(y) - cy),
                                      static_cast<double>(y));
  Sample out = with_image(s, std::move(img));
  for (const Dot& d : s.dots) out.dots.push_back(clamp_dot({d.x + t * (d.y - cy), d.y}, h, w));
  out.log.push_back("shear(" + fmt(theta) + ")");
  return out;
}

Sample augment(const Sample& s, const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  Sample out = s;
  if (cfg.hflip && rng.coin()) out = hflip(out);
  if (cfg.vflip && rng.coin()) out = vflip(out);
  if (cfg.rotate && rng.coin()) {
    const auto k = rng.uniform_int(1, 3);
    for (long i = 0; i < k; ++i) out = rot90(out);
  }
  if (cfg.shift && rng.coin()) {
    const auto dx = static_cast<int>(rng.uniform_int(-cfg.shift_range, cfg.shift_range));
    const auto dy = static_cast<int>(rng.uniform_int(-cfg.shift_range, cfg.shift_range));
    out = shift(out, dx, dy);
  }
  if (cfg.shear && rng.coin()) out = shear(out, rng.uniform(-cfg.shear_range, cfg.shear_range));
  if (cfg.elastic && rng.coin()) out = elastic_deform(out, cfg.elastic_grid, cfg.elastic_alpha, rng);
  return out;
}

Sample tile_grid(const Sample& s, std::size_t k, bool flips, Rng& rng,
                 std::optional<std::pair<std::size_t, std::size_t>> out_size) {
  require_image(s.image, "tile_grid");
  if (k < 1) throw ValueError("tile_grid: k must be at least 1");
  const std::size_t h = s.height(), w = s.width();
  const std::size_t th = k * h, tw = k * w;
  std::size_t fy = 1, fx = 1;
  if (out_size) {
    const auto [oh, ow] = *out_size;
    if (oh == 0 || ow == 0 || th % oh != 0 || tw % ow != 0) {
      throw ValueError("tile_grid: output size " + std::to_string(oh) + "x" + std::to_string(ow) +
                       " does not evenly divide the tiled size " + std::to_string(th) + "x" +
                       std::to_string(tw));
    }
    fy = th / oh;
    fx = tw / ow;
  }
  Tensor tiled({1, th, tw});
  Dots dots;
  dots.reserve(s.dots.size() * k * k);
  for (std::size_t ti = 0; ti < k; ++ti) {
    for (std::size_t tj = 0; tj < k; ++tj) {
      const bool fh = flips && rng.coin();
      const bool fv = flips && rng.coin();
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const std::size_t sy = fv ? h - 1 - y : y, sx = fh ? w - 1 - x : x;
          tiled[(ti * h + y) * tw + tj * w + x] = s.image[sy * w + sx];
        }
      for (const Dot& d : s.dots) {
        Dot local = clamp_dot({fh ? static_cast<double>(w) - 1 - d.x : d.x,
                               fv ? static_cast<double>(h) - 1 - d.y : d.y},
                              h, w);
        dots.push_back({local.x + static_cast<double>(tj * w), local.y + static_cast<double>(ti * h)});
      }
    }
  }
  Sample out = with_image(s, std::move(tiled));
  out.log.push_back("tile(k=" + std::to_string(k) + ",flips=" + (flips ? "1" : "0") + ")");
  if (fy == 1 && fx == 1) {
    out.dots = std::move(dots);
    return out;
  }
  const std::size_t oh = th / fy, ow = tw / fx;
  Tensor pooled({1, oh, ow});
  const double inv = 1.0 / static_cast<double>(fx * fy);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < fy; ++i)
        for (std::size_t j = 0; j < fx; ++j) acc += out.image[(y * fy + i) * tw + x * fx + j];
      pooled[y * ow + x] = static_cast<float>(acc * inv);
    }
  out.image = std::move(pooled);
  for (const Dot& d : dots) {
    out.dots.push_back(clamp_dot({(d.x + 0.5) / static_cast<double>(fx) - 0.5,
                                  (d.y + 0.5) / static_cast<double>(fy) - 0.5},
                                 oh, ow));
  }
  out.log.push_back("pool(" + std::to_string(fx) + "x" + std::to_string(fy) + ")");
  return out;
}

Tensor stack_images(const std::vector<Sample>& samples, std::size_t first, std::size_t count) {
  if (count == 0 || first + count > samples.size()) {
    throw ValueError("stack_images: range out of bounds");
  }
  const std::size_t h = samples[first].height(), w = samples[first].width();
  Tensor out({count, 1, h, w});
  for (std::size_t i = 0; i < count; ++i) {
    const Tensor& img = samples[first + i].image;
    if (img.shape() != Shape{1, h, w}) {
      throw DimensionError("stack_images: sample " + samples[first + i].source + " is " +
                           shape_str(img.shape()) + ", expected " + shape_str({1, h, w}));
    }
    std::copy(img.storage().begin(), img.storage().end(), out.storage().begin() + static_cast<long>(i * h * w));
  }
  return out;
}

}  // namespace nalu::data
