#include "nalu/density.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "nalu/error.hpp"

namespace nalu::density {

bool is_interior(const Dot& d, std::size_t h, std::size_t w, double sigma) {
  const double r = kTruncation * sigma;
  return d.x - r >= 0.0 && d.y - r >= 0.0 && d.x + r <= static_cast<double>(w) - 1.0 &&
         d.y + r <= static_cast<double>(h) - 1.0;
}

DensityMap render_density(const Dots& dots, std::size_t h, std::size_t w, double sigma) {
  if (!(sigma > 0.0)) throw ValueError("render_density: sigma must be positive");
  const double r = kTruncation * sigma;
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  DensityMap out{Tensor({h, w}), sigma};
  std::vector<double> acc(h * w, 0.0);
  std::vector<double> kernel;
  for (const Dot& d : dots) {
    if (!(d.x >= 0.0 && d.y >= 0.0 && d.x < static_cast<double>(w) &&
          d.y < static_cast<double>(h))) {
      std::ostringstream msg;
      msg << "render_density: dot (" << d.x << ", " << d.y << ") outside " << w << "x" << h
          << " image";
      throw ValueError(msg.str());
    }
    // The disc is enumerated over an unclipped pixel window so the normalizer
    // does not depend on where the image border falls.
    const long x0 = static_cast<long>(std::ceil(d.x - r));
    const long x1 = static_cast<long>(std::floor(d.x + r));
    const long y0 = static_cast<long>(std::ceil(d.y - r));
    const long y1 = static_cast<long>(std::floor(d.y + r));
    const std::size_t kw = static_cast<std::size_t>(x1 - x0 + 1);
    kernel.assign(static_cast<std::size_t>(y1 - y0 + 1) * kw, 0.0);
    double mass = 0.0;
    for (long py = y0; py <= y1; ++py) {
      for (long px = x0; px <= x1; ++px) {
        const double dx = static_cast<double>(px) - d.x;
        const double dy = static_cast<double>(py) - d.y;
        const double d2 = dx * dx + dy * dy;
        if (d2 > r * r) continue;
        const double v = std::exp(-d2 * inv2s2);
        kernel[static_cast<std::size_t>(py - y0) * kw + static_cast<std::size_t>(px - x0)] = v;
        mass += v;
      }
    }
    for (long py = std::max(y0, 0L); py <= std::min(y1, static_cast<long>(h) - 1); ++py) {
      for (long px = std::max(x0, 0L); px <= std::min(x1, static_cast<long>(w) - 1); ++px) {
        acc[static_cast<std::size_t>(py) * w + static_cast<std::size_t>(px)] +=
            kernel[static_cast<std::size_t>(py - y0) * kw + static_cast<std::size_t>(px - x0)] /
            mass;
      }
    }
  }
  for (std::size_t i = 0; i < acc.size(); ++i) out.map[i] = static_cast<float>(acc[i]);
  return out;
}

double count_from_density(const Tensor& d) { return d.sum(); }

double mae(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) {
    throw DimensionError("mae: " + std::to_string(pred.size()) + " predictions vs " +
                         std::to_string(truth.size()) + " targets");
  }
  if (pred.empty()) throw ValueError("mae: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::fabs(pred[i] - truth[i]);
  return s / static_cast<double>(pred.size());
}

double rip(double m_r, double m_i) {
  if (!(m_r > 0.0)) throw ValueError("rip: reference MAE must be positive");
  return (m_r - m_i) / m_r * 100.0;
}

Dots read_dots_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dots file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + ": missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "x,y") throw IoError(path.string() + ": expected header 'x,y', got '" + line + "'");
  Dots dots;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    Dot d;
    try {
      if (comma == std::string::npos) throw std::invalid_argument("no comma");
      std::size_t used = 0;
      d.x = std::stod(line.substr(0, comma), &used);
      d.y = std::stod(line.substr(comma + 1), &used);
    } catch (const std::exception&) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": malformed row '" + line +
                    "'");
    }
    dots.push_back(d);
  }
  return dots;
}

void write_dots_csv(const std::filesystem::path& path, const Dots& dots) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dots file " + path.string());
  out << "x,y\n";
  out.precision(17);
  for (const Dot& d : dots) out << d.x << ',' << d.y << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace nalu::density
