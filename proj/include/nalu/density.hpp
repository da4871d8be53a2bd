#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "nalu/tensor.hpp"

// Dot annotations, Gaussian density targets and count metrics.
//
// Coordinates are in pixels with the origin at the top-left pixel's centre:
// pixel (col, row) covers [col - 0.5, col + 0.5) x [row - 0.5, row + 0.5).
namespace nalu::density {

struct Dot {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Dot&, const Dot&) = default;
};

using Dots = std::vector<Dot>;

inline constexpr double kDefaultSigma = 2.0;
// Kernels are truncated to a disc of this many sigmas.
inline constexpr double kTruncation = 4.0;

struct DensityMap {
  Tensor map;  // [H, W], nonnegative
  double sigma = kDefaultSigma;
};

// True when the dot's whole truncated kernel lies inside an HxW image, so its
// full unit mass lands in the map.
bool is_interior(const Dot& d, std::size_t h, std::size_t w, double sigma);

// Sum of unit-mass Gaussians, one per dot. Each kernel is normalized over its
// full truncation disc and then clipped at the border without renormalizing.
DensityMap render_density(const Dots& dots, std::size_t h, std::size_t w,
                          double sigma = kDefaultSigma);

// Sum over pixels of a [H,W] (or any-shaped) density tensor.
double count_from_density(const Tensor& d);
inline double count_from_density(const DensityMap& d) { return count_from_density(d.map); }

double mae(std::span<const double> pred, std::span<const double> truth);
// Relative improvement of m_i over the reference m_r, in percent.
double rip(double m_r, double m_i);

// CSV with header "x,y", one dot per row.
Dots read_dots_csv(const std::filesystem::path& path);
void write_dots_csv(const std::filesystem::path& path, const Dots& dots);

}  // namespace nalu::density
