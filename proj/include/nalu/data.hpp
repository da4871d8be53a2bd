#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nalu/density.hpp"
#include "nalu/rng.hpp"
#include "nalu/tensor.hpp"

// Cell-image samples: synthetic generation, on-disk datasets, augmentation and
// high-count tiling.
namespace nalu::data {

struct Sample {
  Tensor image;  // [1, H, W], values in [0, 1]
  density::Dots dots;
  std::string source;
  std::vector<std::string> log;  // applied transforms, oldest first

  std::size_t height() const { return image.dim(1); }
  std::size_t width() const { return image.dim(2); }
};

// Throws ValueError unless the image is [1,H,W], finite, and every dot lies in
// [0,W) x [0,H).
void check_sample(const Sample& s);

struct CountRange {
  int lo = 10;
  int hi = 30;
};

inline constexpr double kBlobRadiusMin = 3.0;
inline constexpr double kBlobRadiusMax = 6.0;
inline constexpr double kSensorNoise = 0.02;

// Each sample: count ~ U{lo..hi}, centres uniform over the image, one
// anisotropic Gaussian blob per centre, additive sensor noise, clamp to
// [0, 1]. Sample i draws from streams split off a base seed taken from rng,
// with blobs and noise on separate streams.
std::vector<Sample> gen_synthetic_cells(std::size_t n, std::size_t h, std::size_t w,
                                        CountRange counts, Rng& rng);

enum class AnnotationKind { Dots, Masks };

AnnotationKind parse_annotation_kind(const std::string& name);

// Mask -> dots: threshold 0.5, erode with a 3x3 cross once (out-of-image
// neighbours count as background), centroids of 8-connected components.
density::Dots mask_to_dots(const Tensor& mask);

// Reads images/NAME.png with dots/NAME.csv or masks/NAME.png. Samples come
// back sorted by NAME.
std::vector<Sample> ingest_dataset(const std::filesystem::path& dir, AnnotationKind kind);

struct Split {
  std::vector<Sample> train;
  std::vector<Sample> test;
};

// Uses dir/manifest.csv (header "name,split", split = train|test) when present,
// otherwise a seeded shuffle with round(train_fraction * n) training samples.
Split split_dataset(std::vector<Sample> samples, const std::filesystem::path& dir,
                    double train_fraction, Rng& rng);
Split split_samples(std::vector<Sample> samples, double train_fraction, Rng& rng);

// Writes images/NAME.png (16-bit), dots/NAME.csv and, when splits are given,
// manifest.csv. NAME is the sample's source.
void write_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples,
                   const std::vector<std::string>* splits = nullptr);

struct AugmentConfig {
  bool hflip = true;
  bool vflip = true;
  bool rotate = true;
  bool shift = true;
  bool shear = true;
  bool elastic = true;
  int shift_range = 8;        // px, shift ~ U{-range..range} per axis
  double shear_range = 0.2;   // radians, angle ~ U(-range, range)
  std::size_t elastic_grid = 3;
  double elastic_alpha = 10;  // px, displacement stddev per grid node and axis

  static AugmentConfig none();
  void validate() const;
};

// Coarse grid of N(0, alpha^2) displacements, bilinearly upsampled to a dense
// field d. out(p) = in(p + d(p)) with clamp-to-edge bilinear sampling; a dot q
// moves to q - d(round(q)), clamped into the image.
Sample elastic_deform(const Sample& s, std::size_t grid, double alpha, Rng& rng);

Sample hflip(const Sample& s);
Sample vflip(const Sample& s);
// Rotation by 90 degrees: (x, y) -> (H-1-y, x); the result is W x H.
Sample rot90(const Sample& s);
// Integer translation with zero fill; dots leaving [0,W) x [0,H) are dropped
// and the number dropped is logged.
Sample shift(const Sample& s, int dx, int dy);
// x' = x + tan(theta) * (y - cy) about the image centre, clamp-to-edge
// bilinear resampling; dots are clamped into the image.
Sample shear(const Sample& s, double theta);

// Each enabled transform fires on its own fair coin, in the order hflip,
// vflip, rotate (k in {1,2,3} quarter turns), shift, shear, elastic.
Sample augment(const Sample& s, const AugmentConfig& cfg, Rng& rng);

// k x k copies of s, each flipped independently on both axes when flips is
// set. With out_size (H', W'), the tiled image is average-pooled by integer
// factors and dots are mapped to the pooled pixel grid.
Sample tile_grid(const Sample& s, std::size_t k, bool flips, Rng& rng,
                 std::optional<std::pair<std::size_t, std::size_t>> out_size = std::nullopt);

// Samples as a batch [N,1,H,W]; all samples must share H and W.
Tensor stack_images(const std::vector<Sample>& samples, std::size_t first, std::size_t count);

}  // namespace nalu::data
