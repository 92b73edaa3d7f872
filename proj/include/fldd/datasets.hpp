#pragma once

// Desk-scale data sources. Categories are 0-based in memory.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fldd/forward_process.hpp"
#include "fldd/oracle.hpp"
#include "fldd/rng.hpp"

namespace fldd {

/// Weighted list of points; sampling draws from the weights. When `exact`
/// is set the weights are the true data law, otherwise an empirical one.
class Dataset {
 public:
  Dataset(std::size_t k, std::size_t d, std::vector<DataPoint> points, std::vector<double> weights, bool exact);

  std::size_t categories() const { return k_; }
  std::size_t dims() const { return d_; }
  std::size_t size() const { return points_.size(); }
  bool exact() const { return exact_; }
  const std::vector<DataPoint>& points() const { return points_; }
  const std::vector<double>& weights() const { return weights_; }

  const DataPoint& sample(Rng& rng) const;
  /// n points flattened to n*D categories.
  std::vector<std::size_t> sample_flat(std::size_t n, Rng& rng) const;

  /// Same points with one more (unused) category, for an absorbing mask.
  Dataset with_mask_category() const;

  /// Dense law over {0..K-1}^D; throws EnumerationTooLarge past cap.
  EnumeratedLaw law(std::size_t cap = kEnumerationCap) const;

 private:
  std::size_t k_;
  std::size_t d_;
  std::vector<DataPoint> points_;
  std::vector<double> weights_;
  std::vector<double> cumulative_;
  bool exact_;
};

struct GmmSpec {
  std::size_t grid = 50;
  std::array<double, 2> mean1{15.0, 15.0};  // 1-based grid coordinates
  std::array<double, 2> mean2{35.0, 35.0};
  double weight1 = 0.5;
  double sigma = 1.0;
};

/// Isotropic two-component mixture evaluated at grid cell centers and
/// normalized over the grid. K = grid, D = 2.
Dataset gmm_grid_law(const GmmSpec& spec);

/// Random walk of length D starting at 0 with +-1 steps, stored as categories
/// value + (D - 1), so K = 2(D - 1) + 1.
std::size_t random_walk_categories(std::size_t d);
DataPoint random_walk_sample(std::size_t d, Rng& rng);
bool random_walk_valid(const DataPoint& x);
/// All 2^(D-1) walks with equal weight.
Dataset random_walk_law(std::size_t d);

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset);
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

struct IdxImages {
  std::size_t count = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols
};

IdxImages read_idx_images(const std::string& path);
std::vector<std::uint8_t> read_idx_labels(const std::string& path);
IdxImages parse_idx_images(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> parse_idx_labels(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_idx_images(const IdxImages& images);
std::vector<std::uint8_t> encode_idx_labels(const std::vector<std::uint8_t>& labels);

/// Center-crops to the largest multiple of `side` and average-pools to
/// side x side. side == 0 or side == rows keeps the native size.
IdxImages downscale(const IdxImages& images, std::size_t side);

/// Pixel > threshold * 255 -> category 1, else 0.
std::vector<DataPoint> binarize(const IdxImages& images, double threshold = 0.5);

struct IdxSpec {
  std::string images;
  std::string labels;  // optional
  double threshold = 0.5;
  std::size_t side = 14;
  std::size_t limit = 0;  // 0 keeps every image
};

/// Binarized images, K = 2, uniform empirical weights.
Dataset load_idx(const IdxSpec& spec);

/// Total variation between the empirical law of `samples` and a dataset law.
double tv_distance(const std::vector<DataPoint>& samples, const Dataset& law);

}  // namespace fldd
