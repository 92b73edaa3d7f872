#include "fldd/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>

namespace fldd {

Dataset::Dataset(std::size_t k, std::size_t d, std::vector<DataPoint> points, std::vector<double> weights, bool exact)
    : k_(k), d_(d), points_(std::move(points)), weights_(std::move(weights)), exact_(exact) {
  if (points_.empty()) throw std::invalid_argument("Dataset: no points");
  if (weights_.size() != points_.size()) throw std::invalid_argument("Dataset: weights do not match points");
  for (const auto& x : points_) {
    if (x.size() != d_) throw std::invalid_argument("Dataset: point of dimension " + std::to_string(x.size()));
    for (auto v : x)
      if (v >= k_) throw std::invalid_argument("Dataset: category out of range");
  }
  const double total = std::accumulate(weights_.begin(), weights_.end(), 0.0);
  if (!(total > 0.0)) throw std::invalid_argument("Dataset: weights have no mass");
  double run = 0.0;
  cumulative_.reserve(weights_.size());
  for (double& w : weights_) {
    if (w < 0.0) throw std::invalid_argument("Dataset: negative weight");
    w /= total;
    cumulative_.push_back(run += w);
  }
}

const DataPoint& Dataset::sample(Rng& rng) const {
  const double u = rng.uniform() * cumulative_.back();
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  if (it == cumulative_.end()) --it;
  return points_[static_cast<std::size_t>(it - cumulative_.begin())];
}

std::vector<std::size_t> Dataset::sample_flat(std::size_t n, Rng& rng) const {
  std::vector<std::size_t> out;
  out.reserve(n * d_);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& x = sample(rng);
    out.insert(out.end(), x.begin(), x.end());
  }
  return out;
}

Dataset Dataset::with_mask_category() const { return Dataset(k_ + 1, d_, points_, weights_, exact_); }

EnumeratedLaw Dataset::law(std::size_t cap) const {
  std::vector<double> table(joint_state_count(k_, d_, cap), 0.0);
  for (std::size_t n = 0; n < points_.size(); ++n) table[encode_state(points_[n], k_)] += weights_[n];
  const double total = std::accumulate(table.begin(), table.end(), 0.0);
  for (double& v : table) v /= total;
  return EnumeratedLaw(k_, d_, std::move(table), cap);
}

Dataset gmm_grid_law(const GmmSpec& spec) {
  if (spec.grid < 2) throw std::invalid_argument("gmm_grid_law: grid must be at least 2");
  if (!(spec.weight1 >= 0.0 && spec.weight1 <= 1.0)) throw std::invalid_argument("gmm_grid_law: weight outside [0, 1]");
  if (!(spec.sigma > 0.0)) throw std::invalid_argument("gmm_grid_law: sigma must be positive");
  const std::size_t g = spec.grid;
  auto density = [&](const std::array<double, 2>& mu, double a, double b) {
    const double da = a - mu[0], db = b - mu[1];
    return std::exp(-(da * da + db * db) / (2.0 * spec.sigma * spec.sigma));
  };
  std::vector<DataPoint> points;
  std::vector<double> weights;
  for (std::size_t i = 0; i < g; ++i) {
    for (std::size_t j = 0; j < g; ++j) {
      const double a = static_cast<double>(i + 1), b = static_cast<double>(j + 1);
      points.push_back({i, j});
      // Both components share sigma, so the Gaussian normalizer cancels.
      weights.push_back(spec.weight1 * density(spec.mean1, a, b) + (1.0 - spec.weight1) * density(spec.mean2, a, b));
    }
  }
  return Dataset(g, 2, std::move(points), std::move(weights), true);
}

std::size_t random_walk_categories(std::size_t d) {
  if (d < 2) throw std::invalid_argument("random walk: need D >= 2");
  return 2 * (d - 1) + 1;
}

DataPoint random_walk_sample(std::size_t d, Rng& rng) {
  random_walk_categories(d);
  DataPoint x(d);
  x[0] = d - 1;
  for (std::size_t i = 1; i < d; ++i) x[i] = (rng() >> 63) ? x[i - 1] + 1 : x[i - 1] - 1;
  return x;
}

bool random_walk_valid(const DataPoint& x) {
  if (x.size() < 2 || x[0] != x.size() - 1) return false;
  for (std::size_t i = 1; i < x.size(); ++i) {
    const auto diff = static_cast<long long>(x[i]) - static_cast<long long>(x[i - 1]);
    if (diff != 1 && diff != -1) return false;
  }
  return true;
}

Dataset random_walk_law(std::size_t d) {
  const std::size_t k = random_walk_categories(d);
  if (d > 24) throw std::invalid_argument("random_walk_law: too many paths to list");
  std::vector<DataPoint> points;
  const std::size_t paths = std::size_t{1} << (d - 1);
  for (std::size_t bits = 0; bits < paths; ++bits) {
    DataPoint x(d);
    x[0] = d - 1;
    for (std::size_t i = 1; i < d; ++i) x[i] = (bits >> (d - 1 - i)) & 1 ? x[i - 1] + 1 : x[i - 1] - 1;
    points.push_back(std::move(x));
  }
  return Dataset(k, d, std::move(points), std::vector<double>(paths, 1.0), true);
}

ParseError::ParseError(const std::string& what, std::size_t offset)
    : std::runtime_error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_u32(const std::vector<std::uint8_t>& b, std::size_t offset) {
  if (offset + 4 > b.size()) throw ParseError("IDX: truncated header", b.size());
  return (std::uint32_t{b[offset]} << 24) | (std::uint32_t{b[offset + 1]} << 16) |
         (std::uint32_t{b[offset + 2]} << 8) | std::uint32_t{b[offset + 3]};
}

void write_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) b.push_back(static_cast<std::uint8_t>(v >> shift));
}

}  // namespace

IdxImages parse_idx_images(const std::vector<std::uint8_t>& bytes) {
  const std::uint32_t magic = read_u32(bytes, 0);
  if (magic != 0x00000803) throw ParseError("IDX images: bad magic", 0);
  IdxImages out;
  out.count = read_u32(bytes, 4);
  out.rows = read_u32(bytes, 8);
  out.cols = read_u32(bytes, 12);
  if (out.rows == 0) throw ParseError("IDX images: zero rows", 8);
  if (out.cols == 0) throw ParseError("IDX images: zero columns", 12);
  const std::size_t payload = out.count * out.rows * out.cols;
  if (bytes.size() < 16 + payload) throw ParseError("IDX images: truncated payload", bytes.size());
  if (bytes.size() > 16 + payload) throw ParseError("IDX images: trailing bytes", 16 + payload);
  out.pixels.assign(bytes.begin() + 16, bytes.end());
  return out;
}

std::vector<std::uint8_t> parse_idx_labels(const std::vector<std::uint8_t>& bytes) {
  const std::uint32_t magic = read_u32(bytes, 0);
  if (magic != 0x00000801) throw ParseError("IDX labels: bad magic", 0);
  const std::size_t count = read_u32(bytes, 4);
  if (bytes.size() < 8 + count) throw ParseError("IDX labels: truncated payload", bytes.size());
  if (bytes.size() > 8 + count) throw ParseError("IDX labels: trailing bytes", 8 + count);
  return {bytes.begin() + 8, bytes.end()};
}

IdxImages read_idx_images(const std::string& path) { return parse_idx_images(read_file(path)); }
std::vector<std::uint8_t> read_idx_labels(const std::string& path) { return parse_idx_labels(read_file(path)); }

std::vector<std::uint8_t> encode_idx_images(const IdxImages& images) {
  if (images.pixels.size() != images.count * images.rows * images.cols) {
    throw std::invalid_argument("encode_idx_images: pixel count does not match dimensions");
  }
  std::vector<std::uint8_t> b;
  b.reserve(16 + images.pixels.size());
  write_u32(b, 0x00000803);
  write_u32(b, static_cast<std::uint32_t>(images.count));
  write_u32(b, static_cast<std::uint32_t>(images.rows));
  write_u32(b, static_cast<std::uint32_t>(images.cols));
  b.insert(b.end(), images.pixels.begin(), images.pixels.end());
  return b;
}

std::vector<std::uint8_t> encode_idx_labels(const std::vector<std::uint8_t>& labels) {
  std::vector<std::uint8_t> b;
  write_u32(b, 0x00000801);
  write_u32(b, static_cast<std::uint32_t>(labels.size()));
  b.insert(b.end(), labels.begin(), labels.end());
  return b;
}

IdxImages downscale(const IdxImages& images, std::size_t side) {
  if (side == 0 || (side == images.rows && side == images.cols)) return images;
  if (side > images.rows || side > images.cols) throw std::invalid_argument("downscale: side exceeds image size");
  const std::size_t f = std::min(images.rows, images.cols) / side;
  const std::size_t crop = f * side;
  const std::size_t r0 = (images.rows - crop) / 2, c0 = (images.cols - crop) / 2;
  IdxImages out;
  out.count = images.count;
  out.rows = out.cols = side;
  out.pixels.resize(images.count * side * side);
  for (std::size_t n = 0; n < images.count; ++n) {
    const std::uint8_t* src = images.pixels.data() + n * images.rows * images.cols;
    for (std::size_t r = 0; r < side; ++r) {
      for (std::size_t c = 0; c < side; ++c) {
        unsigned total = 0;
        for (std::size_t a = 0; a < f; ++a)
          for (std::size_t b = 0; b < f; ++b) total += src[(r0 + r * f + a) * images.cols + c0 + c * f + b];
        const double mean = static_cast<double>(total) / static_cast<double>(f * f);
        out.pixels[(n * side + r) * side + c] = static_cast<std::uint8_t>(std::lround(mean));
      }
    }
  }
  return out;
}

std::vector<DataPoint> binarize(const IdxImages& images, double threshold) {
  const double cut = threshold * 255.0;
  const std::size_t d = images.rows * images.cols;
  std::vector<DataPoint> out(images.count, DataPoint(d));
  for (std::size_t n = 0; n < images.count; ++n)
    for (std::size_t i = 0; i < d; ++i) out[n][i] = images.pixels[n * d + i] > cut ? 1 : 0;
  return out;
}

Dataset load_idx(const IdxSpec& spec) {
  IdxImages images = read_idx_images(spec.images);
  if (!spec.labels.empty()) {
    const auto labels = read_idx_labels(spec.labels);
    if (labels.size() != images.count) {
      throw std::invalid_argument("load_idx: " + std::to_string(labels.size()) + " labels for " +
                                  std::to_string(images.count) + " images");
    }
  }
  if (spec.limit > 0 && spec.limit < images.count) {
    images.count = spec.limit;
    images.pixels.resize(spec.limit * images.rows * images.cols);
  }
  auto points = binarize(downscale(images, spec.side), spec.threshold);
  const std::size_t d = points.front().size();
  std::vector<double> weights(points.size(), 1.0);
  return Dataset(2, d, std::move(points), std::move(weights), false);
}

double tv_distance(const std::vector<DataPoint>& samples, const Dataset& law) {
  if (samples.empty()) throw std::invalid_argument("tv_distance: no samples");
  std::map<DataPoint, double> diff;
  for (std::size_t n = 0; n < law.size(); ++n) diff[law.points()[n]] += law.weights()[n];
  const double w = 1.0 / static_cast<double>(samples.size());
  for (const auto& x : samples) diff[x] -= w;
  double total = 0.0;
  for (const auto& [x, v] : diff) total += std::abs(v);
  return 0.5 * total;
}

}  // namespace fldd
