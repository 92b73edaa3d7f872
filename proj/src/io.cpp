#include "fldd/io.hpp"

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>

namespace fldd {

void atomic_write(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void atomic_write(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  atomic_write(path, std::string(bytes.begin(), bytes.end()));
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string samples_csv(const std::vector<DataPoint>& points, std::size_t d) {
  std::string out;
  for (std::size_t i = 0; i < d; ++i) out += (i ? ",x" : "x") + std::to_string(i + 1);
  out += '\n';
  for (const auto& x : points) {
    if (x.size() != d) throw std::invalid_argument("samples_csv: point of wrong dimension");
    for (std::size_t i = 0; i < d; ++i) {
      if (i) out += ',';
      out += std::to_string(x[i] + 1);
    }
    out += '\n';
  }
  return out;
}

std::vector<DataPoint> parse_samples_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("samples.csv: missing header");
  std::vector<DataPoint> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    DataPoint x;
    std::istringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) {
      const long v = std::stol(cell);
      if (v < 1) throw std::runtime_error("samples.csv: category below 1");
      x.push_back(static_cast<std::size_t>(v - 1));
    }
    out.push_back(std::move(x));
  }
  return out;
}

std::string pgm(std::size_t width, std::size_t height, const std::vector<std::uint8_t>& pixels) {
  if (pixels.size() != width * height) throw std::invalid_argument("pgm: pixel count does not match size");
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  out.append(pixels.begin(), pixels.end());
  return out;
}

std::string pgm_grid(const std::vector<DataPoint>& images, std::size_t side,
                     const std::vector<std::uint8_t>& palette, std::size_t columns) {
  if (images.empty() || columns == 0) throw std::invalid_argument("pgm_grid: nothing to tile");
  const std::size_t n = images.size();
  const std::size_t cols = std::min(columns, n), rows = (n + cols - 1) / cols;
  const std::size_t width = cols * (side + 1) - 1, height = rows * (side + 1) - 1;
  std::vector<std::uint8_t> pixels(width * height, 128);
  for (std::size_t m = 0; m < n; ++m) {
    if (images[m].size() != side * side) throw std::invalid_argument("pgm_grid: image is not side x side");
    const std::size_t r0 = (m / cols) * (side + 1), c0 = (m % cols) * (side + 1);
    for (std::size_t r = 0; r < side; ++r)
      for (std::size_t c = 0; c < side; ++c) {
        pixels[(r0 + r) * width + c0 + c] = palette.at(images[m][r * side + c]);
      }
  }
  return pgm(width, height, pixels);
}

}  // namespace fldd
