#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fldd/forward_process.hpp"

namespace fldd {

/// Writes to "<path>.tmp" and renames over path.
void atomic_write(const std::string& path, const std::string& bytes);
void atomic_write(const std::string& path, const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> read_bytes(const std::string& path);

/// Header x1..xD and one row per point, categories written 1-based.
std::string samples_csv(const std::vector<DataPoint>& points, std::size_t d);
std::vector<DataPoint> parse_samples_csv(const std::string& text);

/// Binary P5 grayscale image.
std::string pgm(std::size_t width, std::size_t height, const std::vector<std::uint8_t>& pixels);

/// Tiles square images of side x side categories into a grid, `columns`
/// tiles per row with a one-pixel gray gap. palette[k] is the gray level of
/// category k.
std::string pgm_grid(const std::vector<DataPoint>& images, std::size_t side,
                     const std::vector<std::uint8_t>& palette, std::size_t columns);

}  // namespace fldd
