#pragma once

// Little-endian binary container: "FLDD", u32 version, u32 entry count, then
// per entry u32 name length, name bytes, u32 rank, u64 dims, f64 values.

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fldd/ndgrad.hpp"

namespace fldd {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointVersionError : public CheckpointError {
 public:
  explicit CheckpointVersionError(std::uint32_t found);
  std::uint32_t found() const { return found_; }

 private:
  std::uint32_t found_;
};

class Checkpoint {
 public:
  void put(const std::string& name, nd::Array value);
  bool has(const std::string& name) const;
  const nd::Array& get(const std::string& name) const;
  const std::vector<std::pair<std::string, nd::Array>>& entries() const { return entries_; }

  void put_text(const std::string& name, const std::string& text);
  std::string get_text(const std::string& name) const;
  /// u64 words stored as pairs of exact 32-bit halves.
  void put_words(const std::string& name, const std::vector<std::uint64_t>& words);
  std::vector<std::uint64_t> get_words(const std::string& name) const;

  std::vector<std::uint8_t> serialize() const;
  static Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

 private:
  std::vector<std::pair<std::string, nd::Array>> entries_;
};

}  // namespace fldd
