#pragma once

// Joint-state enumeration over {0..K-1}^D, coordinate 0 most significant.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace fldd {

/// Default cap on K^D for any exact enumeration.
inline constexpr std::size_t kEnumerationCap = 10000;

class EnumerationTooLarge : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// K^D, or throws EnumerationTooLarge when it exceeds cap.
inline std::size_t joint_state_count(std::size_t k, std::size_t d, std::size_t cap = kEnumerationCap) {
  std::size_t n = 1;
  for (std::size_t i = 0; i < d; ++i) {
    if (n > cap / k) {
      throw EnumerationTooLarge("joint state space " + std::to_string(k) + "^" + std::to_string(d) +
                                " exceeds the enumeration cap of " + std::to_string(cap) +
                                "; use an oracle-scale instance");
    }
    n *= k;
  }
  if (n > cap) {
    throw EnumerationTooLarge("joint state space " + std::to_string(n) + " exceeds the enumeration cap of " +
                              std::to_string(cap));
  }
  return n;
}

inline bool enumerable(std::size_t k, std::size_t d, std::size_t cap = kEnumerationCap) {
  try {
    joint_state_count(k, d, cap);
    return true;
  } catch (const EnumerationTooLarge&) {
    return false;
  }
}

inline std::vector<std::size_t> decode_state(std::size_t index, std::size_t k, std::size_t d) {
  std::vector<std::size_t> z(d);
  for (std::size_t i = d; i-- > 0;) {
    z[i] = index % k;
    index /= k;
  }
  return z;
}

template <class Seq>
std::size_t encode_state(const Seq& z, std::size_t k) {
  std::size_t index = 0;
  for (auto v : z) index = index * k + v;
  return index;
}

}  // namespace fldd
