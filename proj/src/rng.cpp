#include "fldd/rng.hpp"

#include <sstream>
#include <stdexcept>

namespace fldd {

Rng::Rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x464c4444u};
  engine_.seed(seq);
}

std::vector<std::uint64_t> Rng::state() const {
  std::ostringstream os;
  os << engine_;
  std::istringstream is(os.str());
  std::vector<std::uint64_t> words;
  std::uint64_t w = 0;
  while (is >> w) words.push_back(w);
  return words;
}

void Rng::set_state(const std::vector<std::uint64_t>& words) {
  std::ostringstream os;
  for (std::size_t i = 0; i < words.size(); ++i) os << (i ? " " : "") << words[i];
  std::istringstream is(os.str());
  is >> engine_;
  if (is.fail()) throw std::runtime_error("Rng: malformed engine state");
  normal_.reset();
}

}  // namespace fldd
