#include "fldd/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "fldd/io.hpp"

namespace fldd {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

CheckpointVersionError::CheckpointVersionError(std::uint32_t found)
    : CheckpointError("checkpoint version " + std::to_string(found) + " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")"),
      found_(found) {}

void Checkpoint::put(const std::string& name, nd::Array value) {
  for (auto& [n, v] : entries_) {
    if (n == name) {
      v = std::move(value);
      return;
    }
  }
  entries_.emplace_back(name, std::move(value));
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& [n, v] : entries_)
    if (n == name) return true;
  return false;
}

const nd::Array& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, v] : entries_)
    if (n == name) return v;
  throw CheckpointError("checkpoint: missing entry '" + name + "'");
}

void Checkpoint::put_text(const std::string& name, const std::string& text) {
  std::vector<double> v(text.begin(), text.end());
  for (std::size_t i = 0; i < text.size(); ++i) v[i] = static_cast<unsigned char>(text[i]);
  put(name, nd::Array({text.size()}, std::move(v)));
}

std::string Checkpoint::get_text(const std::string& name) const {
  const auto& a = get(name);
  std::string out(a.size(), '\0');
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = static_cast<char>(static_cast<unsigned char>(a[i]));
  return out;
}

void Checkpoint::put_words(const std::string& name, const std::vector<std::uint64_t>& words) {
  std::vector<double> v;
  v.reserve(2 * words.size());
  for (auto w : words) {
    v.push_back(static_cast<double>(w >> 32));
    v.push_back(static_cast<double>(w & 0xffffffffu));
  }
  put(name, nd::Array({words.size(), 2}, std::move(v)));
}

std::vector<std::uint64_t> Checkpoint::get_words(const std::string& name) const {
  const auto& a = get(name);
  std::vector<std::uint64_t> out(a.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (static_cast<std::uint64_t>(a[2 * i]) << 32) | static_cast<std::uint64_t>(a[2 * i + 1]);
  }
  return out;
}

namespace {

template <class T>
void put_raw(std::vector<std::uint8_t>& b, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  b.insert(b.end(), p, p + sizeof(T));
}

struct Reader {
  const std::vector<std::uint8_t>& b;
  std::size_t pos = 0;

  template <class T>
  T take() {
    if (pos + sizeof(T) > b.size()) throw CheckpointError("checkpoint: truncated at byte " + std::to_string(pos));
    T v;
    std::memcpy(&v, b.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
};

}  // namespace

std::vector<std::uint8_t> Checkpoint::serialize() const {
  std::vector<std::uint8_t> b = {'F', 'L', 'D', 'D'};
  put_raw(b, kCheckpointVersion);
  put_raw(b, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& [name, a] : entries_) {
    put_raw(b, static_cast<std::uint32_t>(name.size()));
    b.insert(b.end(), name.begin(), name.end());
    put_raw(b, static_cast<std::uint32_t>(a.rank()));
    for (auto d : a.shape()) put_raw(b, static_cast<std::uint64_t>(d));
    for (double v : a.vec()) put_raw(b, v);
  }
  return b;
}

Checkpoint Checkpoint::deserialize(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "FLDD", 4) != 0) {
    throw CheckpointError("checkpoint: bad magic (not an FLDD checkpoint)");
  }
  Reader r{bytes, 4};
  const auto version = r.take<std::uint32_t>();
  if (version != kCheckpointVersion) throw CheckpointVersionError(version);
  const auto count = r.take<std::uint32_t>();
  Checkpoint ck;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto len = r.take<std::uint32_t>();
    if (r.pos + len > bytes.size()) throw CheckpointError("checkpoint: truncated name");
    std::string name(bytes.begin() + static_cast<std::ptrdiff_t>(r.pos),
                     bytes.begin() + static_cast<std::ptrdiff_t>(r.pos + len));
    r.pos += len;
    const auto rank = r.take<std::uint32_t>();
    nd::Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = static_cast<std::size_t>(r.take<std::uint64_t>());
      n *= d;
    }
    if (r.pos + n * 8 > bytes.size()) throw CheckpointError("checkpoint: truncated data for '" + name + "'");
    std::vector<double> data(n);
    for (auto& v : data) v = r.take<double>();
    ck.entries_.emplace_back(std::move(name), nd::Array(std::move(shape), std::move(data)));
  }
  if (r.pos != bytes.size()) throw CheckpointError("checkpoint: trailing bytes");
  return ck;
}

void Checkpoint::save(const std::string& path) const { atomic_write(path, serialize()); }

Checkpoint Checkpoint::load(const std::string& path) { return deserialize(read_bytes(path)); }

}  // namespace fldd
