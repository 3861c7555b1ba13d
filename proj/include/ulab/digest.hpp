#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace ulab {

// FNV-1a, 64-bit.
class Fnv1a {
 public:
  void update(std::string_view bytes) {
    for (unsigned char c : bytes) {
      h_ ^= c;
      h_ *= 0x100000001b3ULL;
    }
  }

  void update(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h_ ^= (v >> (8 * i)) & 0xffU;
      h_ *= 0x100000001b3ULL;
    }
  }

  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t digest_ids(std::span<const std::size_t> ids) {
  Fnv1a h;
  for (auto id : ids) h.update(static_cast<std::uint64_t>(id));
  return h.value();
}

}  // namespace ulab
