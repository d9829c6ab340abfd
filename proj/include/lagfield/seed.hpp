#ifndef LAGFIELD_SEED_HPP
#define LAGFIELD_SEED_HPP

#include <cstdint>
#include <string_view>

namespace lagfield {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Independent sub-seed for a labelled stream ("data", "init", "shuffle", "noise", ...).
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view label, std::uint64_t index = 0) {
  return splitmix64(splitmix64(master ^ fnv1a(label)) + index);
}

}  // namespace lagfield

#endif  // LAGFIELD_SEED_HPP
