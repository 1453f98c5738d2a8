#include "pdmis/random.hpp"

namespace pdmis {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

RandomStream RandomStream::derive(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = mix64(seed);
  for (std::uint64_t t : tags) {
    h = mix64(h ^ mix64(t + 0x632BE59BD9B4E019ull));
  }
  return RandomStream(h);
}

}  // namespace pdmis
