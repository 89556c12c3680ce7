#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace vsseg {

/// Named-stream seed splitter. Every consumer derives its own generator
/// from (root seed, stream name), so the draw count of one stage never
/// shifts the randomness seen by another.
class SeedBank {
 public:
  explicit SeedBank(std::uint64_t root) : root_(root) {}

  std::uint64_t root() const { return root_; }
  std::uint64_t derive(std::string_view name) const;
  std::mt19937_64 stream(std::string_view name) const { return std::mt19937_64(derive(name)); }

 private:
  std::uint64_t root_;
};

double draw_uniform(std::mt19937_64& g, double lo, double hi);
double draw_normal(std::mt19937_64& g, double mean, double stddev);
int draw_int(std::mt19937_64& g, int lo, int hi);  // inclusive bounds

}  // namespace vsseg
