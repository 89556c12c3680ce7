#include "vsseg/rng.hpp"

namespace vsseg {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

std::uint64_t SeedBank::derive(std::string_view name) const {
  return splitmix64(root_ ^ splitmix64(fnv1a(name)));
}

double draw_uniform(std::mt19937_64& g, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  return d(g);
}

double draw_normal(std::mt19937_64& g, double mean, double stddev) {
  std::normal_distribution<double> d(mean, stddev);
  return d(g);
}

int draw_int(std::mt19937_64& g, int lo, int hi) {
  std::uniform_int_distribution<int> d(lo, hi);
  return d(g);
}

}  // namespace vsseg
