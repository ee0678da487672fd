#include "plrefine/random.hpp"

#include <cmath>
#include <numbers>

#include "plrefine/error.hpp"

namespace plr {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

RandomState RandomState::derive(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
  return RandomState(h);
}

double RandomState::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t RandomState::index(std::size_t n) {
  if (n == 0) throw InvalidArgument("RandomState::index: empty range");
  __extension__ using u128 = unsigned __int128;
  const auto wide = static_cast<u128>(engine_()) * n;
  return static_cast<std::size_t>(wide >> 64);
}

std::uint32_t RandomState::poisson(double mean) {
  if (!(mean >= 0.0 && mean <= 700.0)) throw InvalidArgument("RandomState::poisson: mean must lie in [0, 700]");
  const double u = uniform();
  if (mean == 0.0) return 0;
  const double cap = mean + 20.0 * std::sqrt(mean) + 50.0;
  double p = std::exp(-mean);
  double cdf = p;
  std::uint32_t k = 0;
  while (u >= cdf && k < cap) {
    ++k;
    p *= mean / k;
    cdf += p;
  }
  return k;
}

}  // namespace plr
