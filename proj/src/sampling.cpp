#include "fedrr/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "fedrr/errors.hpp"

namespace fedrr {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

}  // namespace

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

RngStream::result_type RngStream::operator()() {
  ++counter_;
  return mix64(key_ + counter_ * kGolden);
}

std::uint64_t RngStream::uniform_below(std::uint64_t bound) {
  if (bound == 0) throw InputError("uniform_below: bound must be positive");
  // Lemire's multiply-shift with rejection of the biased low region.
  std::uint64_t x = (*this)();
  __uint128_t m = static_cast<__uint128_t>(x) * bound;
  auto low = static_cast<std::uint64_t>(m);
  if (low < bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    while (low < threshold) {
      x = (*this)();
      m = static_cast<__uint128_t>(x) * bound;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

double RngStream::uniform01() {
  return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
  if (spare_normal_) {
    const double v = *spare_normal_;
    spare_normal_.reset();
    return v;
  }
  double u1 = 0.0;
  do {
    u1 = uniform01();
  } while (u1 == 0.0);
  const double u2 = uniform01();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_normal_ = radius * std::sin(angle);
  return radius * std::cos(angle);
}

RngStream derive_stream(std::uint64_t master_seed, std::int64_t round,
                        std::optional<std::int64_t> client,
                        StreamPurpose purpose) {
  if (round < 0) throw InputError("derive_stream: round must be >= 0");
  const std::uint64_t client_code =
      client ? static_cast<std::uint64_t>(*client) : ~std::uint64_t{0};
  std::uint64_t h = mix64(master_seed ^ 0x243f6a8885a308d3ULL);
  h = mix64(h ^ (static_cast<std::uint64_t>(round) + 0x13198a2e03707344ULL));
  h = mix64(h ^ (client_code + 0xa4093822299f31d0ULL));
  h = mix64(h ^ (static_cast<std::uint64_t>(purpose) + 0x082efa98ec4e6c89ULL));
  return RngStream(h);
}

bool Permutation::is_valid() const {
  std::vector<char> seen(order.size(), 0);
  for (int v : order) {
    if (v < 0 || static_cast<std::size_t>(v) >= order.size() || seen[v]) {
      return false;
    }
    seen[v] = 1;
  }
  return true;
}

Permutation sample_permutation(int n, RngStream& rng) {
  if (n <= 0) throw InputError("sample_permutation: n must be >= 1");
  Permutation p;
  p.order.resize(n);
  std::iota(p.order.begin(), p.order.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng.uniform_below(i + 1));
    std::swap(p.order[i], p.order[j]);
  }
  return p;
}

CohortSample sample_cohort(int M, int C, RngStream& rng) {
  if (M < 1 || C < 1 || C > M) {
    throw InputError("sample_cohort: need 1 <= C <= M, got C=" +
                     std::to_string(C) + " M=" + std::to_string(M));
  }
  std::vector<int> pool(M);
  std::iota(pool.begin(), pool.end(), 0);
  for (int i = 0; i < C; ++i) {
    const auto j = i + static_cast<int>(rng.uniform_below(M - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(C);
  std::sort(pool.begin(), pool.end());
  return CohortSample{std::move(pool)};
}

Permutation client_permutation(std::uint64_t seed, ShuffleMode mode,
                               std::int64_t round, int client, int n) {
  const std::int64_t stream_round =
      mode == ShuffleMode::ShuffleOnce ? 0 : round;
  RngStream rng =
      derive_stream(seed, stream_round, client, StreamPurpose::Permutation);
  return sample_permutation(n, rng);
}

double swr_formula(double sigma_sq, int n, int k) {
  if (n < 1 || k < 1 || k > n) {
    throw InputError("swr_formula: need 1 <= k <= n, got k=" +
                     std::to_string(k) + " n=" + std::to_string(n));
  }
  if (n == 1) return 0.0;
  return static_cast<double>(n - k) / (static_cast<double>(k) * (n - 1)) *
         sigma_sq;
}

double population_variance(std::span<const Vector> xs) {
  if (xs.empty()) throw InputError("population_variance: empty population");
  Vector mean = Vector::Zero(xs.front().size());
  for (const auto& x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double acc = 0.0;
  for (const auto& x : xs) acc += (x - mean).squaredNorm();
  return acc / static_cast<double>(xs.size());
}

SwrMoments swr_moments_oracle(std::span<const Vector> xs, int k) {
  const int n = static_cast<int>(xs.size());
  if (n > kSwrEnumerationLimit) {
    throw ResourceError("swr_moments_oracle: n=" + std::to_string(n) +
                        " exceeds enumeration limit " +
                        std::to_string(kSwrEnumerationLimit));
  }
  if (n < 1 || k < 1 || k > n) {
    throw InputError("swr_moments_oracle: need 1 <= k <= n");
  }
  const auto d = xs.front().size();
  Vector population_mean = Vector::Zero(d);
  for (const auto& x : xs) population_mean += x;
  population_mean /= static_cast<double>(n);

  SwrMoments out;
  out.mean = Vector::Zero(d);
  // Lexicographic walk over k-combinations of {0..n-1}.
  std::vector<int> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  Vector subset_mean(d);
  while (true) {
    subset_mean.setZero();
    for (int i : idx) subset_mean += xs[i];
    subset_mean /= static_cast<double>(k);
    out.mean += subset_mean;
    out.variance += (subset_mean - population_mean).squaredNorm();
    ++out.subsets;

    int pos = k - 1;
    while (pos >= 0 && idx[pos] == n - k + pos) --pos;
    if (pos < 0) break;
    ++idx[pos];
    for (int j = pos + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
  const auto count = static_cast<double>(out.subsets);
  out.mean /= count;
  out.variance /= count;
  return out;
}

}  // namespace fedrr
