#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace fedrr {

using Vector = Eigen::VectorXd;

/// What a derived stream is used for. Streams that differ only in purpose
/// are independent.
enum class StreamPurpose : std::uint64_t {
  Cohort = 1,
  Permutation = 2,
  LocalIndex = 3,  // with-replacement index draws
  Problem = 4,     // synthetic problem generation
  Restart = 5,     // starting points of the descent oracle
  Partition = 6,   // row shuffling of file-loaded datasets
};

/// Counter-based pseudo-random stream (SplitMix64 over a derived key).
///
/// All distributions are implemented here rather than taken from <random>,
/// whose distribution algorithms are implementation-defined; the output of
/// every method is therefore identical across platforms and standard
/// libraries. Satisfies UniformRandomBitGenerator.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t key) : key_(key) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()();

  /// Uniform integer in [0, bound). `bound` must be positive.
  std::uint64_t uniform_below(std::uint64_t bound);
  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01();
  /// Standard normal variate (Box-Muller, one value per call pair cached).
  double normal();

  std::uint64_t key() const { return key_; }
  std::uint64_t position() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::optional<double> spare_normal_;
};

/// The SplitMix64 finalizer; a bijection on 64-bit words.
std::uint64_t mix64(std::uint64_t z);

/// Derives the stream for (seed, round, client, purpose). Pure; distinct
/// tuples give independent streams regardless of the order in which they
/// are consumed. `client` is std::nullopt for server-side draws.
RngStream derive_stream(std::uint64_t master_seed, std::int64_t round,
                        std::optional<std::int64_t> client,
                        StreamPurpose purpose);

/// A bijection on {0, ..., n-1}.
struct Permutation {
  std::vector<int> order;

  std::size_t size() const { return order.size(); }
  bool is_valid() const;
};

/// C distinct client indices, sorted ascending.
struct CohortSample {
  std::vector<int> members;

  std::size_t size() const { return members.size(); }
};

/// Uniform permutation by Fisher-Yates. Throws InputError for n <= 0.
Permutation sample_permutation(int n, RngStream& rng);

/// Uniform C-subset of {0, ..., M-1} by partial Fisher-Yates.
CohortSample sample_cohort(int M, int C, RngStream& rng);

/// Whether each client reshuffles every round or keeps its first permutation.
enum class ShuffleMode { ShuffleOnce, RandomReshuffling };

/// The permutation client `client` uses in `round`. Shuffle-Once always
/// reads the round-0 stream, so the permutation is fixed over the run and
/// independent of participation.
Permutation client_permutation(std::uint64_t seed, ShuffleMode mode,
                               std::int64_t round, int client, int n);

/// Variance of the mean of k draws without replacement from a population
/// of n vectors with population variance sigma_sq:
/// (n - k) / (k (n - 1)) * sigma_sq, and 0 when n == 1.
double swr_formula(double sigma_sq, int n, int k);

/// Population variance (1/n) sum ||X_i - mean||^2.
double population_variance(std::span<const Vector> xs);

struct SwrMoments {
  Vector mean;
  double variance = 0.0;
  std::size_t subsets = 0;
};

/// Exact moments of the k-subset mean by enumerating all C(n, k) subsets.
/// Throws ResourceError above kSwrEnumerationLimit elements.
SwrMoments swr_moments_oracle(std::span<const Vector> xs, int k);

inline constexpr int kSwrEnumerationLimit = 12;

}  // namespace fedrr
