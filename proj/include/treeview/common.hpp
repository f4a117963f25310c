#ifndef TREEVIEW_COMMON_HPP
#define TREEVIEW_COMMON_HPP

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace treeview {

/// Bad input: malformed files, inconsistent shapes, out-of-range arguments.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Computation failed on valid input (e.g. training diverged).
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Eigen::MatrixXd;
using Eigen::VectorXd;
using MatrixXi = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

/// splitmix64-seeded xoshiro256** generator.
///
/// The standard distributions are implementation-defined, so everything that
/// must be reproducible across toolchains draws through this class.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed);

  std::uint64_t next();
  result_type operator()() { return next(); }
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n), n > 0, without modulo bias.
  std::size_t below(std::size_t n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::uint64_t s_[4];
};

std::uint64_t splitmix64(std::uint64_t x);

/// Stage seed derived from the global seed and a stage name.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage);

/// Index of the maximum entry; ties go to the smaller index.
template <typename Range>
std::size_t argmax_first(const Range& values) {
  std::size_t best = 0;
  std::size_t i = 0;
  for (const auto& v : values) {
    if (v > values[best]) best = i;
    ++i;
  }
  return best;
}

/// Gini impurity 1 - sum p_c^2 of a class histogram with total `n`.
double gini(std::span<const double> histogram, double n);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

/// Parses a full token as a double; returns false on any trailing garbage.
bool parse_double(std::string_view token, double& out);

std::vector<std::string> split_line(std::string_view line, char sep);
std::string_view trim(std::string_view s);

}  // namespace treeview

#endif  // TREEVIEW_COMMON_HPP
