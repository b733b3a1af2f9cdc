#pragma once

// Dense 64-bit vector/matrix carriers and the probability primitives the
// rest of the engine is built on.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace grpo_tta {

/// Raised when a vector is too close to zero to be normalized.
class DegenerateInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require_finite(std::span<const double> xs, const char* what) {
  for (double x : xs) {
    if (!std::isfinite(x)) {
      throw std::invalid_argument(std::string(what) + ": non-finite element");
    }
  }
}

}  // namespace detail

/// Non-empty vector of finite doubles.
class Vec64 {
 public:
  explicit Vec64(std::vector<double> elements) : data_(std::move(elements)) {
    if (data_.empty()) throw std::invalid_argument("Vec64: empty");
    detail::require_finite(data_, "Vec64");
  }
  Vec64(std::initializer_list<double> elements)
      : Vec64(std::vector<double>(elements)) {}

  static Vec64 zeros(std::size_t n) { return Vec64(std::vector<double>(n, 0.0)); }

  std::size_t size() const { return data_.size(); }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  std::span<const double> span() const { return data_; }
  std::span<double> span() { return data_; }
  const std::vector<double>& values() const { return data_; }

  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  friend bool operator==(const Vec64&, const Vec64&) = default;

 private:
  std::vector<double> data_;
};

/// Row-major dense matrix of finite doubles.
class Mat64 {
 public:
  Mat64(std::size_t rows, std::size_t cols, std::vector<double> elements)
      : rows_(rows), cols_(cols), data_(std::move(elements)) {
    if (rows_ == 0 || cols_ == 0) throw std::invalid_argument("Mat64: zero extent");
    if (data_.size() != rows_ * cols_) {
      throw std::invalid_argument("Mat64: element count does not match shape");
    }
    detail::require_finite(data_, "Mat64");
  }
  Mat64(std::size_t rows, std::size_t cols)
      : Mat64(rows, cols, std::vector<double>(rows * cols, 0.0)) {}

  static Mat64 identity(std::size_t n) {
    Mat64 m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols_, cols_);
  }
  std::span<const double> span() const { return data_; }
  std::span<double> span() { return data_; }

  friend bool operator==(const Mat64&, const Mat64&) = default;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> data_;
};

/// Deterministic random stream. Distributions are implemented here rather
/// than through <random> adaptors so streams are identical across standard
/// library implementations.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(mix(seed)) {}

  /// Independent stream for (seed, index) pairs, e.g. one per sample.
  static SeededRng derive(std::uint64_t seed, std::uint64_t index) {
    return SeededRng(mix(seed ^ mix(index + 0x9E3779B97F4A7C15ULL)));
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("SeededRng::below: n = 0");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via Box-Muller; the spare value is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  static std::uint64_t mix(std::uint64_t x) {  // splitmix64 finalizer
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

inline double dot(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw std::invalid_argument("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) acc += u[i] * v[i];
  return acc;
}

inline double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

/// Softmax of logits / temperature, stabilized by max-subtraction.
inline Vec64 softmax(const Vec64& logits, double temperature) {
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("softmax: temperature must be positive");
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp((logits[i] - top) / temperature);
    total += out[i];
  }
  for (double& x : out) x /= total;
  return Vec64(std::move(out));
}

/// Shannon entropy in nats; 0 ln 0 is taken as 0.
inline double shannon_entropy(const Vec64& p) {
  double total = 0.0;
  for (double x : p) {
    if (x < 0.0) throw std::invalid_argument("shannon_entropy: negative probability");
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("shannon_entropy: input is not normalized");
  }
  double h = 0.0;
  for (double x : p) {
    if (x > 0.0) h -= x * std::log(x);
  }
  return std::max(h, 0.0);
}

inline double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw std::invalid_argument("cosine: length mismatch");
  const double nu = norm(u);
  const double nv = norm(v);
  if (nu == 0.0 || nv == 0.0) throw std::invalid_argument("cosine: zero-norm input");
  return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

inline double cosine(const Vec64& u, const Vec64& v) { return cosine(u.span(), v.span()); }

inline constexpr double kMinNorm = 1e-12;

inline Vec64 l2_normalize(const Vec64& v) {
  const double n = norm(v.span());
  if (!(n > kMinNorm)) throw DegenerateInput("l2_normalize: near-zero norm");
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return Vec64(std::move(out));
}

inline Vec64 gaussian_sample(SeededRng& rng, std::size_t dim, double sigma) {
  if (dim == 0) throw std::invalid_argument("gaussian_sample: dim = 0");
  if (sigma < 0.0) throw std::invalid_argument("gaussian_sample: negative sigma");
  std::vector<double> out(dim);
  for (double& x : out) x = sigma * rng.normal();
  return Vec64(std::move(out));
}

inline std::size_t argmax(std::span<const double> xs) {
  return static_cast<std::size_t>(std::max_element(xs.begin(), xs.end()) - xs.begin());
}

}  // namespace grpo_tta
