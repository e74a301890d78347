#pragma once

#include <cmath>
#include <cstdint>

namespace heavytail {

/// Neumaier's variant of Kahan summation. Unlike plain Kahan it stays accurate
/// when an addend is larger in magnitude than the running sum.
template <typename Real>
struct CompensatedSum {
  Real sum = Real{0};
  Real compensation = Real{0};

  constexpr void add(Real value) noexcept {
    const Real t = sum + value;
    if (std::abs(sum) >= std::abs(value)) {
      compensation += (sum - t) + value;
    } else {
      compensation += (value - t) + sum;
    }
    sum = t;
  }

  constexpr CompensatedSum& operator+=(Real value) noexcept {
    add(value);
    return *this;
  }

  constexpr CompensatedSum& operator+=(const CompensatedSum& other) noexcept {
    add(other.sum);
    add(other.compensation);
    return *this;
  }

  [[nodiscard]] constexpr Real value() const noexcept { return sum + compensation; }
};

/// First and second sample moments of a stream of per-sample estimator values.
///
/// Values are accumulated as deviations from the first value seen, so a constant
/// stream yields a variance of exactly zero and a mean equal to that constant.
/// Both sums are compensated; CMC values can sit near 1e-10 and crude-MC values
/// are exact integers either way.
class MomentAccumulator {
public:
  void add(double value) noexcept {
    if (count_ == 0) {
      shift_ = value;
    }
    const double d = value - shift_;
    sum_ += d;
    sum_sq_ += d * d;
    ++count_;
  }

  /// Folds `other` into this accumulator, re-expressing its sums about this shift.
  void merge(const MomentAccumulator& other) noexcept {
    if (other.count_ == 0) {
      return;
    }
    if (count_ == 0) {
      *this = other;
      return;
    }
    const double delta = other.shift_ - shift_;
    const double m = static_cast<double>(other.count_);
    const double s = other.sum_.value();
    sum_ += s;
    sum_ += m * delta;
    sum_sq_ += other.sum_sq_.value();
    sum_sq_ += 2.0 * delta * s;
    sum_sq_ += m * delta * delta;
    count_ += other.count_;
  }

  [[nodiscard]] std::uint64_t count() const noexcept { return count_; }

  [[nodiscard]] double mean() const noexcept {
    if (count_ == 0) {
      return 0.0;
    }
    return shift_ + sum_.value() / static_cast<double>(count_);
  }

  /// Population variance (divisor n), clamped at zero.
  [[nodiscard]] double variance() const noexcept {
    if (count_ == 0) {
      return 0.0;
    }
    const double n = static_cast<double>(count_);
    const double md = sum_.value() / n;
    const double v = sum_sq_.value() / n - md * md;
    return v > 0.0 ? v : 0.0;
  }

private:
  double shift_ = 0.0;
  CompensatedSum<double> sum_;
  CompensatedSum<double> sum_sq_;
  std::uint64_t count_ = 0;
};

}  // namespace heavytail
