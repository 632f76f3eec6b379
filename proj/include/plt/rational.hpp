#pragma once

#include <cstdint>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

namespace plt {

/// Exact rational with normalized int64 numerator/denominator (den > 0).
/// Intermediates are computed in 128 bits; results that do not fit throw.
class Rational {
 public:
  constexpr Rational() = default;
  Rational(std::int64_t num) : num_(num), den_(1) {}  // NOLINT: implicit from integers is intended
  Rational(std::int64_t num, std::int64_t den) { assign(num, den); }

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }

  bool is_integer() const { return den_ == 1; }
  /// Largest integer <= value.
  std::int64_t floor() const {
    std::int64_t q = num_ / den_;
    if (num_ % den_ != 0 && num_ < 0) --q;
    return q;
  }
  Rational frac() const { return *this - Rational(floor()); }
  Rational reciprocal() const {
    if (num_ == 0) throw std::domain_error("reciprocal of zero");
    return Rational(den_, num_);
  }
  double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }
  std::string str() const { return den_ == 1 ? std::to_string(num_) : std::to_string(num_) + "/" + std::to_string(den_); }

  friend Rational operator+(const Rational& a, const Rational& b) {
    return make(static_cast<__int128>(a.num_) * b.den_ + static_cast<__int128>(b.num_) * a.den_,
                static_cast<__int128>(a.den_) * b.den_);
  }
  friend Rational operator-(const Rational& a, const Rational& b) {
    return make(static_cast<__int128>(a.num_) * b.den_ - static_cast<__int128>(b.num_) * a.den_,
                static_cast<__int128>(a.den_) * b.den_);
  }
  friend Rational operator*(const Rational& a, const Rational& b) {
    return make(static_cast<__int128>(a.num_) * b.num_, static_cast<__int128>(a.den_) * b.den_);
  }
  friend Rational operator/(const Rational& a, const Rational& b) { return a * b.reciprocal(); }

  friend bool operator==(const Rational&, const Rational&) = default;
  friend bool operator<(const Rational& a, const Rational& b) {
    return static_cast<__int128>(a.num_) * b.den_ < static_cast<__int128>(b.num_) * a.den_;
  }
  friend bool operator<=(const Rational& a, const Rational& b) { return !(b < a); }
  friend bool operator>(const Rational& a, const Rational& b) { return b < a; }
  friend bool operator>=(const Rational& a, const Rational& b) { return !(a < b); }

  friend std::ostream& operator<<(std::ostream& os, const Rational& r) { return os << r.str(); }

 private:
  static Rational make(__int128 num, __int128 den) {
    if (den == 0) throw std::domain_error("zero denominator");
    if (den < 0) {
      num = -num;
      den = -den;
    }
    __int128 a = num < 0 ? -num : num, b = den;
    while (b != 0) {
      __int128 t = a % b;
      a = b;
      b = t;
    }
    if (a > 1) {
      num /= a;
      den /= a;
    }
    constexpr __int128 kMax = INT64_MAX;
    if (num > kMax || num < -kMax || den > kMax) throw std::overflow_error("rational overflow");
    Rational r;
    r.num_ = static_cast<std::int64_t>(num);
    r.den_ = static_cast<std::int64_t>(den);
    return r;
  }

  void assign(std::int64_t num, std::int64_t den) { *this = make(num, den); }

  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

}  // namespace plt
