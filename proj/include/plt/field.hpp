#pragma once

#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>

namespace plt {

/// Canonical representative of an element of GF(q), always in [0, q).
using Elem = std::uint64_t;

class NotPrime : public std::invalid_argument {
 public:
  explicit NotPrime(std::uint64_t q)
      : std::invalid_argument("NotPrime: " + std::to_string(q) + " is not prime") {}
};

class DivisionByZero : public std::domain_error {
 public:
  DivisionByZero() : std::domain_error("DivisionByZero: zero has no inverse") {}
};

/// Deterministic primality test by trial division; fine for q < 2^31.
constexpr bool is_prime(std::uint64_t n) {
  if (n < 2) return false;
  if (n < 4) return true;
  if (n % 2 == 0 || n % 3 == 0) return false;
  for (std::uint64_t d = 5; d * d <= n; d += 6) {
    if (n % d == 0 || n % (d + 2) == 0) return false;
  }
  return true;
}

/// The prime field GF(q). A small value type: copying it copies the modulus.
class PrimeField {
 public:
  static constexpr std::uint64_t kMaxModulus = (std::uint64_t{1} << 31);

  explicit PrimeField(std::uint64_t q) : q_(q) {
    if (q >= kMaxModulus) throw std::invalid_argument("modulus must be < 2^31");
    if (!is_prime(q)) throw NotPrime(q);
  }

  std::uint64_t modulus() const { return q_; }
  std::uint64_t size() const { return q_; }

  bool contains(Elem a) const { return a < q_; }
  Elem reduce(std::uint64_t a) const { return a % q_; }
  Elem reduce_signed(std::int64_t a) const {
    auto r = a % static_cast<std::int64_t>(q_);
    return static_cast<Elem>(r < 0 ? r + static_cast<std::int64_t>(q_) : r);
  }

  Elem add(Elem a, Elem b) const {
    Elem s = a + b;
    return s >= q_ ? s - q_ : s;
  }
  Elem sub(Elem a, Elem b) const { return a >= b ? a - b : a + q_ - b; }
  Elem neg(Elem a) const { return a == 0 ? 0 : q_ - a; }
  Elem mul(Elem a, Elem b) const { return (a * b) % q_; }  // a, b < 2^31
  /// a + b * c
  Elem fma(Elem a, Elem b, Elem c) const { return (a + b * c) % q_; }

  Elem pow(Elem base, std::uint64_t e) const {
    Elem result = 1 % q_;
    base %= q_;
    while (e != 0) {
      if (e & 1) result = mul(result, base);
      base = mul(base, base);
      e >>= 1;
    }
    return result;
  }

  /// Extended Euclid; throws DivisionByZero for a == 0.
  Elem inv(Elem a) const {
    if (a % q_ == 0) throw DivisionByZero();
    std::int64_t t = 0, new_t = 1;
    std::int64_t r = static_cast<std::int64_t>(q_), new_r = static_cast<std::int64_t>(a % q_);
    while (new_r != 0) {
      std::int64_t quotient = r / new_r;
      std::int64_t tmp = t - quotient * new_t;
      t = new_t;
      new_t = tmp;
      tmp = r - quotient * new_r;
      r = new_r;
      new_r = tmp;
    }
    return reduce_signed(t);
  }

  Elem div(Elem a, Elem b) const { return mul(a, inv(b)); }

  /// +1 or -1 as a field element.
  Elem sign(int s) const { return s >= 0 ? 1 % q_ : neg(1 % q_); }

  /// Euler's criterion. Zero is reported as a non-residue.
  bool is_quadratic_residue(Elem a) const {
    if (a == 0) return false;
    if (q_ == 2) return true;
    return pow(a, (q_ - 1) / 2) == 1;
  }

  friend bool operator==(const PrimeField&, const PrimeField&) = default;

 private:
  std::uint64_t q_;
};

inline PrimeField field_new(std::uint64_t q) {
  if (q < 2) throw NotPrime(q);
  return PrimeField(q);
}

/// Strongly typed field element for API boundaries; bulk code works on Elem.
class FieldElement {
 public:
  FieldElement(const PrimeField& field, std::uint64_t value) : field_(field), value_(value) {
    if (!field.contains(value)) throw std::out_of_range("field element not canonical");
  }

  Elem value() const { return value_; }
  const PrimeField& field() const { return field_; }
  bool is_zero() const { return value_ == 0; }

  FieldElement operator+(const FieldElement& o) const { return {field_, field_.add(value_, check(o))}; }
  FieldElement operator-(const FieldElement& o) const { return {field_, field_.sub(value_, check(o))}; }
  FieldElement operator*(const FieldElement& o) const { return {field_, field_.mul(value_, check(o))}; }
  FieldElement operator/(const FieldElement& o) const { return {field_, field_.div(value_, check(o))}; }
  FieldElement operator-() const { return {field_, field_.neg(value_)}; }

  friend bool operator==(const FieldElement& a, const FieldElement& b) {
    return a.field_ == b.field_ && a.value_ == b.value_;
  }
  friend std::ostream& operator<<(std::ostream& os, const FieldElement& a) { return os << a.value_; }

 private:
  Elem check(const FieldElement& o) const {
    if (!(o.field_ == field_)) throw std::invalid_argument("mixed-field arithmetic");
    return o.value_;
  }

  PrimeField field_;
  Elem value_;
};

inline FieldElement inv(const FieldElement& a) { return {a.field(), a.field().inv(a.value())}; }

}  // namespace plt
