#pragma once

#include <span>
#include <vector>

#include "plt/field.hpp"

namespace plt {

/// Dense univariate polynomial over GF(q), low-degree-first, trailing zeros trimmed.
class Poly {
 public:
  explicit Poly(const PrimeField& field, std::vector<Elem> coeffs = {})
      : field_(field), coeffs_(std::move(coeffs)) {
    for (Elem c : coeffs_) {
      if (!field_.contains(c)) throw std::out_of_range("polynomial coefficient not canonical");
    }
    trim();
  }

  static Poly constant(const PrimeField& field, Elem c) { return Poly(field, {c}); }

  /// Monic product of (x - root) over the given roots; the empty product is 1.
  static Poly from_roots(const PrimeField& field, std::span<const Elem> roots) {
    std::vector<Elem> c{1};
    c.reserve(roots.size() + 1);
    for (Elem root : roots) {
      Elem neg_root = field.neg(field.reduce(root));
      c.push_back(0);
      for (std::size_t i = c.size() - 1; i > 0; --i) {
        c[i] = field.fma(c[i - 1], c[i], neg_root);
      }
      c[0] = field.mul(c[0], neg_root);
    }
    return Poly(field, std::move(c));
  }

  const PrimeField& field() const { return field_; }
  const std::vector<Elem>& coeffs() const { return coeffs_; }
  bool is_zero() const { return coeffs_.empty(); }
  /// -1 for the zero polynomial.
  int degree() const { return static_cast<int>(coeffs_.size()) - 1; }

  /// Horner evaluation.
  Elem eval(Elem x) const {
    Elem acc = 0;
    for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) acc = field_.fma(*it, acc, x);
    return acc;
  }

  Poly scaled(Elem c) const {
    std::vector<Elem> out(coeffs_.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = field_.mul(coeffs_[i], c);
    return Poly(field_, std::move(out));
  }

  /// Coefficients padded with zeros to exactly `len` entries.
  std::vector<Elem> padded(std::size_t len) const {
    if (coeffs_.size() > len) throw std::length_error("polynomial longer than requested padding");
    std::vector<Elem> out(coeffs_);
    out.resize(len, 0);
    return out;
  }

  friend bool operator==(const Poly& a, const Poly& b) {
    return a.field_ == b.field_ && a.coeffs_ == b.coeffs_;
  }

 private:
  void trim() {
    while (!coeffs_.empty() && coeffs_.back() == 0) coeffs_.pop_back();
  }

  PrimeField field_;
  std::vector<Elem> coeffs_;
};

inline Poly poly_from_roots(const PrimeField& field, std::span<const Elem> roots) {
  return Poly::from_roots(field, roots);
}

inline Elem poly_eval(const Poly& p, Elem x) { return p.eval(x); }

}  // namespace plt
