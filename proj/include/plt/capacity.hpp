#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "plt/rational.hpp"

namespace plt {

class InvalidParameters : public std::invalid_argument {
 public:
  explicit InvalidParameters(const std::string& what) : std::invalid_argument("InvalidParameters: " + what) {}
};

enum class CapacityKind { ExactCapacity, UpperBound };

inline const char* to_string(CapacityKind kind) {
  return kind == CapacityKind::ExactCapacity ? "exact-capacity" : "upper-bound";
}

struct CapacityReport {
  Rational value;
  CapacityKind kind = CapacityKind::UpperBound;
  std::string formula_tag;
};

/// N servers, K messages, demand dimension L, support size D.
struct CapacityQuery {
  std::int64_t n_servers = 1;
  std::int64_t k_messages = 1;
  std::int64_t dimension = 1;
  std::int64_t support = 1;

  void validate() const {
    if (n_servers < 1) throw InvalidParameters("N must be >= 1");
    if (dimension < 1 || dimension > support || support > k_messages)
      throw InvalidParameters("need 1 <= L <= D <= K");
  }
};

/// (1 + a + a^2 + ... + a^(b-1))^-1
inline Rational phi(const Rational& a, std::int64_t b) {
  if (!(a > Rational(0))) throw InvalidParameters("phi needs a > 0");
  if (b < 1) throw InvalidParameters("phi needs b >= 1");
  Rational sum(0), power(1);
  for (std::int64_t i = 0; i < b; ++i) {
    sum = sum + power;
    power = power * a;
  }
  return sum.reciprocal();
}

namespace detail {

/// 1 + 1/N + ... + 1/N^(m-1); equals (1 - N^-m)/(1 - 1/N) for N > 1.
inline Rational geometric_head(std::int64_t n, std::int64_t m) {
  Rational sum(0), power(1), ratio(1, n);
  for (std::int64_t i = 0; i < m; ++i) {
    sum = sum + power;
    power = power * ratio;
  }
  return sum;
}

/// The floor-form bound shared by the general PLT converse and the M-PIR-PSI bound.
inline Rational floor_bound(std::int64_t n, const Rational& x) {
  std::int64_t fl = x.floor();
  Rational n_pow(1);
  for (std::int64_t i = 0; i < fl; ++i) n_pow = n_pow * Rational(n);
  return (geometric_head(n, fl) + x.frac() / n_pow).reciprocal();
}

}  // namespace detail

inline CapacityReport plt_upper_bound(const CapacityQuery& query) {
  query.validate();
  const auto n = query.n_servers, k = query.k_messages, l = query.dimension, d = query.support;
  const Rational excess(k - d, l);  // (K-D)/L
  const Rational theta(k - d + l, l);

  auto case_i = [&] { return (Rational(1) + Rational(k - d, l * n)).reciprocal(); };
  auto case_ii = [&] { return detail::floor_bound(n, theta); };

  CapacityReport report;
  if (excess < Rational(1)) {
    report.value = case_i();
    report.formula_tag = "plt-bound-ratio";
  } else if (excess > Rational(1)) {
    report.value = case_ii();
    report.formula_tag = "plt-bound-floor";
  } else {
    report.value = case_i();
    if (!(report.value == case_ii())) throw std::logic_error("PLT bound cases disagree at (K-D)/L = 1");
    report.formula_tag = "plt-bound-boundary";
  }

  // Known tight regimes: single server, L = 1, and L = D in the covered cases.
  const Rational k_over_d(k, d);
  bool tight = n == 1 || l == 1 || (l == d && (k_over_d <= Rational(2) || k_over_d.is_integer()));
  report.kind = tight ? CapacityKind::ExactCapacity : CapacityKind::UpperBound;
  return report;
}

inline CapacityReport plt_capacity_L1(std::int64_t n, std::int64_t k, std::int64_t d) {
  if (n < 1 || d < 1 || d > k) throw InvalidParameters("need N >= 1 and 1 <= D <= K");
  return {phi(Rational(1, n), k - d + 1), CapacityKind::ExactCapacity, "plt-capacity-L1"};
}

/// Multi-message PIR with private side information: P wanted, M side messages.
inline CapacityReport mpir_psi_capacity(std::int64_t n, std::int64_t k, std::int64_t p, std::int64_t m) {
  if (n < 1 || p < 1 || m < 0 || p + m > k) throw InvalidParameters("need N >= 1, P >= 1, M >= 0, P + M <= K");
  const Rational rho(k - m, p);
  if (rho <= Rational(2)) {
    return {(Rational(1) + Rational(k - m - p, p * n)).reciprocal(), CapacityKind::ExactCapacity, "mpir-psi-ratio"};
  }
  if (rho.is_integer()) {
    return {phi(Rational(1, n), rho.num()), CapacityKind::ExactCapacity, "mpir-psi-integer"};
  }
  return {detail::floor_bound(n, rho), CapacityKind::UpperBound, "mpir-psi-floor"};
}

inline CapacityReport pir_psi_capacity(std::int64_t n, std::int64_t k, std::int64_t m) {
  if (n < 1 || m < 0 || m > k - 1) throw InvalidParameters("need N >= 1 and 0 <= M <= K-1");
  return {phi(Rational(1, n), k - m), CapacityKind::ExactCapacity, "pir-psi"};
}

/// Reference rates for comparison tables.
struct BaselineRates {
  /// Multi-message PIR of the D messages (L = D formulas); nullopt when not covered.
  std::optional<CapacityReport> mm_pir;
  /// Private computation hiding coefficients too: Phi(1/N, K).
  CapacityReport pc_full;
  /// Retrieve all D messages with multi-message PIR, then combine: at most 1/D.
  CapacityReport mpir_then_combine;

  std::vector<std::pair<std::string, std::optional<CapacityReport>>> named() const {
    return {{"mm-pir", mm_pir}, {"pc-full", pc_full}, {"mpir-then-combine", mpir_then_combine}};
  }
};

inline BaselineRates baseline_rates(const CapacityQuery& query) {
  query.validate();
  const auto n = query.n_servers, k = query.k_messages, d = query.support;
  BaselineRates out;
  const Rational k_over_d(k, d);
  if (k_over_d <= Rational(2)) {
    out.mm_pir = CapacityReport{(Rational(1) + Rational(k - d, d * n)).reciprocal(), CapacityKind::ExactCapacity,
                                "mm-pir(K/D<=2)"};
  } else if (k_over_d.is_integer()) {
    out.mm_pir = CapacityReport{phi(Rational(1, n), k_over_d.num()), CapacityKind::ExactCapacity, "mm-pir(K/D int)"};
  }
  out.pc_full = {phi(Rational(1, n), k), CapacityKind::ExactCapacity, "pc-full"};
  out.mpir_then_combine = {Rational(1, d), CapacityKind::UpperBound, "mpir-then-combine"};
  return out;
}

}  // namespace plt
