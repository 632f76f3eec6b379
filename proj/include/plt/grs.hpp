#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "plt/field.hpp"
#include "plt/linalg.hpp"
#include "plt/poly.hpp"
#include "plt/rng.hpp"

namespace plt {

class FieldTooSmall : public std::invalid_argument {
 public:
  FieldTooSmall(std::uint64_t q, std::uint64_t k)
      : std::invalid_argument("FieldTooSmall: q = " + std::to_string(q) + " < K = " + std::to_string(k)) {}
};

class InvalidDemand : public std::invalid_argument {
 public:
  explicit InvalidDemand(const std::string& what) : std::invalid_argument("InvalidDemand: " + what) {}
};

/// Sorted message indices, 1-based.
using Subset = std::vector<std::uint32_t>;

/// One linear combination (L = 1) of the messages in `support`.
struct Demand {
  Subset support;
  std::vector<Elem> coeffs;

  void validate(const PrimeField& field, std::uint32_t k) const {
    if (support.empty()) throw InvalidDemand("empty support");
    if (coeffs.size() != support.size()) throw InvalidDemand("support and coefficient lengths differ");
    for (std::size_t i = 0; i < support.size(); ++i) {
      if (support[i] < 1 || support[i] > k) throw InvalidDemand("index " + std::to_string(support[i]) + " outside [1, K]");
      if (i > 0 && support[i] <= support[i - 1]) throw InvalidDemand("support must be strictly increasing");
      if (!field.contains(coeffs[i])) throw InvalidDemand("coefficient not a canonical field element");
      if (coeffs[i] == 0) throw InvalidDemand("coefficients must be nonzero");
    }
  }

  bool contains(std::uint32_t j) const { return std::binary_search(support.begin(), support.end(), j); }
};

struct GrsSecret {
  std::vector<Elem> omegas;  // omega_1..omega_K at positions 0..K-1
  std::vector<Elem> alphas;
  Poly p_poly;
};

struct SuperMessageSpec {
  std::size_t r = 0;
  Matrix q_vectors;  // r x K
};

struct FunctionTable {
  std::vector<Subset> subsets;
  Matrix betas;              // F x r
  std::vector<Elem> scalars;  // c_f
  std::size_t star_index = 0;  // 0-based f with subsets[f] == demand support
  Elem star_scalar = 0;

  std::size_t size() const { return subsets.size(); }
};

/// Deliberate deviations from the honest query distribution, used to check that the
/// auditor notices them. Never set outside tests and audits.
enum class QueryMutant {
  None,
  ConstantAlpha,       // alpha_j = 1 for every j outside the demand
  FixedStarScalar,     // scalar of the demanded function fixed to 1, others random
  StarFirstDropOrder,  // redundancy elimination visits expressions holding f* first
};

inline const char* to_string(QueryMutant m) {
  switch (m) {
    case QueryMutant::None: return "none";
    case QueryMutant::ConstantAlpha: return "constant-alpha";
    case QueryMutant::FixedStarScalar: return "fixed-star-scalar";
    case QueryMutant::StarFirstDropOrder: return "star-first-drop-order";
  }
  return "?";
}

/// Fixed choices for golden tests. Alphas are keyed by 1-based message index (only
/// consulted for indices outside the demand); scalars by 0-based function index.
struct QueryOverrides {
  std::optional<std::vector<Elem>> omegas;
  std::map<std::uint32_t, Elem> alphas;
  std::map<std::size_t, Elem> scalars;
};

inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t out = 1;
  for (std::uint64_t i = 1; i <= k; ++i) out = out * (n - k + i) / i;
  return out;
}

/// K distinct elements by sampling without replacement (sparse Fisher-Yates).
inline std::vector<Elem> choose_omegas(const PrimeField& field, std::uint32_t k, Rng& rng) {
  const std::uint64_t q = field.modulus();
  if (q < k) throw FieldTooSmall(q, k);
  std::unordered_map<std::uint64_t, std::uint64_t> swapped;
  auto at = [&](std::uint64_t i) {
    auto it = swapped.find(i);
    return it == swapped.end() ? i : it->second;
  };
  std::vector<Elem> out;
  out.reserve(k);
  for (std::uint64_t i = 0; i < k; ++i) {
    std::uint64_t j = i + rng.below(q - i);
    std::uint64_t vi = at(i), vj = at(j);
    swapped[j] = vi;
    swapped[i] = vj;
    out.push_back(vj);
  }
  return out;
}

/// Steps through the alphas: v_j / p(omega_j) on the demand, random nonzero elsewhere.
inline GrsSecret build_secret(const PrimeField& field, std::uint32_t k, const Demand& demand,
                              const std::vector<Elem>& omegas, Rng& rng, const QueryOverrides& overrides = {},
                              QueryMutant mutant = QueryMutant::None) {
  demand.validate(field, k);
  if (omegas.size() != k) throw std::invalid_argument("need exactly K evaluation points");
  {
    std::vector<Elem> sorted = omegas;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw std::invalid_argument("evaluation points must be distinct");
    if (!sorted.empty() && !field.contains(sorted.back())) throw std::invalid_argument("evaluation point not canonical");
  }
  std::vector<Elem> roots;
  for (std::uint32_t j = 1; j <= k; ++j) {
    if (!demand.contains(j)) roots.push_back(omegas[j - 1]);
  }
  Poly p = Poly::from_roots(field, roots);
  std::vector<Elem> alphas(k, 0);
  std::size_t d = 0;
  for (std::uint32_t j = 1; j <= k; ++j) {
    if (demand.contains(j)) {
      alphas[j - 1] = field.div(demand.coeffs[d++], p.eval(omegas[j - 1]));
      continue;
    }
    Elem drawn = 1 + rng.below(field.modulus() - 1);
    if (auto it = overrides.alphas.find(j); it != overrides.alphas.end()) drawn = it->second;
    if (mutant == QueryMutant::ConstantAlpha) drawn = 1;
    if (drawn == 0 || !field.contains(drawn)) throw std::invalid_argument("alpha override must be a nonzero element");
    alphas[j - 1] = drawn;
  }
  return GrsSecret{omegas, std::move(alphas), std::move(p)};
}

inline SuperMessageSpec build_q_vectors(const PrimeField& field, const GrsSecret& secret, std::uint32_t k,
                                        std::uint32_t d) {
  if (d < 1 || d > k || secret.omegas.size() != k || secret.alphas.size() != k)
    throw std::invalid_argument("build_q_vectors: inconsistent dimensions");
  SuperMessageSpec spec;
  spec.r = k - d + 1;
  spec.q_vectors.assign(spec.r, Row(k, 0));
  for (std::uint32_t j = 0; j < k; ++j) {
    Elem power = 1;
    for (std::size_t i = 0; i < spec.r; ++i) {
      spec.q_vectors[i][j] = field.mul(secret.alphas[j], power);
      power = field.mul(power, secret.omegas[j]);
    }
  }
  return spec;
}

/// All d-subsets of {1..k} in lexicographic order.
inline std::vector<Subset> enumerate_subsets(std::uint32_t k, std::uint32_t d) {
  if (d < 1 || d > k) throw std::invalid_argument("enumerate_subsets needs 1 <= d <= k");
  std::vector<Subset> out;
  Subset cur(d);
  for (std::uint32_t i = 0; i < d; ++i) cur[i] = i + 1;
  for (;;) {
    out.push_back(cur);
    std::int64_t i = static_cast<std::int64_t>(d) - 1;
    while (i >= 0 && cur[i] == k - d + 1 + static_cast<std::uint32_t>(i)) --i;
    if (i < 0) break;
    ++cur[i];
    for (std::uint32_t j = static_cast<std::uint32_t>(i) + 1; j < d; ++j) cur[j] = cur[j - 1] + 1;
  }
  return out;
}

/// beta_f = coefficients of c * prod_{j not in W_f} (x - omega_j), padded to length r.
inline Row derive_beta(const PrimeField& field, const std::vector<Elem>& omegas, const Subset& subset, Elem c) {
  if (c == 0 || !field.contains(c)) throw std::invalid_argument("derive_beta needs a nonzero scalar");
  const auto k = static_cast<std::uint32_t>(omegas.size());
  std::vector<Elem> roots;
  for (std::uint32_t j = 1; j <= k; ++j) {
    if (!std::binary_search(subset.begin(), subset.end(), j)) roots.push_back(omegas[j - 1]);
  }
  return Poly::from_roots(field, roots).scaled(c).padded(k - subset.size() + 1);
}

/// Coefficients of sum_i beta_i Q_i on the K messages.
inline Row function_coefficients(const PrimeField& field, const SuperMessageSpec& spec, const Row& beta) {
  return vec_mat(field, beta, spec.q_vectors);
}

inline FunctionTable build_function_table(const PrimeField& field, const GrsSecret& secret,
                                          const SuperMessageSpec& spec, const Demand& demand, Rng& rng,
                                          const QueryOverrides& overrides = {},
                                          QueryMutant mutant = QueryMutant::None) {
  const auto k = static_cast<std::uint32_t>(secret.omegas.size());
  const auto d = static_cast<std::uint32_t>(demand.support.size());
  FunctionTable table;
  table.subsets = enumerate_subsets(k, d);
  auto star = std::find(table.subsets.begin(), table.subsets.end(), demand.support);
  if (star == table.subsets.end()) throw InvalidDemand("support is not a D-subset of [K]");
  table.star_index = static_cast<std::size_t>(star - table.subsets.begin());
  for (std::size_t f = 0; f < table.subsets.size(); ++f) {
    Elem c = 1 + rng.below(field.modulus() - 1);
    if (auto it = overrides.scalars.find(f); it != overrides.scalars.end()) c = it->second;
    if (mutant == QueryMutant::FixedStarScalar && f == table.star_index) c = 1;
    table.scalars.push_back(c);
    table.betas.push_back(derive_beta(field, secret.omegas, table.subsets[f], c));
  }
  // On the demand, alpha_j * g(omega_j) = v_j * c since g is c times p.
  table.star_scalar = table.scalars[table.star_index];
  Row coeffs = function_coefficients(field, spec, table.betas[table.star_index]);
  for (std::uint32_t j = 1, idx = 0; j <= k; ++j) {
    Elem expect = demand.contains(j) ? field.mul(table.star_scalar, demand.coeffs[idx++]) : 0;
    if (coeffs[j - 1] != expect) throw std::logic_error("demanded function does not match the demand");
  }
  return table;
}

/// Everything the user derives from the demand before the computation sub-protocol.
struct QuerySetup {
  GrsSecret secret;
  SuperMessageSpec spec;
  FunctionTable table;
};

/// Draw order on `rng`: omegas, free alphas by ascending j, function scalars by ascending f.
inline QuerySetup build_query_setup(const PrimeField& field, std::uint32_t k, const Demand& demand, Rng& rng,
                                    const QueryOverrides& overrides = {}, QueryMutant mutant = QueryMutant::None) {
  demand.validate(field, k);
  std::vector<Elem> omegas = overrides.omegas ? *overrides.omegas : choose_omegas(field, k, rng);
  if (field.modulus() < k) throw FieldTooSmall(field.modulus(), k);
  GrsSecret secret = build_secret(field, k, demand, omegas, rng, overrides, mutant);
  SuperMessageSpec spec = build_q_vectors(field, secret, k, static_cast<std::uint32_t>(demand.support.size()));
  FunctionTable table = build_function_table(field, secret, spec, demand, rng, overrides, mutant);
  return QuerySetup{std::move(secret), std::move(spec), std::move(table)};
}

}  // namespace plt
