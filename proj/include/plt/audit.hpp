#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "plt/capacity.hpp"
#include "plt/engine.hpp"
#include "plt/grs.hpp"
#include "plt/linalg.hpp"
#include "plt/pc_plan.hpp"

namespace plt {

class ParamsTooLarge : public std::invalid_argument {
 public:
  explicit ParamsTooLarge(const std::string& what) : std::invalid_argument("ParamsTooLarge: " + what) {}
};

/// 1-based indices of the nonzero entries.
inline Subset support_of(const Row& coeffs) {
  Subset out;
  for (std::size_t j = 0; j < coeffs.size(); ++j) {
    if (coeffs[j] != 0) out.push_back(static_cast<std::uint32_t>(j + 1));
  }
  return out;
}

struct StructureReport {
  bool bijection = false;
  bool beta_count = false;
  bool exhaustive_run = false;
  bool exhaustive_agrees = true;
  std::vector<std::uint64_t> betas_per_subset;  // by function index
  std::vector<std::string> findings;

  bool pass() const { return bijection && beta_count && exhaustive_agrees; }
};

/// Every function is supported on its own D-subset, all D-subsets are hit once, and each
/// subset admits exactly q-1 coefficient vectors (one scalar class).
inline StructureReport check_support_structure(const PrimeField& field, const SuperMessageSpec& spec,
                                               const FunctionTable& table) {
  StructureReport rep;
  const std::size_t r = spec.r;
  const auto k = static_cast<std::uint32_t>(spec.q_vectors.empty() ? 0 : spec.q_vectors.front().size());
  const auto d = static_cast<std::uint32_t>(table.subsets.empty() ? 0 : table.subsets.front().size());
  const std::uint64_t q = field.modulus();

  std::set<Subset> hit;
  bool each_matches = true;
  for (std::size_t f = 0; f < table.size(); ++f) {
    Subset supp = support_of(function_coefficients(field, spec, table.betas[f]));
    if (supp != table.subsets[f]) {
      each_matches = false;
      rep.findings.push_back("function " + std::to_string(f) + " has the wrong support");
    }
    hit.insert(supp);
  }
  auto all = enumerate_subsets(k, d);
  rep.bijection = each_matches && hit.size() == table.size() && table.size() == all.size() &&
                  std::set<Subset>(all.begin(), all.end()) == hit;
  if (!rep.bijection) rep.findings.push_back("functions do not biject onto the D-subsets");

  // Annihilator: beta must kill the Q columns outside W_f; a one-dimensional solution
  // space whose nonzero members all have full support on W_f gives q-1 vectors.
  rep.beta_count = true;
  for (std::size_t f = 0; f < table.size(); ++f) {
    const Subset& w = table.subsets[f];
    Matrix outside;  // (K-D) x r, one row per column of Q outside W
    for (std::uint32_t j = 1; j <= k; ++j) {
      if (std::binary_search(w.begin(), w.end(), j)) continue;
      Row col(r);
      for (std::size_t i = 0; i < r; ++i) col[i] = spec.q_vectors[i][j - 1];
      outside.push_back(std::move(col));
    }
    Matrix kernel = kernel_basis(field, outside, r);
    std::uint64_t count = 0;
    if (kernel.size() == 1 && support_of(function_coefficients(field, spec, kernel[0])) == w) {
      if (q <= 4096) {
        std::set<Row> distinct;
        for (Elem c = 1; c < q; ++c) {
          Row b = kernel[0];
          for (auto& v : b) v = field.mul(v, c);
          if (support_of(function_coefficients(field, spec, b)) == w) distinct.insert(std::move(b));
        }
        count = distinct.size();
      } else {
        count = q - 1;
      }
    }
    bool member = kernel.size() == 1 && matrix_rank(field, {kernel[0], table.betas[f]}) == 1;
    rep.betas_per_subset.push_back(count);
    if (count != q - 1 || !member) {
      rep.beta_count = false;
      rep.findings.push_back("subset of function " + std::to_string(f) + " admits " + std::to_string(count) +
                             " coefficient vectors");
    }
  }

  if (r <= 3 && q <= 7) {
    rep.exhaustive_run = true;
    std::map<Subset, std::uint64_t> counts;
    std::uint64_t total = 1;
    for (std::size_t i = 0; i < r; ++i) total *= q;
    Row beta(r);
    for (std::uint64_t code = 0; code < total; ++code) {
      std::uint64_t x = code;
      for (std::size_t i = 0; i < r; ++i, x /= q) beta[i] = x % q;
      Subset supp = support_of(function_coefficients(field, spec, beta));
      if (supp.size() == d) ++counts[supp];
    }
    for (std::size_t f = 0; f < table.size(); ++f) {
      if (counts[table.subsets[f]] != rep.betas_per_subset[f]) {
        rep.exhaustive_agrees = false;
        rep.findings.push_back("exhaustive count disagrees for function " + std::to_string(f));
      }
    }
    if (counts.size() != table.size()) {
      rep.exhaustive_agrees = false;
      rep.findings.push_back("exhaustive search found supports outside the table");
    }
  }
  return rep;
}

/// What a server can see of its plan, minus masked values: per round, how many
/// expressions were kept and dropped, how many terms each has, and which function sets.
struct PlanShape {
  std::vector<std::vector<std::uint32_t>> kept;     // [server][round-1]
  std::vector<std::vector<std::uint32_t>> dropped;  // [server][round-1]
  std::vector<std::vector<std::uint32_t>> terms;    // [server] sorted terms-per-expression
  std::vector<std::vector<std::uint32_t>> function_sets;  // [server] sorted (round, set) codes

  friend bool operator==(const PlanShape&, const PlanShape&) = default;
};

inline PlanShape plan_shape(const PcPlan& plan) {
  PlanShape shape;
  for (std::uint32_t srv = 0; srv < plan.n_servers; ++srv) {
    std::vector<std::uint32_t> kept(plan.n_functions, 0), terms, sets;
    for (const Expression& e : plan.per_server[srv]) {
      ++kept[e.round - 1];
      terms.push_back(static_cast<std::uint32_t>(e.terms.size()));
      sets.push_back((e.round << 24) | e.function_set());
    }
    std::sort(terms.begin(), terms.end());
    std::sort(sets.begin(), sets.end());
    shape.kept.push_back(std::move(kept));
    shape.dropped.push_back(plan.drop_counts[srv]);
    shape.terms.push_back(std::move(terms));
    shape.function_sets.push_back(std::move(sets));
  }
  return shape;
}

struct ShapeReport {
  bool counts_identical = true;
  bool terms_identical = true;
  bool function_sets_identical = true;
  std::size_t plans_checked = 0;
  std::vector<std::uint32_t> kept_per_server;  // from the first plan
  std::vector<std::uint32_t> drops_per_round;  // server 0 of the first plan
  std::vector<std::string> findings;

  bool pass() const { return counts_identical && terms_identical && function_sets_identical; }
};

/// Random coefficient rows, F x r, with every r of them independent (as the query
/// construction's rows are). Plain rank r is not enough: a zero row changes the counts.
inline Matrix random_betas(const PrimeField& field, std::uint32_t f, std::uint32_t r, Rng& rng) {
  Matrix betas;
  do {
    betas.assign(f, Row(r));
    for (auto& row : betas) {
      for (auto& v : row) v = rng.below(field.modulus());
    }
  } while (!mds_check(field, transpose(betas)));
  return betas;
}

/// For each seed, plans for every choice of f* from the same mask seed must look alike.
/// When `betas` is empty, random rank-r rows over GF(101) are drawn per seed.
inline ShapeReport check_shape_independence(std::uint32_t n, std::uint32_t f, std::uint32_t r,
                                            const std::vector<std::uint64_t>& seeds, QueryMutant mutant = QueryMutant::None,
                                            const Matrix& betas = {}, std::uint64_t q = 101) {
  PrimeField field(q);
  ShapeReport rep;
  const std::uint64_t s = check_size(n, f, r);
  for (std::uint64_t seed : seeds) {
    Matrix rows = betas;
    if (rows.empty()) {
      Rng beta_rng(derive_seed(seed, 0x62657461));
      rows = random_betas(field, f, r, beta_rng);
    }
    std::optional<PlanShape> reference;
    for (std::uint32_t star = 0; star < f; ++star) {
      Rng rng(seed);
      SymbolMask mask = build_mask(s, rng);
      PcPlan plan = eliminate_redundancy(field, generate_full_blocks(field, n, f, star, mask, rng), rows, r, mutant);
      PlanShape shape = plan_shape(plan);
      ++rep.plans_checked;
      if (!reference) {
        reference = shape;
        if (rep.kept_per_server.empty()) {
          for (const auto& per_round : shape.kept) {
            std::uint32_t total = 0;
            for (auto c : per_round) total += c;
            rep.kept_per_server.push_back(total);
          }
          rep.drops_per_round = shape.dropped.front();
        }
        continue;
      }
      std::string where = "seed " + std::to_string(seed) + ", f* = " + std::to_string(star);
      if (shape.kept != reference->kept || shape.dropped != reference->dropped) {
        rep.counts_identical = false;
        rep.findings.push_back(where + ": kept/dropped counts differ");
      }
      if (shape.terms != reference->terms) {
        rep.terms_identical = false;
        rep.findings.push_back(where + ": terms per expression differ");
      }
      if (shape.function_sets != reference->function_sets) {
        rep.function_sets_identical = false;
        rep.findings.push_back(where + ": kept function sets differ");
      }
    }
  }
  return rep;
}

struct TvParams {
  std::uint64_t q = 5;
  std::uint32_t k = 3;
  std::uint32_t d = 2;
  std::uint32_t n = 2;
  std::uint64_t samples = 100000;
  std::uint64_t root_seed = 1;
  double threshold = 0.05;
  QueryMutant mutant = QueryMutant::None;
  /// Fixed demand coefficients instead of uniform ones. The scheme's guarantee is over
  /// uniformly drawn coefficients, so this mode is expected to show a gap.
  std::optional<std::vector<Elem>> fixed_coeffs;
};

struct TvPair {
  Subset a;
  Subset b;
  double tv = 0.0;
  std::uint32_t worst_server = 0;
};

struct PrivacyReport {
  bool structural_pass = false;
  StructureReport structure;
  ShapeReport shape;
  double tv_estimate = 0.0;
  double same_demand_tv = 0.0;
  std::uint64_t samples = 0;
  double threshold = 0.05;
  std::size_t signature_bins = 0;
  std::vector<TvPair> pairs;

  bool tv_pass() const { return tv_estimate < threshold; }
};

/// Coarse view of one server's query that the honest scheme's private randomness cannot
/// move between demands: quadratic-residue bits of the GRS multipliers and of each
/// function's leading coefficient, plus the multiset of (round, function set) of the
/// downloaded expressions. Symbol indices and signs are masked away entirely.
class SignatureSpace {
 public:
  std::uint32_t intern(const QueryBundle& bundle, const PrimeField& field) {
    std::uint32_t alpha_bits = 0, beta_bits = 0;
    for (std::uint32_t j = 0; j < bundle.k; ++j) alpha_bits |= std::uint32_t{field.is_quadratic_residue(bundle.q_vectors[0][j])} << j;
    for (std::uint32_t f = 0; f < bundle.f; ++f) beta_bits |= std::uint32_t{field.is_quadratic_residue(bundle.betas[f][bundle.r - 1])} << f;
    std::vector<std::uint32_t> key{alpha_bits, beta_bits};
    std::vector<std::uint32_t> sets;
    for (const Expression& e : bundle.expressions) sets.push_back((e.round << 24) | e.function_set());
    std::sort(sets.begin(), sets.end());
    key.insert(key.end(), sets.begin(), sets.end());
    auto [it, inserted] = ids_.try_emplace(std::move(key), static_cast<std::uint32_t>(ids_.size()));
    if (ids_.size() > (std::size_t{1} << 20)) throw ParamsTooLarge("signature space exceeds 2^20");
    return it->second;
  }

  std::size_t size() const { return ids_.size(); }

 private:
  std::map<std::vector<std::uint32_t>, std::uint32_t> ids_;
};

using SignatureHistogram = std::vector<std::unordered_map<std::uint32_t, std::uint64_t>>;  // per server

inline SignatureHistogram sample_signatures(const TvParams& p, const Subset& support, std::uint64_t tag,
                                            SignatureSpace& space) {
  PrimeField field(p.q);
  SignatureHistogram hist(p.n);
  RunOptions options;
  options.mutant = p.mutant;
  for (std::uint64_t i = 0; i < p.samples; ++i) {
    std::uint64_t seed = derive_seed(p.root_seed, (tag << 32) + i);
    Rng coeff_rng(derive_seed(seed, 0x76));
    Demand demand{support, {}};
    if (p.fixed_coeffs) {
      demand.coeffs = *p.fixed_coeffs;
    } else {
      for (std::size_t j = 0; j < support.size(); ++j) demand.coeffs.push_back(1 + coeff_rng.below(p.q - 1));
    }
    UserSession session(field, p.k, p.n, demand, seed, options);
    for (std::uint32_t srv = 0; srv < p.n; ++srv) ++hist[srv][space.intern(session.query_for(srv), field)];
  }
  return hist;
}

inline double total_variation(const std::unordered_map<std::uint32_t, std::uint64_t>& a,
                              const std::unordered_map<std::uint32_t, std::uint64_t>& b, std::uint64_t na,
                              std::uint64_t nb) {
  std::set<std::uint32_t> keys;
  for (auto& [key, _] : a) keys.insert(key);
  for (auto& [key, _] : b) keys.insert(key);
  double sum = 0.0;
  for (auto key : keys) {
    auto ia = a.find(key);
    auto ib = b.find(key);
    double pa = ia == a.end() ? 0.0 : static_cast<double>(ia->second) / static_cast<double>(na);
    double pb = ib == b.end() ? 0.0 : static_cast<double>(ib->second) / static_cast<double>(nb);
    sum += std::fabs(pa - pb);
  }
  return sum / 2.0;
}

/// Monte-Carlo estimate of the largest per-server total-variation distance between the
/// signature distributions of two demands. Empty `pairs` means every pair of D-subsets.
inline PrivacyReport tv_privacy_test(const TvParams& p, std::vector<std::pair<Subset, Subset>> pairs = {}) {
  if (p.k + binomial(p.k, p.d) > 20) throw ParamsTooLarge("signature space exceeds 2^20");
  if (p.samples == 0) throw std::invalid_argument("need at least one sample");
  PrimeField field(p.q);
  auto subsets = enumerate_subsets(p.k, p.d);
  if (pairs.empty()) {
    for (std::size_t i = 0; i < subsets.size(); ++i) {
      for (std::size_t j = i + 1; j < subsets.size(); ++j) pairs.emplace_back(subsets[i], subsets[j]);
    }
  }
  PrivacyReport rep;
  rep.samples = p.samples;
  rep.threshold = p.threshold;

  SignatureSpace space;
  std::map<Subset, SignatureHistogram> by_support;
  auto histogram = [&](const Subset& w) -> const SignatureHistogram& {
    auto it = by_support.find(w);
    if (it != by_support.end()) return it->second;
    auto pos = static_cast<std::uint64_t>(std::find(subsets.begin(), subsets.end(), w) - subsets.begin());
    if (pos == subsets.size()) throw InvalidDemand("pair member is not a D-subset of [K]");
    return by_support.emplace(w, sample_signatures(p, w, pos + 1, space)).first->second;
  };

  for (const auto& [a, b] : pairs) {
    const auto& ha = histogram(a);
    const auto& hb = histogram(b);
    TvPair pair{a, b, 0.0, 0};
    for (std::uint32_t srv = 0; srv < p.n; ++srv) {
      double tv = total_variation(ha[srv], hb[srv], p.samples, p.samples);
      if (tv > pair.tv) {
        pair.tv = tv;
        pair.worst_server = srv;
      }
    }
    rep.tv_estimate = std::max(rep.tv_estimate, pair.tv);
    rep.pairs.push_back(std::move(pair));
  }

  // Estimator noise floor: two independent sample sets of the same demand.
  if (!pairs.empty()) {
    const Subset& w = pairs.front().first;
    const auto& first = histogram(w);
    SignatureHistogram second = sample_signatures(p, w, 0xffff, space);
    for (std::uint32_t srv = 0; srv < p.n; ++srv)
      rep.same_demand_tv = std::max(rep.same_demand_tv, total_variation(first[srv], second[srv], p.samples, p.samples));
  }
  rep.signature_bins = space.size();

  // Structural side of the report, on one instance of the same parameters.
  Rng rng(p.root_seed);
  Demand demand = random_demand(field, p.k, p.d, rng);
  QuerySetup setup = build_query_setup(field, p.k, demand, rng, {}, p.mutant);
  rep.structure = check_support_structure(field, setup.spec, setup.table);
  const auto f = static_cast<std::uint32_t>(setup.table.size());
  rep.shape = check_shape_independence(p.n, f, p.k - p.d + 1, {p.root_seed}, p.mutant);
  rep.structural_pass = rep.structure.pass() && rep.shape.pass();
  return rep;
}

struct RateReport {
  Rational measured;
  Rational capacity;
  bool equal = false;
};

inline RateReport measure_rate(const Transcript& t) {
  RateReport rep;
  rep.measured = Rational(static_cast<std::int64_t>(t.s), static_cast<std::int64_t>(t.total_downloaded));
  rep.capacity = plt_capacity_L1(t.n_servers, t.k, t.d).value;
  rep.equal = rep.measured == rep.capacity;
  return rep;
}

}  // namespace plt
