#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "plt/field.hpp"
#include "plt/grs.hpp"
#include "plt/linalg.hpp"
#include "plt/rng.hpp"

namespace plt {

class SizeGuard : public std::length_error {
 public:
  explicit SizeGuard(const std::string& what) : std::length_error("SizeGuard: " + what) {}
};

class InternalInvariant : public std::logic_error {
 public:
  explicit InternalInvariant(const std::string& what) : std::logic_error("InternalInvariant: " + what) {}
};

class BadIndex : public std::out_of_range {
 public:
  explicit BadIndex(const std::string& what) : std::out_of_range("BadIndex: " + what) {}
};

class Undecodable : public std::runtime_error {
 public:
  explicit Undecodable(const std::string& what) : std::runtime_error("Undecodable: " + what) {}
};

struct SizeLimits {
  std::uint32_t max_functions = 20;
  std::uint64_t max_bytes = std::uint64_t{256} << 20;
};

/// N^F, or nullopt on overflow past 2^32.
inline std::optional<std::uint64_t> block_length(std::uint32_t n, std::uint32_t f) {
  std::uint64_t s = 1;
  for (std::uint32_t i = 0; i < f; ++i) {
    s *= n;
    if (s > 0xffffffffULL) return std::nullopt;
  }
  return s;
}

/// Checks S = N^F against the limits: r*S super-message symbols and F*S expression terms.
inline std::uint64_t check_size(std::uint32_t n, std::uint32_t f, std::uint32_t r, const SizeLimits& limits = {}) {
  if (n < 1 || f < 1) throw std::invalid_argument("need N >= 1 and F >= 1");
  if (f > limits.max_functions)
    throw SizeGuard("F = " + std::to_string(f) + " exceeds " + std::to_string(limits.max_functions));
  auto s = block_length(n, f);
  if (!s) throw SizeGuard("S = N^F overflows 32 bits");
  if (std::uint64_t(r) * *s * 8 > limits.max_bytes) throw SizeGuard("r*S*8 bytes exceeds the configured bound");
  if (std::uint64_t(f) * *s * 16 > limits.max_bytes) throw SizeGuard("expression table exceeds the configured bound");
  return *s;
}

/// Symbols per server after elimination: S * (1/N + ... + 1/N^r).
inline std::uint64_t expected_download_per_server(std::uint32_t n, std::uint32_t f, std::uint32_t r) {
  std::uint64_t total = 0;
  for (std::uint32_t t = 1; t <= r; ++t) total += *block_length(n, f - t);
  return total;
}

struct SymbolMask {
  std::vector<std::uint32_t> perm;
  std::vector<std::int8_t> signs;

  std::size_t size() const { return perm.size(); }
};

/// Fisher-Yates permutation, then one independent sign per position.
inline SymbolMask build_mask(std::uint64_t s, Rng& rng) {
  if (s < 1) throw std::invalid_argument("build_mask needs S >= 1");
  SymbolMask mask;
  mask.perm.resize(s);
  for (std::uint64_t i = 0; i < s; ++i) mask.perm[i] = static_cast<std::uint32_t>(i);
  for (std::uint64_t i = s - 1; i > 0; --i) std::swap(mask.perm[i], mask.perm[rng.below(i + 1)]);
  mask.signs.resize(s);
  for (auto& sg : mask.signs) sg = rng.coin() ? -1 : 1;
  return mask;
}

struct Term {
  std::uint32_t f = 0;
  std::uint32_t s = 0;
  Elem coeff = 0;
  friend bool operator==(const Term&, const Term&) = default;
};

struct Expression {
  std::vector<Term> terms;
  std::uint32_t round = 0;

  std::uint32_t function_set() const {
    std::uint32_t m = 0;
    for (const Term& t : terms) m |= 1u << t.f;
    return m;
  }
  friend bool operator==(const Expression&, const Expression&) = default;
};

/// Subsets of the F function indices as bitmasks, ranked in lexicographic order per size.
class SubsetIndex {
 public:
  explicit SubsetIndex(std::uint32_t f) : f_(f), by_size_(f + 1), rank_(std::size_t{1} << f, 0) {
    for (std::uint32_t k = 0; k <= f; ++k) {
      auto& list = by_size_[k];
      std::vector<std::uint32_t> cur(k);
      for (std::uint32_t i = 0; i < k; ++i) cur[i] = i;
      for (;;) {
        std::uint32_t mask = 0;
        for (auto e : cur) mask |= 1u << e;
        rank_[mask] = static_cast<std::uint32_t>(list.size());
        list.push_back(mask);
        std::int64_t i = static_cast<std::int64_t>(k) - 1;
        while (i >= 0 && cur[i] == f - k + static_cast<std::uint32_t>(i)) --i;
        if (i < 0) break;
        ++cur[i];
        for (std::uint32_t j = static_cast<std::uint32_t>(i) + 1; j < k; ++j) cur[j] = cur[j - 1] + 1;
      }
    }
  }

  std::uint32_t functions() const { return f_; }
  const std::vector<std::uint32_t>& of_size(std::uint32_t k) const { return by_size_[k]; }
  std::uint32_t rank(std::uint32_t mask) const { return rank_[mask]; }

 private:
  std::uint32_t f_;
  std::vector<std::vector<std::uint32_t>> by_size_;
  std::vector<std::uint32_t> rank_;
};

/// Alternating sign of f inside t-subset T, counting positions in the order where the
/// demanded function comes first. This is what makes the side information cancel.
inline int koszul_sign(std::uint32_t f, std::uint32_t set, std::uint32_t f_star) {
  if (f == f_star) return 1;
  std::uint32_t before = set & ((1u << f) - 1) & ~(1u << f_star);
  int count = std::popcount(before) + ((set >> f_star) & 1u);
  return (count & 1) ? -1 : 1;
}

/// One copy of the round-t query structure at one server. Round-1 copies have no parent.
struct Block {
  std::uint32_t server = 0;
  std::uint32_t round = 0;
  std::uint32_t copy = 0;
  std::uint32_t parent_server = 0;
  std::uint32_t parent_copy = 0;
  std::vector<std::uint32_t> positions;  // mask positions, by rank of (round-1)-subset
  std::vector<Expression> expressions;   // by rank of round-subset
  std::vector<std::int8_t> epsilon;      // per-expression sign folded into the coefficients
  std::vector<std::int64_t> answer_slot; // index into the server's download, -1 if dropped
};

struct FullBlocks {
  std::uint32_t n_servers = 0;
  std::uint32_t n_functions = 0;
  std::uint64_t symbols = 0;
  std::uint32_t f_star = 0;
  std::vector<std::vector<std::vector<Block>>> blocks;  // [server][round-1][copy]

  std::size_t expression_count(std::uint32_t server) const {
    std::size_t total = 0;
    for (const auto& round : blocks[server]) {
      for (const Block& b : round) total += b.expressions.size();
    }
    return total;
  }
};

/// Pre-elimination query structure. A round-t copy is parented by a round-(t-1) copy at a
/// different server; its positions are indexed by (t-1)-subsets U of the functions: fresh
/// when U misses f*, otherwise shared with the parent's position for U minus f*. Fresh
/// positions are numbered by round, server, copy, then U.
inline FullBlocks generate_full_blocks(const PrimeField& field, std::uint32_t n, std::uint32_t f,
                                       std::uint32_t f_star, const SymbolMask& mask, Rng& rng,
                                       const SizeLimits& limits = {}) {
  const std::uint64_t s = check_size(n, f, 1, limits);
  if (f_star >= f) throw std::invalid_argument("f_star out of range");
  if (mask.size() != s) throw std::invalid_argument("mask length must equal S");
  SubsetIndex subsets(f);
  const std::uint32_t star_bit = 1u << f_star;

  FullBlocks out;
  out.n_servers = n;
  out.n_functions = f;
  out.symbols = s;
  out.f_star = f_star;
  out.blocks.assign(n, std::vector<std::vector<Block>>(f));

  std::uint64_t next_fresh = 0;
  for (std::uint32_t t = 1; t <= f; ++t) {
    const auto& prev_sets = subsets.of_size(t - 1);
    for (std::uint32_t srv = 0; srv < n; ++srv) {
      std::vector<std::pair<std::uint32_t, std::uint32_t>> parents;
      if (t == 1) {
        parents.emplace_back(0, 0);
      } else {
        for (std::uint32_t ps = 0; ps < n; ++ps) {
          if (ps == srv) continue;
          for (std::uint32_t pc = 0; pc < out.blocks[ps][t - 2].size(); ++pc) parents.emplace_back(ps, pc);
        }
      }
      for (std::uint32_t c = 0; c < parents.size(); ++c) {
        Block b;
        b.server = srv;
        b.round = t;
        b.copy = c;
        b.parent_server = parents[c].first;
        b.parent_copy = parents[c].second;
        b.positions.resize(prev_sets.size());
        const Block* parent = t == 1 ? nullptr : &out.blocks[b.parent_server][t - 2][b.parent_copy];
        for (std::uint32_t u = 0; u < prev_sets.size(); ++u) {
          std::uint32_t set = prev_sets[u];
          if (set & star_bit) {
            b.positions[u] = parent->positions[subsets.rank(set & ~star_bit)];
          } else {
            b.positions[u] = static_cast<std::uint32_t>(next_fresh++);
          }
        }
        out.blocks[srv][t - 1].push_back(std::move(b));
      }
    }
  }
  if (next_fresh != s) throw InternalInvariant("fresh positions " + std::to_string(next_fresh) + " != S");

  for (std::uint32_t t = 1; t <= f; ++t) {
    const auto& sets = subsets.of_size(t);
    for (std::uint32_t srv = 0; srv < n; ++srv) {
      for (Block& b : out.blocks[srv][t - 1]) {
        b.expressions.reserve(sets.size());
        b.epsilon.reserve(sets.size());
        for (std::uint32_t set : sets) {
          std::int8_t eps = rng.coin() ? -1 : 1;
          Expression e;
          e.round = t;
          for (std::uint32_t g = 0; g < f; ++g) {
            if (!((set >> g) & 1u)) continue;
            std::uint32_t pos = b.positions[subsets.rank(set & ~(1u << g))];
            int sign = koszul_sign(g, set, f_star) * mask.signs[pos] * eps;
            e.terms.push_back(Term{g, mask.perm[pos], field.sign(sign)});
          }
          b.expressions.push_back(std::move(e));
          b.epsilon.push_back(eps);
        }
      }
    }
  }
  return out;
}

/// Elimination result for one round, shared by every copy of that round.
struct LocalElimination {
  std::vector<bool> kept;                  // by rank of round-subset
  std::vector<Combination> certificates;   // dropped: (subset rank, lambda) over kept subsets
};

struct PcPlan {
  std::uint32_t n_servers = 0;
  std::uint32_t n_functions = 0;
  std::uint32_t r = 0;
  std::uint64_t symbols = 0;
  std::uint32_t f_star = 0;
  std::vector<std::vector<Expression>> per_server;
  FullBlocks full_blocks;
  std::vector<std::vector<std::uint32_t>> drop_counts;  // [server][round-1]
  std::vector<LocalElimination> rounds;
};

/// Local linear form of the round-t expression on set T over the fresh super-message
/// vectors z_U of one copy (r columns per (t-1)-subset U). For T holding f*, the part
/// coming from the parent copy is already known and left out.
inline Row local_form(const PrimeField& field, const SubsetIndex& subsets, const Matrix& betas, std::uint32_t r,
                      std::uint32_t set, std::uint32_t f_star) {
  const auto t = static_cast<std::uint32_t>(std::popcount(set));
  Row row(subsets.of_size(t - 1).size() * r, 0);
  auto place = [&](std::uint32_t g, int sign) {
    std::size_t base = std::size_t{subsets.rank(set & ~(1u << g))} * r;
    for (std::uint32_t j = 0; j < r; ++j) row[base + j] = sign > 0 ? betas[g][j] : field.neg(betas[g][j]);
  };
  if ((set >> f_star) & 1u) {
    place(f_star, 1);
  } else {
    for (std::uint32_t g = 0; g < subsets.functions(); ++g) {
      if ((set >> g) & 1u) place(g, koszul_sign(g, set, f_star));
    }
  }
  return row;
}

/// Keeps an expression iff it adds rank given the earlier rounds of every server and the
/// server's own round so far. That knowledge splits into one independent piece per copy,
/// so the greedy runs once per round on the local forms and is replayed on every copy.
inline PcPlan eliminate_redundancy(const PrimeField& field, FullBlocks blocks, const Matrix& betas, std::uint32_t r,
                                   QueryMutant mutant = QueryMutant::None) {
  const std::uint32_t n = blocks.n_servers, f = blocks.n_functions, f_star = blocks.f_star;
  if (betas.size() != f) throw std::invalid_argument("need one beta row per function");
  for (const Row& b : betas) {
    if (b.size() != r) throw std::invalid_argument("beta rows must have length r");
  }
  if (r < 1 || r > f) throw std::invalid_argument("need 1 <= r <= F");
  if (matrix_rank(field, betas) != r) throw std::invalid_argument("betas must have rank r");
  SubsetIndex subsets(f);

  PcPlan plan;
  plan.n_servers = n;
  plan.n_functions = f;
  plan.r = r;
  plan.symbols = blocks.symbols;
  plan.f_star = f_star;
  plan.per_server.assign(n, {});
  plan.drop_counts.assign(n, std::vector<std::uint32_t>(f, 0));

  for (std::uint32_t t = 1; t <= f; ++t) {
    const auto& sets = subsets.of_size(t);
    std::vector<std::uint32_t> order(sets.size());
    for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
    if (mutant == QueryMutant::StarFirstDropOrder) {
      std::stable_partition(order.begin(), order.end(), [&](std::uint32_t i) { return (sets[i] >> f_star) & 1u; });
    }
    LocalElimination local;
    local.kept.assign(sets.size(), false);
    local.certificates.assign(sets.size(), {});
    EchelonBasis basis(field, subsets.of_size(t - 1).size() * r);
    std::vector<std::uint32_t> accepted;
    for (std::uint32_t i : order) {
      auto ins = basis.insert(local_form(field, subsets, betas, r, sets[i], f_star));
      if (ins.independent) {
        local.kept[i] = true;
        accepted.push_back(i);
      } else {
        for (auto [a, lambda] : ins.certificate) local.certificates[i].emplace_back(accepted[a], lambda);
      }
    }
    std::uint32_t dropped = static_cast<std::uint32_t>(std::count(local.kept.begin(), local.kept.end(), false));
    for (std::uint32_t srv = 0; srv < n; ++srv) {
      for (Block& b : blocks.blocks[srv][t - 1]) {
        b.answer_slot.assign(sets.size(), -1);
        for (std::uint32_t i = 0; i < sets.size(); ++i) {
          if (!local.kept[i]) continue;
          b.answer_slot[i] = static_cast<std::int64_t>(plan.per_server[srv].size());
          plan.per_server[srv].push_back(b.expressions[i]);
        }
        plan.drop_counts[srv][t - 1] += dropped;
      }
    }
    plan.rounds.push_back(std::move(local));
  }

  const std::uint64_t expect = expected_download_per_server(n, f, r);
  for (std::uint32_t srv = 0; srv < n; ++srv) {
    if (plan.per_server[srv].size() != expect)
      throw InternalInvariant("server " + std::to_string(srv) + " keeps " + std::to_string(plan.per_server[srv].size()) +
                              " expressions, expected " + std::to_string(expect));
  }
  plan.full_blocks = std::move(blocks);
  return plan;
}

/// Evaluates expressions against the function symbol streams (F x S).
inline std::vector<Elem> pc_answer(const PrimeField& field, const std::vector<Expression>& expressions,
                                   const Matrix& functions) {
  std::vector<Elem> out;
  out.reserve(expressions.size());
  for (const Expression& e : expressions) {
    Elem acc = 0;
    for (const Term& t : e.terms) {
      if (t.f >= functions.size()) throw BadIndex("function index " + std::to_string(t.f));
      if (t.s >= functions[t.f].size()) throw BadIndex("symbol index " + std::to_string(t.s));
      acc = field.fma(acc, t.coeff, functions[t.f][t.s]);
    }
    out.push_back(acc);
  }
  return out;
}

/// Recovers all S symbols of the demanded function, in raw symbol order. Copies are
/// walked round by round so each parent's side information is known before its children.
inline std::vector<Elem> pc_decode(const PrimeField& field, const PcPlan& plan,
                                   const std::vector<std::vector<Elem>>& answers, const SymbolMask& mask) {
  const std::uint32_t n = plan.n_servers, f = plan.n_functions, f_star = plan.f_star;
  if (answers.size() != n) throw Undecodable("expected answers from " + std::to_string(n) + " servers");
  for (std::uint32_t srv = 0; srv < n; ++srv) {
    if (answers[srv].size() != plan.per_server[srv].size())
      throw Undecodable("server " + std::to_string(srv) + " answer length does not match its query");
  }
  if (mask.size() != plan.symbols) throw Undecodable("mask does not match the plan");
  SubsetIndex subsets(f);
  const std::uint32_t star_bit = 1u << f_star;
  const auto& blocks = plan.full_blocks.blocks;

  // core[srv][t-1][copy][rank] = value of the unsigned t-sum, masked symbols.
  std::vector<std::vector<std::vector<std::vector<Elem>>>> core(n, std::vector<std::vector<std::vector<Elem>>>(f));
  std::vector<Elem> out(plan.symbols, 0);
  std::vector<bool> seen(plan.symbols, false);

  for (std::uint32_t t = 1; t <= f; ++t) {
    const auto& sets = subsets.of_size(t);
    const LocalElimination& local = plan.rounds[t - 1];
    for (std::uint32_t srv = 0; srv < n; ++srv) {
      auto& round_core = core[srv][t - 1];
      round_core.resize(blocks[srv][t - 1].size());
      for (std::uint32_t c = 0; c < blocks[srv][t - 1].size(); ++c) {
        const Block& b = blocks[srv][t - 1][c];
        const std::vector<Elem>* parent = t == 1 ? nullptr : &core[b.parent_server][t - 2][b.parent_copy];
        auto side = [&](std::uint32_t i) -> Elem {
          if (t == 1 || !((sets[i] >> f_star) & 1u)) return 0;
          return (*parent)[subsets.rank(sets[i] & ~star_bit)];
        };
        std::vector<Elem> local_value(sets.size(), 0);
        for (std::uint32_t i = 0; i < sets.size(); ++i) {
          if (!local.kept[i]) continue;
          Elem a = answers[srv][static_cast<std::size_t>(b.answer_slot[i])];
          local_value[i] = field.add(field.mul(field.sign(b.epsilon[i]), a), side(i));
        }
        for (std::uint32_t i = 0; i < sets.size(); ++i) {
          if (local.kept[i]) continue;
          Elem acc = 0;
          for (auto [k, lambda] : local.certificates[i]) acc = field.fma(acc, lambda, local_value[k]);
          local_value[i] = acc;
        }
        auto& vals = round_core[c];
        vals.resize(sets.size());
        for (std::uint32_t i = 0; i < sets.size(); ++i) {
          vals[i] = field.sub(local_value[i], side(i));
          if (!((sets[i] >> f_star) & 1u)) continue;
          std::uint32_t pos = b.positions[subsets.rank(sets[i] & ~star_bit)];
          std::uint32_t raw = mask.perm[pos];
          if (seen[raw]) throw Undecodable("symbol " + std::to_string(raw) + " decoded twice");
          seen[raw] = true;
          out[raw] = field.mul(field.sign(mask.signs[pos]), local_value[i]);
        }
      }
    }
    // Cores two rounds back are no longer referenced.
    if (t >= 2) {
      for (auto& per_server : core) per_server[t - 2].clear();
    }
  }
  for (std::uint64_t s = 0; s < plan.symbols; ++s) {
    if (!seen[s]) throw Undecodable("symbol " + std::to_string(s) + " not covered by the plan");
  }
  return out;
}

}  // namespace plt
