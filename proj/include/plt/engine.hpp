#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <future>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "plt/capacity.hpp"
#include "plt/database.hpp"
#include "plt/field.hpp"
#include "plt/grs.hpp"
#include "plt/linalg.hpp"
#include "plt/pc_plan.hpp"
#include "plt/rational.hpp"
#include "plt/rng.hpp"
#include "plt/wire.hpp"

namespace plt {

class NoProtocol : public std::runtime_error {
 public:
  explicit NoProtocol(const std::string& what) : std::runtime_error("NoProtocol: " + what) {}
};

class DimensionMismatch : public std::invalid_argument {
 public:
  explicit DimensionMismatch(const std::string& what) : std::invalid_argument("DimensionMismatch: " + what) {}
};

struct RunOptions {
  QueryOverrides overrides;
  QueryMutant mutant = QueryMutant::None;
  SizeLimits limits;
  bool concurrent_servers = false;
};

/// User side of one protocol run: builds every server's query from the demand and a
/// seed, then turns the answers back into the demanded combination.
class UserSession {
 public:
  UserSession(const PrimeField& field, std::uint32_t k, std::uint32_t n_servers, const Demand& demand,
              std::uint64_t seed, const RunOptions& options = {})
      : field_(field), k_(k), n_(n_servers), demand_(demand), seed_(seed) {
    if (n_servers < 1) throw std::invalid_argument("need at least one server");
    demand.validate(field, k);
    const auto d = static_cast<std::uint32_t>(demand.support.size());
    const auto f = static_cast<std::uint32_t>(binomial(k, d));
    const std::uint32_t r = k - d + 1;
    s_ = check_size(n_servers, f, r, options.limits);
    if (field.modulus() < k) throw FieldTooSmall(field.modulus(), k);
    Rng rng(seed);
    setup_ = build_query_setup(field, k, demand, rng, options.overrides, options.mutant);
    mask_ = build_mask(s_, rng);
    FullBlocks blocks = generate_full_blocks(field, n_servers, f, static_cast<std::uint32_t>(setup_.table.star_index),
                                             mask_, rng, options.limits);
    plan_ = eliminate_redundancy(field, std::move(blocks), setup_.table.betas, r, options.mutant);
  }

  std::uint32_t servers() const { return n_; }
  std::uint32_t messages() const { return k_; }
  std::uint64_t block_length() const { return s_; }
  std::uint64_t seed() const { return seed_; }
  const PrimeField& field() const { return field_; }
  const Demand& demand() const { return demand_; }
  const QuerySetup& setup() const { return setup_; }
  const SymbolMask& mask() const { return mask_; }
  const PcPlan& plan() const { return plan_; }

  QueryBundle query_for(std::uint32_t server) const {
    if (server >= n_) throw std::out_of_range("server index");
    QueryBundle b;
    b.q = field_.modulus();
    b.k = k_;
    b.s = s_;
    b.r = static_cast<std::uint32_t>(setup_.spec.r);
    b.f = static_cast<std::uint32_t>(setup_.table.size());
    b.q_vectors = setup_.spec.q_vectors;
    b.betas = setup_.table.betas;
    b.expressions = plan_.per_server[server];
    return b;
  }

  /// Decoded symbols of the demanded function, then scaled back to the demand.
  std::vector<Elem> finish(const std::vector<std::vector<Elem>>& answers) const {
    for (const auto& a : answers) {
      for (Elem v : a) {
        if (!field_.contains(v)) throw Undecodable("answer symbol outside the field");
      }
    }
    std::vector<Elem> y_star = pc_decode(field_, plan_, answers, mask_);
    return recover_demand(field_, y_star, setup_.table.star_scalar);
  }

  static std::vector<Elem> recover_demand(const PrimeField& field, const std::vector<Elem>& y_star, Elem star_scalar) {
    Elem scale = field.inv(star_scalar);
    std::vector<Elem> out(y_star.size());
    for (std::size_t i = 0; i < y_star.size(); ++i) out[i] = field.mul(scale, y_star[i]);
    return out;
  }

 private:
  PrimeField field_;
  std::uint32_t k_;
  std::uint32_t n_;
  Demand demand_;
  std::uint64_t seed_;
  std::uint64_t s_ = 0;
  QuerySetup setup_{GrsSecret{{}, {}, Poly(field_)}, {}, {}};
  SymbolMask mask_;
  PcPlan plan_;
};

inline std::vector<Elem> recover_demand(const PrimeField& field, const std::vector<Elem>& y_star, Elem star_scalar) {
  return UserSession::recover_demand(field, y_star, star_scalar);
}

/// Super-messages Q*X (r x S).
inline Matrix super_messages(const PrimeField& field, const Matrix& q_vectors, const Database& db) {
  Matrix out(q_vectors.size(), Row(db.s, 0));
  for (std::size_t i = 0; i < q_vectors.size(); ++i) {
    for (std::uint32_t j = 0; j < db.k; ++j) {
      Elem a = q_vectors[i][j];
      if (a == 0) continue;
      const Row& x = db.symbols[j];
      Row& acc = out[i];
      for (std::uint64_t s = 0; s < db.s; ++s) acc[s] = field.fma(acc[s], a, x[s]);
    }
  }
  return out;
}

/// Function symbol streams beta * (Q*X), F x S.
inline Matrix function_streams(const PrimeField& field, const Matrix& betas, const Matrix& supers) {
  Matrix out(betas.size(), Row(supers.empty() ? 0 : supers.front().size(), 0));
  for (std::size_t f = 0; f < betas.size(); ++f) {
    for (std::size_t i = 0; i < supers.size(); ++i) {
      Elem b = betas[f][i];
      if (b == 0) continue;
      for (std::size_t s = 0; s < supers[i].size(); ++s) out[f][s] = field.fma(out[f][s], b, supers[i][s]);
    }
  }
  return out;
}

/// Server side: a pure function of the bundle and the database.
inline std::vector<Elem> server_answer(const Database& db, const QueryBundle& bundle) {
  if (bundle.q != db.field.modulus()) throw DimensionMismatch("field modulus differs from the database");
  if (bundle.k != db.k) throw DimensionMismatch("K differs from the database");
  if (bundle.s != db.s) throw DimensionMismatch("S differs from the database");
  if (bundle.q_vectors.size() != bundle.r || bundle.betas.size() != bundle.f)
    throw DimensionMismatch("bundle tables inconsistent");
  for (const Row& row : bundle.q_vectors) {
    if (row.size() != db.k) throw DimensionMismatch("Q row length");
  }
  for (const Row& row : bundle.betas) {
    if (row.size() != bundle.r) throw DimensionMismatch("beta row length");
  }
  if (bundle.expressions.empty()) return {};
  Matrix supers = super_messages(db.field, bundle.q_vectors, db);
  Matrix functions = function_streams(db.field, bundle.betas, supers);
  return pc_answer(db.field, bundle.expressions, functions);
}

/// V * X_W computed directly; the recoverability oracle.
inline std::vector<Elem> evaluate_demand(const Database& db, const Demand& demand) {
  std::vector<Elem> out(db.s, 0);
  for (std::size_t i = 0; i < demand.support.size(); ++i) {
    const Row& x = db.symbols.at(demand.support[i] - 1);
    for (std::uint64_t s = 0; s < db.s; ++s) out[s] = db.field.fma(out[s], demand.coeffs[i], x[s]);
  }
  return out;
}

struct ServerCounts {
  std::uint64_t query_bytes = 0;
  std::uint64_t answer_symbols = 0;
  friend bool operator==(const ServerCounts&, const ServerCounts&) = default;
};

struct Transcript {
  std::uint32_t n_servers = 0;
  std::uint32_t k = 0;
  std::uint32_t d = 0;
  std::uint64_t q = 0;
  std::uint64_t s = 0;
  std::uint64_t seed = 0;
  std::vector<ServerCounts> per_server;
  std::uint64_t total_downloaded = 0;
  Rational rate;
  std::vector<Elem> recovered;
  double elapsed_ms = 0.0;

  /// Equality ignoring timing.
  bool same_run(const Transcript& o) const {
    return n_servers == o.n_servers && k == o.k && d == o.d && q == o.q && s == o.s && seed == o.seed &&
           per_server == o.per_server && total_downloaded == o.total_downloaded && rate == o.rate &&
           recovered == o.recovered;
  }

  nlohmann::json to_json() const {
    nlohmann::json servers = nlohmann::json::array();
    for (const auto& c : per_server) servers.push_back({{"query_bytes", c.query_bytes}, {"answer_symbols", c.answer_symbols}});
    return {{"params", {{"N", n_servers}, {"K", k}, {"D", d}, {"q", q}, {"S", s}}},
            {"per_server", servers},
            {"rate", {{"num", rate.num()}, {"den", rate.den()}}},
            {"seed", seed}};
  }

  /// One JSON line, no timing fields.
  std::string json_line() const { return to_json().dump(); }
};

struct PltRun {
  Transcript transcript;
  std::vector<Elem> recovered;
};

/// Assembles a transcript from the queries that were sent and the answers that came back.
inline Transcript make_transcript(const UserSession& session, const std::vector<Bytes>& query_frames,
                                  const std::vector<std::vector<Elem>>& answers, std::vector<Elem> recovered,
                                  double elapsed_ms) {
  Transcript t;
  t.n_servers = session.servers();
  t.k = session.messages();
  t.d = static_cast<std::uint32_t>(session.demand().support.size());
  t.q = session.field().modulus();
  t.s = session.block_length();
  t.seed = session.seed();
  for (std::size_t i = 0; i < answers.size(); ++i) {
    t.per_server.push_back({query_frames[i].size(), answers[i].size()});
    t.total_downloaded += answers[i].size();
  }
  t.rate = Rational(static_cast<std::int64_t>(t.s), static_cast<std::int64_t>(t.total_downloaded));
  t.recovered = std::move(recovered);
  t.elapsed_ms = elapsed_ms;
  return t;
}

/// Full run with every server in process. Each server only ever sees its own bundle.
inline PltRun run_plt(const Database& db, const Demand& demand, std::uint32_t n_servers, std::uint64_t seed,
                      const RunOptions& options = {}) {
  auto start = std::chrono::steady_clock::now();
  UserSession session(db.field, db.k, n_servers, demand, seed, options);
  if (db.s != session.block_length())
    throw DimensionMismatch("message length " + std::to_string(db.s) + " != N^F = " +
                            std::to_string(session.block_length()));
  std::vector<Bytes> frames(n_servers);
  std::vector<std::vector<Elem>> answers(n_servers);
  if (options.concurrent_servers) {
    std::vector<std::future<std::vector<Elem>>> pending;
    for (std::uint32_t n = 0; n < n_servers; ++n) {
      QueryBundle bundle = session.query_for(n);
      frames[n] = encode_query(bundle);
      pending.push_back(std::async(std::launch::async, [&db, b = std::move(bundle)] { return server_answer(db, b); }));
    }
    for (std::uint32_t n = 0; n < n_servers; ++n) answers[n] = pending[n].get();
  } else {
    for (std::uint32_t n = 0; n < n_servers; ++n) {
      QueryBundle bundle = session.query_for(n);
      frames[n] = encode_query(bundle);
      answers[n] = server_answer(db, bundle);
    }
  }
  std::vector<Elem> recovered = session.finish(answers);
  double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  PltRun run;
  run.recovered = recovered;
  run.transcript = make_transcript(session, frames, answers, std::move(recovered), ms);
  return run;
}

/// Uniform demand: W uniform over D-subsets, coefficients uniform nonzero.
inline Demand random_demand(const PrimeField& field, std::uint32_t k, std::uint32_t d, Rng& rng) {
  auto subsets = enumerate_subsets(k, d);
  Demand demand;
  demand.support = subsets[rng.below(subsets.size())];
  for (std::uint32_t i = 0; i < d; ++i) demand.coeffs.push_back(1 + rng.below(field.modulus() - 1));
  return demand;
}

/// True iff every L x L submatrix on L of the D columns is nonsingular.
inline bool mds_check(const PrimeField& field, const Matrix& v) {
  if (v.empty()) return false;
  const std::size_t l = v.size(), d = v.front().size();
  if (l > d) throw std::invalid_argument("mds_check needs L <= D");
  for (const Row& row : v) {
    if (row.size() != d) throw std::invalid_argument("ragged matrix");
  }
  std::vector<std::uint32_t> cols(l);
  for (const Subset& subset : enumerate_subsets(static_cast<std::uint32_t>(d), static_cast<std::uint32_t>(l))) {
    Matrix minor(l, Row(l));
    for (std::size_t i = 0; i < l; ++i) {
      for (std::size_t j = 0; j < l; ++j) minor[i][j] = v[i][subset[j] - 1];
    }
    if (matrix_rank(field, minor) != l) return false;
  }
  return true;
}

/// User already holds `side_indices`' messages and wants the `wanted` ones.
struct SideInfoInstance {
  std::vector<std::uint32_t> wanted;        // 1-based
  std::vector<std::uint32_t> side_indices;  // 1-based
  Matrix side_values;                       // M x S

  void validate(const Database& db) const {
    if (wanted.empty()) throw std::invalid_argument("need at least one wanted message");
    if (wanted.size() + side_indices.size() > db.k) throw std::invalid_argument("P + M exceeds K");
    std::vector<std::uint32_t> all = wanted;
    all.insert(all.end(), side_indices.begin(), side_indices.end());
    std::sort(all.begin(), all.end());
    if (std::adjacent_find(all.begin(), all.end()) != all.end())
      throw std::invalid_argument("wanted and side indices must be distinct");
    if (all.front() < 1 || all.back() > db.k) throw std::invalid_argument("message index out of range");
    if (side_values.size() != side_indices.size()) throw std::invalid_argument("side values must match side indices");
    for (const Row& row : side_values) {
      if (row.size() != db.s) throw std::invalid_argument("side value length must be S");
    }
  }

  static SideInfoInstance from_database(const Database& db, std::vector<std::uint32_t> wanted,
                                        std::vector<std::uint32_t> side) {
    SideInfoInstance inst{std::move(wanted), std::move(side), {}};
    for (auto j : inst.side_indices) inst.side_values.push_back(db.symbols.at(j - 1));
    return inst;
  }
};

/// A PLT protocol for dimension L: given W and an L x D coefficient matrix, returns the
/// L rows of V * X_W (L x S) and the rate it achieved.
struct PltResult {
  Matrix combinations;
  Rational rate;
};
using PltProtocol = std::function<PltResult(const Database&, const Subset&, const Matrix&, std::uint32_t, std::uint64_t)>;

/// Protocols shipped with the toolkit: only L = 1.
inline std::optional<PltProtocol> shipped_protocol(std::size_t dimension) {
  if (dimension != 1) return std::nullopt;
  return PltProtocol([](const Database& db, const Subset& support, const Matrix& v, std::uint32_t n, std::uint64_t seed) {
    PltRun run = run_plt(db, Demand{support, v.at(0)}, n, seed);
    return PltResult{{run.recovered}, run.transcript.rate};
  });
}

/// Solves A * Y = B for Y with A square and nonsingular (B has S columns).
inline Matrix solve_square(const PrimeField& field, Matrix a, Matrix b) {
  const std::size_t l = a.size();
  for (std::size_t col = 0; col < l; ++col) {
    std::size_t piv = col;
    while (piv < l && a[piv][col] == 0) ++piv;
    if (piv == l) throw std::domain_error("singular system");
    std::swap(a[piv], a[col]);
    std::swap(b[piv], b[col]);
    Elem inv = field.inv(a[col][col]);
    for (auto& v : a[col]) v = field.mul(v, inv);
    for (auto& v : b[col]) v = field.mul(v, inv);
    for (std::size_t i = 0; i < l; ++i) {
      if (i == col || a[i][col] == 0) continue;
      Elem factor = field.neg(a[i][col]);
      for (std::size_t j = 0; j < l; ++j) a[i][j] = field.fma(a[i][j], factor, a[col][j]);
      for (std::size_t j = 0; j < b[i].size(); ++j) b[i][j] = field.fma(b[i][j], factor, b[col][j]);
    }
  }
  return b;
}

struct SideInfoResult {
  Matrix messages;  // P x S, in the order of `wanted`
  Rational rate;
  Matrix coefficients;  // the L x D matrix that was used
};

/// Multi-message PIR with side information on top of a PLT protocol: pick a random MDS
/// V over W = wanted + side, run the protocol, strip the side information, solve L x L.
inline SideInfoResult mpir_psi_wrapper(const Database& db, const SideInfoInstance& instance, std::uint32_t n_servers,
                                       std::uint64_t seed, const PltProtocol* protocol = nullptr) {
  instance.validate(db);
  const PrimeField& field = db.field;
  const std::size_t l = instance.wanted.size();
  std::optional<PltProtocol> shipped;
  if (protocol == nullptr) {
    shipped = shipped_protocol(l);
    if (!shipped) throw NoProtocol("no PLT protocol for L = " + std::to_string(l));
    protocol = &*shipped;
  }
  Subset support = instance.wanted;
  support.insert(support.end(), instance.side_indices.begin(), instance.side_indices.end());
  std::sort(support.begin(), support.end());
  const std::size_t d = support.size();

  Rng rng(derive_seed(seed, 0x4d445321));
  Matrix v;
  do {
    v.assign(l, Row(d));
    for (auto& row : v) {
      for (auto& x : row) x = rng.below(field.modulus());
    }
  } while (!mds_check(field, v));

  PltResult result = (*protocol)(db, support, v, n_servers, derive_seed(seed, 1));
  if (result.combinations.size() != l) throw std::runtime_error("protocol returned the wrong number of rows");

  auto column_of = [&](std::uint32_t j) {
    return static_cast<std::size_t>(std::lower_bound(support.begin(), support.end(), j) - support.begin());
  };
  Matrix rhs = result.combinations;
  for (std::size_t m = 0; m < instance.side_indices.size(); ++m) {
    std::size_t col = column_of(instance.side_indices[m]);
    for (std::size_t i = 0; i < l; ++i) {
      Elem neg = field.neg(v[i][col]);
      for (std::uint64_t s = 0; s < db.s; ++s) rhs[i][s] = field.fma(rhs[i][s], neg, instance.side_values[m][s]);
    }
  }
  Matrix a(l, Row(l));
  for (std::size_t i = 0; i < l; ++i) {
    for (std::size_t p = 0; p < l; ++p) a[i][p] = v[i][column_of(instance.wanted[p])];
  }
  return SideInfoResult{solve_square(field, std::move(a), std::move(rhs)), result.rate, v};
}

struct PirPsiResult {
  std::vector<Elem> message;
  Transcript transcript;
  std::vector<Elem> coefficients;
};

/// Single-message PIR with D-1 side messages through one PLT run:
/// X_p = v_p^{-1} (Z - sum_{j in side} v_j X_j).
inline PirPsiResult run_pir_psi_via_plt(const Database& db, const SideInfoInstance& instance, std::uint32_t n_servers,
                                        std::uint64_t seed, const RunOptions& options = {}) {
  instance.validate(db);
  if (instance.wanted.size() != 1) throw NoProtocol("PIR-PSI through PLT needs exactly one wanted message");
  const PrimeField& field = db.field;
  Demand demand;
  demand.support = instance.wanted;
  demand.support.insert(demand.support.end(), instance.side_indices.begin(), instance.side_indices.end());
  std::sort(demand.support.begin(), demand.support.end());
  Rng rng(derive_seed(seed, 0x4d445321));
  for (std::size_t i = 0; i < demand.support.size(); ++i) demand.coeffs.push_back(1 + rng.below(field.modulus() - 1));

  PltRun run = run_plt(db, demand, n_servers, seed, options);
  std::vector<Elem> z = run.recovered;
  Elem v_p = 0;
  for (std::size_t i = 0; i < demand.support.size(); ++i) {
    std::uint32_t j = demand.support[i];
    if (j == instance.wanted[0]) {
      v_p = demand.coeffs[i];
      continue;
    }
    std::size_t m = static_cast<std::size_t>(
        std::find(instance.side_indices.begin(), instance.side_indices.end(), j) - instance.side_indices.begin());
    Elem neg = field.neg(demand.coeffs[i]);
    for (std::uint64_t s = 0; s < db.s; ++s) z[s] = field.fma(z[s], neg, instance.side_values[m][s]);
  }
  Elem inv = field.inv(v_p);
  for (auto& x : z) x = field.mul(x, inv);
  return PirPsiResult{std::move(z), std::move(run.transcript), std::move(demand.coeffs)};
}

}  // namespace plt
