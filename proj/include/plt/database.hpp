#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "plt/field.hpp"
#include "plt/linalg.hpp"
#include "plt/pc_plan.hpp"
#include "plt/rng.hpp"

namespace plt {

/// K messages of S symbols each, replicated at every server.
struct Database {
  PrimeField field{2};
  std::uint32_t k = 0;
  std::uint64_t s = 0;
  Matrix symbols;  // K x S

  Database() = default;
  Database(const PrimeField& f, std::uint32_t messages, std::uint64_t length, Matrix data)
      : field(f), k(messages), s(length), symbols(std::move(data)) {
    validate();
  }

  void validate() const {
    if (symbols.size() != k) throw std::invalid_argument("database must hold K messages");
    for (const Row& row : symbols) {
      if (row.size() != s) throw std::invalid_argument("every message must have S symbols");
      for (Elem v : row) {
        if (!field.contains(v)) throw std::invalid_argument("database symbol not canonical");
      }
    }
  }

  /// Uniform messages from a seed.
  static Database random(const PrimeField& f, std::uint32_t messages, std::uint64_t length, std::uint64_t seed) {
    Rng rng(seed);
    Matrix data(messages, Row(length));
    for (auto& row : data) {
      for (auto& v : row) v = rng.below(f.modulus());
    }
    return Database(f, messages, length, std::move(data));
  }

  friend bool operator==(const Database& a, const Database& b) {
    return a.field == b.field && a.k == b.k && a.s == b.s && a.symbols == b.symbols;
  }
};

/// What one server receives. Q and beta are identical across servers; only the
/// expressions differ.
struct QueryBundle {
  std::uint64_t q = 0;
  std::uint32_t k = 0;
  std::uint64_t s = 0;
  std::uint32_t r = 0;
  std::uint32_t f = 0;
  Matrix q_vectors;  // r x K
  Matrix betas;      // F x r
  std::vector<Expression> expressions;

  friend bool operator==(const QueryBundle&, const QueryBundle&) = default;
};

}  // namespace plt
