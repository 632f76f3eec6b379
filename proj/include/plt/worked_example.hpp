#pragma once

#include <cstdint>
#include <vector>

#include "plt/engine.hpp"

namespace plt {

/// The small reference instance used by `plt example1` and the golden tests:
/// GF(5), K = 4, D = 3, N = 2, demand 2X1 + X2 + X3 with every random choice pinned.
struct WorkedExample {
  std::uint64_t q = 5;
  std::uint32_t k = 4;
  std::uint32_t n = 2;
  Demand demand{{1, 2, 3}, {2, 1, 1}};
  RunOptions options;

  std::vector<Elem> expect_p{2, 1};
  std::vector<Elem> expect_alpha{1, 2, 4, 2};
  Matrix expect_q{{1, 2, 4, 2}, {0, 2, 3, 1}};
  Matrix expect_beta{{4, 2}, {3, 1}, {1, 4}, {0, 3}};
  Matrix expect_y{{4, 2, 2, 0}, {3, 3, 0, 2}, {1, 0, 1, 1}, {0, 1, 4, 3}};
  std::size_t expect_star_index = 0;
  Elem expect_star_scalar = 2;
  Elem expect_demand_scale = 3;
  std::uint64_t expect_per_server = 12;
  std::vector<std::uint32_t> expect_drops{2, 1, 0, 0};

  WorkedExample() {
    options.overrides.omegas = std::vector<Elem>{0, 1, 2, 3};
    options.overrides.alphas[4] = 2;
    options.overrides.scalars = {{0, 2}, {1, 1}, {2, 4}, {3, 3}};
  }

  PrimeField field() const { return PrimeField(q); }
};

}  // namespace plt
