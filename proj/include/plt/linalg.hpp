#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "plt/field.hpp"

namespace plt {

using Row = std::vector<Elem>;
using Matrix = std::vector<Row>;

/// Sparse linear combination: (index, coefficient) pairs with nonzero coefficients.
using Combination = std::vector<std::pair<std::size_t, Elem>>;

/// Incrementally maintained row-echelon basis. Every accepted row keeps its
/// expression in terms of the accepted originals, so a rejected row comes
/// back with a certificate writing it as a combination of earlier accepted rows.
class EchelonBasis {
 public:
  struct Insertion {
    bool independent = false;
    /// Position among accepted rows when independent; otherwise unused.
    std::size_t accepted_index = 0;
    /// When dependent: row == sum coeff * accepted[index].
    Combination certificate;
  };

  EchelonBasis(const PrimeField& field, std::size_t ncols)
      : field_(field), ncols_(ncols), pivot_of_col_(ncols, kNone) {}

  std::size_t rank() const { return basis_.size(); }
  std::size_t cols() const { return ncols_; }

  Insertion insert(Row row) {
    check_width(row);
    Row acc = reduce(row);
    Insertion out;
    std::size_t lead = leading(row);
    if (lead == ncols_) {
      out.certificate = to_combination(acc);
      return out;
    }
    // new basis row = (row_orig - acc . accepted) / lead_value
    Elem lead_inv = field_.inv(row[lead]);
    for (Elem& v : row) v = field_.mul(v, lead_inv);
    std::size_t idx = accepted_;
    Row combo(idx + 1, 0);
    for (std::size_t j = 0; j < acc.size(); ++j) combo[j] = field_.neg(field_.mul(acc[j], lead_inv));
    combo[idx] = lead_inv;
    pivot_of_col_[lead] = basis_.size();
    basis_.push_back(std::move(row));
    combos_.push_back(std::move(combo));
    ++accepted_;
    out.independent = true;
    out.accepted_index = idx;
    return out;
  }

  /// Combination of accepted rows equal to `row`, or nullopt if outside the span.
  std::optional<Combination> express(Row row) const {
    check_width(row);
    Row acc = reduce(row);
    if (leading(row) != ncols_) return std::nullopt;
    return to_combination(acc);
  }

  bool in_span(Row row) const { return express(std::move(row)).has_value(); }

 private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  void check_width(const Row& row) const {
    if (row.size() != ncols_) throw std::invalid_argument("row width mismatch");
  }

  std::size_t leading(const Row& row) const {
    for (std::size_t c = 0; c < ncols_; ++c) {
      if (row[c] != 0) return c;
    }
    return ncols_;
  }

  /// Eliminates pivots from `row` in column order; returns the accumulated
  /// combination so that row_orig = acc . accepted + row_residual.
  Row reduce(Row& row) const {
    Row acc(accepted_, 0);
    for (std::size_t c = 0; c < ncols_; ++c) {
      if (row[c] == 0 || pivot_of_col_[c] == kNone) continue;
      std::size_t b = pivot_of_col_[c];
      Elem factor = row[c];
      Elem neg_factor = field_.neg(factor);
      const Row& brow = basis_[b];
      for (std::size_t k = c; k < ncols_; ++k) {
        if (brow[k] != 0) row[k] = field_.fma(row[k], neg_factor, brow[k]);
      }
      const Row& combo = combos_[b];
      for (std::size_t j = 0; j < combo.size(); ++j) {
        if (combo[j] != 0) acc[j] = field_.fma(acc[j], factor, combo[j]);
      }
    }
    return acc;
  }

  static Combination to_combination(const Row& acc) {
    Combination out;
    for (std::size_t j = 0; j < acc.size(); ++j) {
      if (acc[j] != 0) out.emplace_back(j, acc[j]);
    }
    return out;
  }

  PrimeField field_;
  std::size_t ncols_;
  std::size_t accepted_ = 0;
  std::vector<std::size_t> pivot_of_col_;
  Matrix basis_;
  Matrix combos_;
};

struct TargetResult {
  bool in_span = false;
  /// One coefficient per input row (zero for rows not used); empty if not in span.
  Row coefficients;
};

struct SolveReport {
  std::size_t rank = 0;
  std::vector<TargetResult> targets;
};

/// Row-reduces `rows` and reports, for each target functional, whether it lies
/// in the row span and, if so, one combination of the rows producing it.
inline SolveReport gaussian_solve(const PrimeField& field, const Matrix& rows, const Matrix& targets) {
  std::size_t ncols = rows.empty() ? (targets.empty() ? 0 : targets.front().size()) : rows.front().size();
  EchelonBasis basis(field, ncols);
  std::vector<std::size_t> original_of_accepted;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (basis.insert(rows[i]).independent) original_of_accepted.push_back(i);
  }
  SolveReport report;
  report.rank = basis.rank();
  for (const Row& target : targets) {
    TargetResult result;
    if (auto combo = basis.express(target)) {
      result.in_span = true;
      result.coefficients.assign(rows.size(), 0);
      for (auto [j, c] : *combo) result.coefficients[original_of_accepted[j]] = c;
    }
    report.targets.push_back(std::move(result));
  }
  return report;
}

inline std::size_t matrix_rank(const PrimeField& field, const Matrix& rows) {
  if (rows.empty()) return 0;
  EchelonBasis basis(field, rows.front().size());
  for (const Row& r : rows) basis.insert(r);
  return basis.rank();
}

/// row-vector times matrix: out[c] = sum_i v[i] * m[i][c]
inline Row vec_mat(const PrimeField& field, const Row& v, const Matrix& m) {
  if (v.size() != m.size()) throw std::invalid_argument("vec_mat dimension mismatch");
  Row out(m.empty() ? 0 : m.front().size(), 0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] == 0) continue;
    for (std::size_t c = 0; c < out.size(); ++c) out[c] = field.fma(out[c], v[i], m[i][c]);
  }
  return out;
}

/// Basis of the null space {x : A x = 0}, where A has `ncols` columns.
inline Matrix kernel_basis(const PrimeField& field, Matrix a, std::size_t ncols) {
  std::vector<std::size_t> pivot_cols;
  std::size_t row = 0;
  for (std::size_t col = 0; col < ncols && row < a.size(); ++col) {
    std::size_t piv = row;
    while (piv < a.size() && a[piv][col] == 0) ++piv;
    if (piv == a.size()) continue;
    std::swap(a[piv], a[row]);
    Elem inv = field.inv(a[row][col]);
    for (auto& v : a[row]) v = field.mul(v, inv);
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (i == row || a[i][col] == 0) continue;
      Elem factor = field.neg(a[i][col]);
      for (std::size_t j = col; j < ncols; ++j) a[i][j] = field.fma(a[i][j], factor, a[row][j]);
    }
    pivot_cols.push_back(col);
    ++row;
  }
  Matrix basis;
  std::vector<bool> is_pivot(ncols, false);
  for (auto c : pivot_cols) is_pivot[c] = true;
  for (std::size_t free = 0; free < ncols; ++free) {
    if (is_pivot[free]) continue;
    Row x(ncols, 0);
    x[free] = 1;
    for (std::size_t i = 0; i < pivot_cols.size(); ++i) x[pivot_cols[i]] = field.neg(a[i][free]);
    basis.push_back(std::move(x));
  }
  return basis;
}

inline Matrix transpose(const Matrix& m) {
  if (m.empty()) return {};
  Matrix out(m.front().size(), Row(m.size()));
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t j = 0; j < m[i].size(); ++j) out[j][i] = m[i][j];
  }
  return out;
}

}  // namespace plt
