#pragma once

// Williams-style balanced Latin square for stimulus presentation order.

#include <cstddef>
#include <vector>

#include "delaysense/error.hpp"

namespace delaysense {

using OrderMatrix = std::vector<std::vector<int>>;

/// Row r is the presentation order for the r-th participant. First row is
/// 0, 1, n-1, 2, n-2, ...; every further row adds r modulo n. For even n each
/// stimulus directly follows every other stimulus exactly once.
inline OrderMatrix balanced_latin_square(int n) {
  if (n < 1) throw Error(ErrorCode::InvalidSize, "Latin square size must be >= 1");
  std::vector<int> first(static_cast<std::size_t>(n));
  int lo = 1;
  int hi = n - 1;
  for (int i = 1; i < n; ++i) {
    first[static_cast<std::size_t>(i)] = (i % 2 == 1) ? lo++ : hi--;
  }
  OrderMatrix square(static_cast<std::size_t>(n), std::vector<int>(static_cast<std::size_t>(n)));
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      square[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = (first[static_cast<std::size_t>(c)] + r) % n;
  return square;
}

/// Number of participants after which the order assignment repeats: n for
/// even n, 2n for odd n where the reversed rows complete the carryover balance.
inline int order_cycle_length(int n) { return n % 2 == 0 ? n : 2 * n; }

/// Order for the session that arrived `arrival`-th (0-based).
inline std::vector<int> session_order(const OrderMatrix& square, std::size_t arrival) {
  const int n = static_cast<int>(square.size());
  const auto slot = static_cast<int>(arrival % static_cast<std::size_t>(order_cycle_length(n)));
  if (slot < n) return square[static_cast<std::size_t>(slot)];
  const auto& row = square[static_cast<std::size_t>(slot - n)];
  return std::vector<int>(row.rbegin(), row.rend());
}

struct LatinSquareCheck {
  bool rows_are_permutations = true;
  bool columns_are_permutations = true;
  bool carryover_balanced = true;  // every ordered pair (a, b), a != b, adjacent exactly once
};

/// Exhaustive counting check over a set of orders (rows).
inline LatinSquareCheck check_latin_square(const OrderMatrix& rows, int n) {
  LatinSquareCheck out;
  const auto un = static_cast<std::size_t>(n);
  std::vector<std::vector<int>> col_counts(un, std::vector<int>(un, 0));
  std::vector<std::vector<int>> pair_counts(un, std::vector<int>(un, 0));
  for (const auto& row : rows) {
    if (row.size() != un) {
      out.rows_are_permutations = false;
      continue;
    }
    std::vector<int> seen(un, 0);
    for (std::size_t c = 0; c < un; ++c) {
      const int v = row[c];
      if (v < 0 || v >= n) {
        out.rows_are_permutations = false;
        continue;
      }
      ++seen[static_cast<std::size_t>(v)];
      ++col_counts[c][static_cast<std::size_t>(v)];
      if (c + 1 < un && row[c + 1] >= 0 && row[c + 1] < n) {
        ++pair_counts[static_cast<std::size_t>(v)][static_cast<std::size_t>(row[c + 1])];
      }
    }
    for (int s : seen)
      if (s != 1) out.rows_are_permutations = false;
  }
  const std::size_t per_column = rows.size() / un;
  for (const auto& col : col_counts)
    for (int cnt : col)
      if (static_cast<std::size_t>(cnt) != per_column || rows.size() % un != 0) out.columns_are_permutations = false;
  const std::size_t per_pair = rows.size() / un;
  for (std::size_t a = 0; a < un; ++a)
    for (std::size_t b = 0; b < un; ++b)
      if (a != b && static_cast<std::size_t>(pair_counts[a][b]) != per_pair) out.carryover_balanced = false;
  return out;
}

}  // namespace delaysense
