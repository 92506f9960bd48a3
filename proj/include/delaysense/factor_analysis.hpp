#pragma once

// Correlation-based PCA used to group the characteristics into factors.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "delaysense/domain.hpp"
#include "delaysense/error.hpp"

namespace delaysense {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) throw Error(ErrorCode::DomainError, "matrix data size mismatch");
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  const std::vector<double>& data() const { return data_; }

  Matrix transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

  friend Matrix operator*(const Matrix& a, const Matrix& b) {
    if (a.cols_ != b.rows_) throw Error(ErrorCode::DomainError, "matrix product shape mismatch");
    Matrix out(a.rows_, b.cols_);
    for (std::size_t i = 0; i < a.rows_; ++i)
      for (std::size_t l = 0; l < a.cols_; ++l) {
        const double x = a(i, l);
        for (std::size_t j = 0; j < b.cols_; ++j) out(i, j) += x * b(l, j);
      }
    return out;
  }

  double max_abs_diff(const Matrix& other) const {
    double worst = 0.0;
    for (std::size_t i = 0; i < data_.size(); ++i) worst = std::max(worst, std::fabs(data_[i] - other.data_[i]));
    return worst;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Column-wise z-scores with the sample (n-1) standard deviation.
/// `column_names` is only used to name the offending column in errors.
inline Matrix standardize_columns(const Matrix& x, const std::vector<std::string>& column_names = {}) {
  const std::size_t n = x.rows();
  if (n < 2) throw Error(ErrorCode::TooFewGames, "standardization needs at least two rows");
  Matrix z(n, x.cols());
  for (std::size_t c = 0; c < x.cols(); ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += x(r, c);
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t r = 0; r < n; ++r) ss += (x(r, c) - mean) * (x(r, c) - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (!(sd > 0.0)) {
      const std::string name = c < column_names.size() ? column_names[c] : "column " + std::to_string(c);
      throw Error(ErrorCode::ConstantColumn, name + " has zero variance");
    }
    for (std::size_t r = 0; r < n; ++r) z(r, c) = (x(r, c) - mean) / sd;
  }
  return z;
}

inline Matrix correlation_matrix(const Matrix& x, const std::vector<std::string>& column_names = {}) {
  const Matrix z = standardize_columns(x, column_names);
  const std::size_t m = z.cols();
  const double scale = 1.0 / static_cast<double>(z.rows() - 1);
  Matrix corr(m, m);
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = a; b < m; ++b) {
      double s = 0.0;
      for (std::size_t r = 0; r < z.rows(); ++r) s += z(r, a) * z(r, b);
      corr(a, b) = corr(b, a) = (a == b) ? 1.0 : s * scale;
    }
  }
  return corr;
}

struct EigenDecomposition {
  std::vector<double> values;  // descending
  Matrix vectors;              // column i pairs with values[i]
};

/// Cyclic Jacobi rotations for a symmetric matrix.
inline EigenDecomposition eigen_symmetric(const Matrix& s, int max_sweeps = 100) {
  const std::size_t m = s.rows();
  if (s.cols() != m) throw Error(ErrorCode::NotSymmetric, "matrix is not square");
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j)
      if (std::fabs(s(i, j) - s(j, i)) > 1e-10) {
        throw Error(ErrorCode::NotSymmetric,
                    "entries (" + std::to_string(i) + "," + std::to_string(j) + ") differ");
      }

  Matrix a = s;
  Matrix v = Matrix::identity(m);
  auto off_norm = [&] {
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j)
        if (i != j) sum += a(i, j) * a(i, j);
    return std::sqrt(sum);
  };

  bool converged = off_norm() < 1e-12;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    for (std::size_t p = 0; p + 1 < m; ++p) {
      for (std::size_t q = p + 1; q < m; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        for (std::size_t r = 0; r < m; ++r) {
          const double arp = a(r, p);
          const double arq = a(r, q);
          a(r, p) = c * arp - sn * arq;
          a(r, q) = sn * arp + c * arq;
        }
        for (std::size_t r = 0; r < m; ++r) {
          const double apr = a(p, r);
          const double aqr = a(q, r);
          a(p, r) = c * apr - sn * aqr;
          a(q, r) = sn * apr + c * aqr;
        }
        for (std::size_t r = 0; r < m; ++r) {
          const double vrp = v(r, p);
          const double vrq = v(r, q);
          v(r, p) = c * vrp - sn * vrq;
          v(r, q) = sn * vrp + c * vrq;
        }
      }
    }
    converged = off_norm() < 1e-12;
  }
  if (!converged) throw Error(ErrorCode::NoConvergence, "Jacobi sweeps exhausted");

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });

  EigenDecomposition out;
  out.vectors = Matrix(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t src = order[i];
    out.values.push_back(a(src, src));
    // Sign convention: the largest-magnitude entry is positive.
    std::size_t arg = 0;
    for (std::size_t r = 1; r < m; ++r)
      if (std::fabs(v(r, src)) > std::fabs(v(arg, src))) arg = r;
    const double sign = v(arg, src) < 0.0 ? -1.0 : 1.0;
    for (std::size_t r = 0; r < m; ++r) out.vectors(r, i) = sign * v(r, src);
  }
  return out;
}

struct FactorGrouping {
  std::vector<std::string> variables;      // row labels of `loadings`
  Matrix loadings;                         // variables x retained components
  std::vector<double> explained_variance;  // all eigenvalues, descending
  std::vector<int> assignment;             // variable -> retained component index
};

/// PCA on the correlation matrix of `data` (observations x variables).
inline FactorGrouping pca_group(const Matrix& data, const std::vector<std::string>& variables,
                                int n_factors = 3) {
  const std::size_t m = data.cols();
  if (variables.size() != m) throw Error(ErrorCode::DomainError, "one name per column required");
  if (n_factors < 1 || static_cast<std::size_t>(n_factors) > m) {
    throw Error(ErrorCode::DomainError, "n_factors must be in [1, " + std::to_string(m) + "]");
  }
  if (data.rows() < static_cast<std::size_t>(n_factors) + 1) {
    throw Error(ErrorCode::TooFewGames, "need at least " + std::to_string(n_factors + 1) +
                                           " games, got " + std::to_string(data.rows()));
  }
  const Matrix corr = correlation_matrix(data, variables);
  const EigenDecomposition eig = eigen_symmetric(corr);

  FactorGrouping g;
  g.variables = variables;
  g.explained_variance = eig.values;
  for (double& l : g.explained_variance) l = std::max(l, 0.0);  // round-off below zero
  const auto p = static_cast<std::size_t>(n_factors);
  g.loadings = Matrix(m, p);
  for (std::size_t c = 0; c < p; ++c) {
    const double scale = std::sqrt(g.explained_variance[c]);
    for (std::size_t r = 0; r < m; ++r) g.loadings(r, c) = eig.vectors(r, c) * scale;
  }
  g.assignment.resize(m);
  for (std::size_t r = 0; r < m; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < p; ++c)
      if (std::fabs(g.loadings(r, c)) > std::fabs(g.loadings(r, best))) best = c;
    g.assignment[r] = static_cast<int>(best);
  }
  return g;
}

/// Convenience overload over the nine characteristics (games x 9 mean ratings).
inline FactorGrouping pca_group(const Matrix& mean_ratings, int n_factors = 3) {
  std::vector<std::string> names;
  for (Characteristic c : kAllCharacteristics) names.emplace_back(code(c));
  if (mean_ratings.cols() != names.size()) {
    throw Error(ErrorCode::DomainError, "expected one column per characteristic");
  }
  return pca_group(mean_ratings, names, n_factors);
}

inline void write_loadings_csv(std::ostream& os, const FactorGrouping& g) {
  os << "variable";
  for (std::size_t c = 0; c < g.loadings.cols(); ++c) os << ",F" << (c + 1);
  os << ",factor\n";
  char buf[64];
  for (std::size_t r = 0; r < g.variables.size(); ++r) {
    os << g.variables[r];
    for (std::size_t c = 0; c < g.loadings.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.6f", g.loadings(r, c));
      os << ',' << buf;
    }
    os << ",F" << (g.assignment[r] + 1) << '\n';
  }
}

inline nlohmann::ordered_json to_json(const FactorGrouping& g) {
  nlohmann::ordered_json loadings = nlohmann::ordered_json::object();
  nlohmann::ordered_json assignment = nlohmann::ordered_json::object();
  for (std::size_t r = 0; r < g.variables.size(); ++r) {
    std::vector<double> row;
    for (std::size_t c = 0; c < g.loadings.cols(); ++c) row.push_back(g.loadings(r, c));
    loadings[g.variables[r]] = row;
    assignment[g.variables[r]] = "F" + std::to_string(g.assignment[r] + 1);
  }
  return {{"n_factors", g.loadings.cols()},
          {"explained_variance", g.explained_variance},
          {"loadings", loadings},
          {"assignment", assignment}};
}

inline void write_grouping_dot(std::ostream& os, const FactorGrouping& g) {
  os << "digraph factors {\n  rankdir=LR;\n";
  for (std::size_t c = 0; c < g.loadings.cols(); ++c) {
    os << "  F" << (c + 1) << " [shape=ellipse];\n";
  }
  char buf[64];
  for (std::size_t r = 0; r < g.variables.size(); ++r) {
    const auto f = static_cast<std::size_t>(g.assignment[r]);
    std::snprintf(buf, sizeof buf, "%.2f", g.loadings(r, f));
    os << "  \"" << g.variables[r] << "\" [shape=box];\n";
    os << "  F" << (f + 1) << " -> \"" << g.variables[r] << "\" [label=\"" << buf << "\"];\n";
  }
  os << "}\n";
}

}  // namespace delaysense
