#pragma once

// Inter-rater agreement: two-way ANOVA without replication and the
// absolute-agreement intraclass correlation of the two-way random model.

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "delaysense/domain.hpp"
#include "delaysense/error.hpp"
#include "delaysense/f_distribution.hpp"

namespace delaysense {

struct AnovaTable {
  std::size_t n = 0;  // subjects
  std::size_t k = 0;  // raters
  double ss_rows = 0.0;
  double ss_cols = 0.0;
  double ss_err = 0.0;
  double ms_rows = 0.0;
  double ms_cols = 0.0;
  double ms_err = 0.0;

  double df_rows() const { return static_cast<double>(n - 1); }
  double df_cols() const { return static_cast<double>(k - 1); }
  double df_err() const { return static_cast<double>((n - 1) * (k - 1)); }
};

inline AnovaTable two_way_anova(const RatingMatrix& m) {
  const std::size_t n = m.rows();
  const std::size_t k = m.cols();
  if (n < 2 || k < 2) {
    throw Error(ErrorCode::DegenerateMatrix, "ANOVA needs at least 2 subjects and 2 raters, got " +
                                                 std::to_string(n) + "x" + std::to_string(k));
  }
  std::vector<double> row_mean(n, 0.0);
  std::vector<double> col_mean(k, 0.0);
  double grand = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double x = m.at(i, j);
      row_mean[i] += x;
      col_mean[j] += x;
      grand += x;
    }
  }
  for (double& r : row_mean) r /= static_cast<double>(k);
  for (double& c : col_mean) c /= static_cast<double>(n);
  grand /= static_cast<double>(n * k);

  AnovaTable t;
  t.n = n;
  t.k = k;
  for (std::size_t i = 0; i < n; ++i) t.ss_rows += (row_mean[i] - grand) * (row_mean[i] - grand);
  t.ss_rows *= static_cast<double>(k);
  for (std::size_t j = 0; j < k; ++j) t.ss_cols += (col_mean[j] - grand) * (col_mean[j] - grand);
  t.ss_cols *= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double r = m.at(i, j) - row_mean[i] - col_mean[j] + grand;
      t.ss_err += r * r;
    }
  }
  t.ms_rows = t.ss_rows / t.df_rows();
  t.ms_cols = t.ss_cols / t.df_cols();
  t.ms_err = t.ss_err / t.df_err();
  return t;
}

struct IccPair {
  double single = 0.0;   // ICC(A,1)
  double average = 0.0;  // ICC(A,k)
};

inline IccPair icc_absolute_agreement(const AnovaTable& a) {
  if (a.ms_rows == 0.0 && a.ms_cols == 0.0 && a.ms_err == 0.0) {
    throw Error(ErrorCode::ZeroVariance, "all mean squares are zero; ICC undefined");
  }
  const double n = static_cast<double>(a.n);
  const double k = static_cast<double>(a.k);
  const double num = a.ms_rows - a.ms_err;
  const double den_single = a.ms_rows + (k - 1.0) * a.ms_err + (k / n) * (a.ms_cols - a.ms_err);
  const double den_average = a.ms_rows + (a.ms_cols - a.ms_err) / n;
  if (den_single == 0.0 || den_average == 0.0) {
    throw Error(ErrorCode::ZeroVariance, "ICC denominator vanishes");
  }
  return {num / den_single, num / den_average};
}

enum class AgreementLabel { Excellent, Good, Fair, Poor };

inline std::string_view to_string(AgreementLabel l) {
  switch (l) {
    case AgreementLabel::Excellent: return "excellent";
    case AgreementLabel::Good: return "good";
    case AgreementLabel::Fair: return "fair";
    case AgreementLabel::Poor: return "poor";
  }
  return "poor";
}

inline AgreementLabel agreement_label(double icc) {
  if (icc > 0.9) return AgreementLabel::Excellent;
  if (icc > 0.8) return AgreementLabel::Good;
  if (icc > 0.7) return AgreementLabel::Fair;
  return AgreementLabel::Poor;
}

struct ConfidenceInterval {
  double low = 0.0;
  double high = 0.0;
};

/// F-based interval for ICC(A,k) in the two-way random model (McGraw & Wong,
/// case 2A), using Satterthwaite degrees of freedom for the denominator.
inline ConfidenceInterval icc_average_interval(const AnovaTable& a, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::DomainError, "alpha must be in (0,1)");
  const double n = static_cast<double>(a.n);
  const double k = static_cast<double>(a.k);
  const double msr = a.ms_rows;
  const double msc = a.ms_cols;
  const double mse = a.ms_err;
  if (mse == 0.0 && msc == 0.0) return {1.0, 1.0};

  const double rho = icc_absolute_agreement(a).single;
  const double ca = k * rho / (n * (1.0 - rho));
  const double cb = 1.0 + k * rho * (n - 1.0) / (n * (1.0 - rho));
  const double num = ca * msc + cb * mse;
  const double v = num * num / ((ca * msc) * (ca * msc) / (k - 1.0) +
                                (cb * mse) * (cb * mse) / ((n - 1.0) * (k - 1.0)));
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw Error(ErrorCode::DomainError, "degenerate Satterthwaite degrees of freedom");
  }
  const double f_low = f_quantile(1.0 - alpha / 2.0, n - 1.0, v);
  const double f_high = f_quantile(1.0 - alpha / 2.0, v, n - 1.0);
  const double low = n * (msr - f_low * mse) / (f_low * (msc - mse) + n * msr);
  const double high = n * (f_high * msr - mse) / (msc - mse + n * f_high * msr);
  return {low, high};
}

struct AgreementReport {
  Characteristic characteristic = Characteristic::TA;
  AnovaTable anova;
  double icc = 0.0;         // ICC(A,k), the headline value
  double icc_single = 0.0;  // ICC(A,1)
  double ci_low = 0.0;
  double ci_high = 0.0;
  double alpha = 0.05;
  double f = 0.0;  // MSR / MSE; +inf when the residual vanishes
  double p = 0.0;
  AgreementLabel label = AgreementLabel::Poor;
};

inline AgreementReport agreement_report(const RatingMatrix& m, double alpha = 0.05) {
  const AnovaTable a = two_way_anova(m);
  const IccPair icc = icc_absolute_agreement(a);
  const ConfidenceInterval ci = icc_average_interval(a, alpha);

  AgreementReport r;
  r.characteristic = m.characteristic();
  r.anova = a;
  r.icc = icc.average;
  r.icc_single = icc.single;
  r.ci_low = ci.low;
  r.ci_high = ci.high;
  r.alpha = alpha;
  if (a.ms_err == 0.0) {
    r.f = std::numeric_limits<double>::infinity();
    r.p = 0.0;
  } else {
    r.f = a.ms_rows / a.ms_err;
    r.p = f_survival(r.f, a.df_rows(), a.df_err());
  }
  r.label = agreement_label(r.icc);
  return r;
}

inline std::string format_p_value(double p) {
  if (p < 1e-3) return "< .001";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", p);
  std::string s(buf);
  if (s.rfind("0.", 0) == 0) s.erase(0, 1);
  return s;
}

namespace detail {
inline std::string fixed4(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}
inline nlohmann::ordered_json finite_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}
}  // namespace detail

inline void write_agreement_csv(std::ostream& os, std::span<const AgreementReport> reports) {
  os << "Characteristic,ICC,CI_low,CI_high,F,p,Label\n";
  for (const auto& r : reports) {
    os << code(r.characteristic) << ',' << detail::fixed4(r.icc) << ',' << detail::fixed4(r.ci_low)
       << ',' << detail::fixed4(r.ci_high) << ',' << detail::fixed4(r.f) << ','
       << format_p_value(r.p) << ',' << to_string(r.label) << '\n';
  }
}

inline nlohmann::ordered_json to_json(const AgreementReport& r) {
  return {{"characteristic", code(r.characteristic)},
          {"icc", r.icc},
          {"icc_single", r.icc_single},
          {"ci_low", r.ci_low},
          {"ci_high", r.ci_high},
          {"confidence", 1.0 - r.alpha},
          {"f", detail::finite_or_null(r.f)},
          {"p", r.p},
          {"p_formatted", format_p_value(r.p)},
          {"label", to_string(r.label)},
          {"anova",
           {{"n", r.anova.n},
            {"k", r.anova.k},
            {"ms_rows", r.anova.ms_rows},
            {"ms_cols", r.anova.ms_cols},
            {"ms_err", r.anova.ms_err}}}};
}

}  // namespace delaysense
