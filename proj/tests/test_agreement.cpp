#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "delaysense/agreement.hpp"
#include "support/oracles.hpp"

using namespace delaysense;

static RatingMatrix make(const std::vector<std::vector<double>>& rows) {
  std::vector<std::string> s, r;
  std::vector<double> v;
  for (std::size_t i = 0; i < rows.size(); ++i) s.push_back("g" + std::to_string(i));
  for (std::size_t j = 0; j < rows[0].size(); ++j) r.push_back("r" + std::to_string(j));
  for (const auto& row : rows) v.insert(v.end(), row.begin(), row.end());
  return RatingMatrix(Characteristic::TA, s, r, v);
}

// Six targets, four judges; values frozen from an independent numpy run.
static const std::vector<std::vector<double>> kSixByFour = {
    {9, 2, 5, 8}, {6, 1, 3, 2}, {8, 4, 6, 8}, {7, 1, 2, 6}, {10, 5, 6, 9}, {6, 2, 4, 7}};

TEST(Anova, SixByFourMeanSquares) {
  const auto a = two_way_anova(make(kSixByFour));
  EXPECT_NEAR(a.ss_rows, 56.20833333333334, 1e-12);
  EXPECT_NEAR(a.ss_cols, 97.45833333333334, 1e-12);
  EXPECT_NEAR(a.ss_err, 15.291666666666629, 1e-12);
  EXPECT_NEAR(a.ms_rows, 11.241666666666669, 1e-12);
  EXPECT_NEAR(a.ms_cols, 32.486111111111114, 1e-12);
  EXPECT_NEAR(a.ms_err, 1.019444444444442, 1e-12);
  EXPECT_EQ(a.df_err(), 15.0);
}

TEST(Icc, SixByFourBothForms) {
  const auto icc = icc_absolute_agreement(two_way_anova(make(kSixByFour)));
  EXPECT_NEAR(icc.single, 0.2897637795275592, 1e-12);
  EXPECT_NEAR(icc.average, 0.6200505475989893, 1e-12);
}

TEST(Icc, SixByFourReport) {
  const auto r = agreement_report(make(kSixByFour));
  EXPECT_NEAR(r.f, 11.027247956403299, 1e-10);
  EXPECT_NEAR(r.p, 0.00013456651648433476, 1e-12);
  EXPECT_NEAR(r.ci_low, 0.07113681530250347, 1e-6);
  EXPECT_NEAR(r.ci_high, 0.9272320401677219, 1e-6);
  EXPECT_EQ(r.label, AgreementLabel::Poor);
  EXPECT_EQ(format_p_value(r.p), "< .001");
}

TEST(Icc, PerfectAgreementIsOne) {
  const auto r = agreement_report(make({{1, 1, 1}, {3, 3, 3}, {0, 0, 0}, {2, 2, 2}}));
  EXPECT_EQ(r.icc, 1.0);
  EXPECT_EQ(r.ci_low, 1.0);
  EXPECT_TRUE(std::isinf(r.f));
  EXPECT_EQ(r.p, 0.0);
  EXPECT_EQ(r.label, AgreementLabel::Excellent);
}

TEST(Icc, ConstantMatrixHasNoVariance) {
  try {
    agreement_report(make({{2, 2}, {2, 2}, {2, 2}}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroVariance);
  }
}

TEST(Icc, DegenerateShapes) {
  EXPECT_THROW(two_way_anova(make({{1, 2, 3}})), Error);
  EXPECT_THROW(two_way_anova(make({{1}, {2}})), Error);
}

TEST(Icc, MatchesDirectOracleOnRandomMatrices) {
  std::mt19937_64 rng(42);
  for (int t = 0; t < 50; ++t) {
    std::vector<std::vector<double>> x(8, std::vector<double>(5));
    for (auto& row : x)
      for (auto& v : row) v = static_cast<double>(rng() % 6);
    const auto a = two_way_anova(make(x));
    const auto o = oracle::anova_direct(x);
    EXPECT_NEAR(a.ms_rows, o.msr, 1e-9);
    EXPECT_NEAR(a.ms_cols, o.msc, 1e-9);
    EXPECT_NEAR(a.ms_err, o.mse, 1e-9);
    const auto icc = icc_absolute_agreement(a);
    EXPECT_NEAR(icc.single, o.icc_single, 1e-9);
    EXPECT_NEAR(icc.average, o.icc_average, 1e-9);
    if (icc.single >= 0) {
      EXPECT_GE(icc.average, icc.single);
    }
  }
}

TEST(Icc, LabelsAtBoundaries) {
  EXPECT_EQ(agreement_label(0.94), AgreementLabel::Excellent);
  EXPECT_EQ(agreement_label(0.88), AgreementLabel::Good);
  EXPECT_EQ(agreement_label(0.72), AgreementLabel::Fair);
  EXPECT_EQ(agreement_label(0.59), AgreementLabel::Poor);
  EXPECT_EQ(agreement_label(0.9), AgreementLabel::Good);
  EXPECT_EQ(agreement_label(0.7), AgreementLabel::Poor);
}

TEST(Icc, PValueFormatting) {
  EXPECT_EQ(format_p_value(0.0), "< .001");
  EXPECT_EQ(format_p_value(0.0123), ".012");
}

TEST(Icc, CsvHeaderAndRow) {
  const std::vector<AgreementReport> rs{agreement_report(make(kSixByFour))};
  std::ostringstream os;
  write_agreement_csv(os, rs);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "Characteristic,ICC,CI_low,CI_high,F,p,Label");
  EXPECT_NE(os.str().find("TA,0.6201,0.0711,0.9272,11.0272,< .001,poor"), std::string::npos) << os.str();
}
