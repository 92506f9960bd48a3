#include <gtest/gtest.h>

#include <map>
#include <random>
#include <sstream>

#include "delaysense/decision_tree.hpp"
#include "support/tree_gen.hpp"

using namespace delaysense;

TEST(Gini, KnownValues) {
  const std::array<int, 2> a{15, 5}, b{10, 10}, c{7, 0};
  EXPECT_DOUBLE_EQ(gini_impurity(a), 0.375);
  EXPECT_DOUBLE_EQ(gini_impurity(b), 0.5);
  EXPECT_DOUBLE_EQ(gini_impurity(c), 0.0);
  const std::array<int, 2> empty{0, 0};
  try {
    gini_impurity(empty);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyNode);
  }
}

TEST(Median, LowerMiddleOnTies) {
  const std::vector<double> even{3, 1, 2, 4}, odd{4, 0, 2};
  EXPECT_EQ(median_level(even), 2);
  EXPECT_EQ(median_level(odd), 2);
}

TEST(BestSplit, AgreesWithBruteForce) {
  std::mt19937_64 rng(17);
  const auto scale = treegen::scales();
  for (int t = 0; t < 200; ++t) {
    const auto games = treegen::random_games(2 + rng() % 14, rng);
    const int min_leaf = 1 + static_cast<int>(rng() % 3);
    const auto got = best_split(games, min_leaf);
    const auto want = oracle::best_split_brute(treegen::as_items(games), scale, min_leaf);
    ASSERT_EQ(got.has_value(), want.has_value()) << "trial " << t;
    if (!got) continue;
    EXPECT_EQ(static_cast<int>(index_of(got->characteristic)), want->feature);
    EXPECT_EQ(got->threshold, want->threshold);
    EXPECT_NEAR(got->gain, want->gain, 1e-12);
  }
}

TEST(BestSplit, PureNodeHasNoSplit) {
  std::mt19937_64 rng(3);
  auto games = treegen::random_games(6, rng);
  for (auto& g : games) g.label = SensitivityClass::C1_low;
  EXPECT_FALSE(best_split(games));
}

static std::vector<LabeledGame> separable() {
  // C2_high exactly when TA > 2.
  std::vector<LabeledGame> out;
  for (int i = 0; i < 12; ++i) {
    LabeledGame g;
    g.game_id = "g" + std::to_string(i);
    g.features[index_of(Characteristic::TA)] = i % 6;
    g.features[index_of(Characteristic::SA)] = i % 4;
    g.label = i % 6 > 2 ? SensitivityClass::C2_high : SensitivityClass::C1_low;
    out.push_back(g);
  }
  return out;
}

TEST(Induce, SingleSplitOnSeparableData) {
  const auto tree = induce_tree(separable());
  ASSERT_EQ(tree.nodes.size(), 3u);
  EXPECT_EQ(tree.nodes[0].characteristic, Characteristic::TA);
  EXPECT_EQ(tree.nodes[0].threshold, 2);
  EXPECT_EQ(tree.depth(), 1);
  EXPECT_TRUE(paths_consistent(tree));
  FeatureVector f{};
  f[index_of(Characteristic::TA)] = 5;
  EXPECT_EQ(predict(tree, f), SensitivityClass::C2_high);
}

TEST(Induce, TieLeafPredictsHigh) {
  std::vector<LabeledGame> games(4);
  games[0].label = games[1].label = SensitivityClass::C1_low;
  games[2].label = games[3].label = SensitivityClass::C2_high;
  const auto tree = induce_tree(games);
  ASSERT_EQ(tree.nodes.size(), 1u);
  EXPECT_EQ(tree.nodes[0].cls, SensitivityClass::C2_high);
}

TEST(Induce, RespectsDepthAndLeafSize) {
  std::mt19937_64 rng(8);
  const auto games = treegen::random_games(40, rng);
  for (int depth = 0; depth <= 4; ++depth) {
    TreeParams p;
    p.max_depth = depth;
    const auto tree = induce_tree(games, p);
    EXPECT_LE(tree.depth(), depth);
    for (const auto& n : tree.nodes) {
      if (n.leaf) {
        EXPECT_GE(n.counts[0] + n.counts[1], p.min_leaf);
      }
    }
  }
}

TEST(Induce, TooFewGames) {
  std::vector<LabeledGame> games(3);
  TreeParams p;
  p.min_leaf = 2;
  try {
    induce_tree(games, p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewGames);
  }
}

TEST(Induce, FlippedTwinsCapTrainingAccuracy) {
  // 26 games labeled by TA > 2, then 4 feature-identical copies with the label flipped.
  std::mt19937_64 rng(23);
  auto games = treegen::random_games(26, rng);
  for (auto& g : games)
    g.label = g.features[index_of(Characteristic::TA)] > 2 ? SensitivityClass::C2_high : SensitivityClass::C1_low;
  for (int i = 0; i < 4; ++i) {
    LabeledGame twin = games[static_cast<std::size_t>(i) * 5];
    twin.game_id += "-twin";
    twin.label = twin.label == SensitivityClass::C1_low ? SensitivityClass::C2_high : SensitivityClass::C1_low;
    games.push_back(twin);
  }
  const auto tree = induce_tree(games);
  int correct = 0;
  for (const auto& g : games) correct += predict(tree, g.features) == g.label;
  EXPECT_LE(correct, 26);
  EXPECT_GE(correct, 24);
}

TEST(Induce, DeterministicSerialization) {
  std::mt19937_64 rng(9);
  const auto games = treegen::random_games(30, rng);
  const std::string a = serialize_tree(induce_tree(games));
  EXPECT_EQ(a, serialize_tree(induce_tree(games)));
  const auto parsed = parse_tree(a);
  EXPECT_EQ(serialize_tree(parsed), a);
}

TEST(Serialize, RejectsMalformed) {
  EXPECT_THROW(parse_tree("{"), Error);
  EXPECT_THROW(parse_tree(R"({"format":"other","root":{}})"), Error);
  EXPECT_THROW(parse_tree(R"({"format":"delaysense-tree/1","root":{"counts":[1,1],"characteristic":"TA","threshold":9,"le":{},"gt":{}}})"),
               Error);
}

TEST(Predict, PathAndMissingFeature) {
  const auto tree = induce_tree(separable());
  PartialFeatures f;
  f[index_of(Characteristic::TA)] = 1;
  const auto p = predict_with_path(tree, f);
  EXPECT_EQ(p.cls, SensitivityClass::C1_low);
  ASSERT_EQ(p.path.size(), 1u);
  EXPECT_TRUE(p.path[0].took_left);
  try {
    predict(tree, PartialFeatures{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingFeature);
  }
}

TEST(Predict, PlantedRulesRecovered) {
  std::mt19937_64 rng(21);
  const auto grid = treegen::rule_grid();
  for (int t = 0; t < 50; ++t) {
    const auto rule = treegen::random_rule(rng);
    const auto data = treegen::label_by_rule(grid, rule);
    const auto tree = induce_tree(data);
    for (const auto& g : data) ASSERT_EQ(predict(tree, g.features), g.label) << "trial " << t;
  }
}

TEST(Predict, MonotoneRelabelingKeepsDecisions) {
  std::mt19937_64 rng(23);
  for (int t = 0; t < 50; ++t) {
    // Restrict each characteristic to a sorted subset of levels and map it
    // increasingly onto another subset of the same size.
    std::array<std::vector<int>, 9> from, to;
    for (auto c : kAllCharacteristics) {
      std::vector<int> all(static_cast<std::size_t>(scale_length(c)));
      std::iota(all.begin(), all.end(), 0);
      const std::size_t size = 1 + rng() % all.size();
      std::vector<int> a = all, b = all;
      std::shuffle(a.begin(), a.end(), rng);
      std::shuffle(b.begin(), b.end(), rng);
      a.resize(size);
      b.resize(size);
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      from[index_of(c)] = a;
      to[index_of(c)] = b;
    }
    auto encode = [&](const FeatureVector& raw) {
      FeatureVector f{}, g{};
      for (std::size_t i = 0; i < 9; ++i) {
        const auto pos = static_cast<std::size_t>(raw[i]) % from[i].size();
        f[i] = from[i][pos];
        g[i] = to[i][pos];
      }
      return std::pair{f, g};
    };
    auto base = treegen::random_games(20, rng);
    std::vector<LabeledGame> a = base, b = base;
    for (std::size_t i = 0; i < base.size(); ++i) std::tie(a[i].features, b[i].features) = encode(base[i].features);
    const auto ta = induce_tree(a);
    const auto tb = induce_tree(b);
    for (int q = 0; q < 200; ++q) {
      FeatureVector raw{};
      for (auto& v : raw) v = static_cast<int>(rng() % 6);
      const auto [fa, fb] = encode(raw);
      ASSERT_EQ(predict(ta, fa), predict(tb, fb)) << "trial " << t;
    }
  }
}

TEST(Metrics, TrainingConfusion) {
  Confusion c;
  c.cells = {{{15, 1}, {3, 11}}};
  const auto r = classification_metrics(c);
  EXPECT_EQ(*r.accuracy, Fraction::make(13, 15));
  EXPECT_EQ(*r.precision, Fraction::make(5, 6));
  EXPECT_EQ(*r.recall, Fraction::make(15, 16));
  EXPECT_EQ(*r.specificity, Fraction::make(11, 14));
  EXPECT_EQ(*r.f1, Fraction::make(15, 17));
  EXPECT_EQ(format_truncated(*r.accuracy, 2), "0.86");
  EXPECT_EQ(format_truncated(*r.f1, 2), "0.88");
}

TEST(Metrics, UndefinedRatios) {
  Confusion c;
  c.cells = {{{0, 0}, {2, 3}}};
  const auto r = classification_metrics(c);
  EXPECT_FALSE(r.recall);
  EXPECT_FALSE(r.f1);
  EXPECT_EQ(*r.precision, Fraction::make(0, 1));
  EXPECT_THROW(classification_metrics(Confusion{}), Error);
}

TEST(Metrics, Identities) {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 200; ++t) {
    Confusion c;
    for (auto& row : c.cells)
      for (auto& v : row) v = 1 + static_cast<long>(rng() % 40);
    const auto r = classification_metrics(c);
    const double p_actual = static_cast<double>(r.tp + r.fn), n_actual = static_cast<double>(r.tn + r.fp);
    EXPECT_NEAR(r.accuracy->value(),
                (r.recall->value() * p_actual + r.specificity->value() * n_actual) / static_cast<double>(c.total()),
                1e-12);
    const double h = 2 * r.precision->value() * r.recall->value() / (r.precision->value() + r.recall->value());
    EXPECT_NEAR(r.f1->value(), h, 1e-12);
  }
}

TEST(Metrics, PositiveClassSwap) {
  Confusion c;
  c.cells = {{{15, 1}, {3, 11}}};
  const auto r = classification_metrics(c, SensitivityClass::C2_high);
  EXPECT_EQ(*r.recall, Fraction::make(11, 14));
  EXPECT_EQ(*r.specificity, Fraction::make(15, 16));
}

TEST(Metrics, ConfusionFromPredictions) {
  using S = SensitivityClass;
  const std::vector<S> pred{S::C1_low, S::C2_high, S::C1_low}, act{S::C1_low, S::C1_low, S::C2_high};
  const auto c = confusion_matrix(pred, act);
  EXPECT_EQ(c.cells[0][0], 1);
  EXPECT_EQ(c.cells[0][1], 1);
  EXPECT_EQ(c.cells[1][0], 1);
  const std::vector<S> shorter{S::C1_low};
  EXPECT_THROW(confusion_matrix(shorter, act), Error);
}

TEST(Format, Truncation) {
  EXPECT_EQ(format_truncated(Fraction::make(13, 15), 4), "0.8666");
  EXPECT_EQ(format_truncated(Fraction::make(9, 10), 2), "0.9");
  EXPECT_EQ(format_truncated(Fraction::make(1, 1), 2), "1");
  EXPECT_EQ(format_truncated(Fraction::make(1, 100), 2), "0.01");
}

TEST(Dot, ShowsLevelLabels) {
  std::ostringstream os;
  write_tree_dot(os, induce_tree(separable()));
  EXPECT_NE(os.str().find("TA <= "), std::string::npos);
  EXPECT_NE(os.str().find("[label=\"yes\"]"), std::string::npos);
}
