#include <gtest/gtest.h>

#include "delaysense/delaysense.hpp"
#include "support/fixtures.hpp"

using namespace delaysense;
namespace fs = std::filesystem;

class PipelineTest : public ::testing::Test {
 protected:
  void SetUp() override {
    StudyStore store(dir_ / "store", fixtures::fixed_time);
    const auto sid = fixtures::run_scripted_study(store, 30, 14);
    fixtures::write_bundle(store.export_ratings(sid), dir_ / "export");
    fixtures::spit(dir_ / "games.csv", fixtures::games_csv(30, 10));
  }

  PipelineConfig config(const std::string& out) const {
    PipelineConfig cfg;
    cfg.ratings_dir = dir_ / "export";
    cfg.games_csv = dir_ / "games.csv";
    cfg.out_dir = dir_ / out;
    return cfg;
  }

  fixtures::TempDir dir_;
};

TEST_F(PipelineTest, ExportFeedsAgreementStage) {
  const auto matrices = load_export_dir(dir_ / "export");
  ASSERT_EQ(matrices.size(), 9u);
  for (const auto& m : matrices) {
    EXPECT_EQ(m.rows(), 30u);
    EXPECT_EQ(m.cols(), 14u);
    const auto r = agreement_report(m);
    EXPECT_GT(r.icc, 0.9);
  }
}

TEST_F(PipelineTest, ProducesEveryReport) {
  const auto result = run_pipeline(config("out"));
  for (const char* f : {"agreement.csv", "agreement.json", "factors.csv", "factors.json", "factors.dot",
                        "clustering.csv", "clustering.json", "plot_data.csv", "labeled_training.csv",
                        "labeled_test.csv", "tree.json", "tree.dot", "confusion_training.csv", "confusion_test.csv",
                        "evaluation.csv", "evaluation.json", "manifest.json"})
    EXPECT_TRUE(fs::exists(dir_ / "out" / f)) << f;
  EXPECT_EQ(result.training.size(), 20u);
  EXPECT_EQ(result.test.size(), 10u);
  EXPECT_EQ(result.clustering.k, 2);
  EXPECT_EQ(result.training_eval.confusion.total(), 20);
  ASSERT_TRUE(result.test_eval);
  EXPECT_EQ(result.test_eval->confusion.total(), 10);
  // The drops follow TA, so the tree should find it.
  EXPECT_EQ(result.tree.nodes[0].characteristic, Characteristic::TA);
  // Labels are planted on TA >= 3, so both splits are classified without error.
  EXPECT_EQ(result.training_eval.confusion.cells[0][0] + result.training_eval.confusion.cells[1][1], 20);
  EXPECT_EQ(result.test_eval->confusion.cells[0][0] + result.test_eval->confusion.cells[1][1], 10);
  const auto agreement = fixtures::slurp(dir_ / "out" / "agreement.csv");
  EXPECT_EQ(agreement.rfind("# ", 0), 0u);
  const auto tree = parse_tree(fixtures::slurp(dir_ / "out" / "tree.json"));
  EXPECT_EQ(serialize_tree(tree), serialize_tree(result.tree));
}

TEST_F(PipelineTest, RerunsAreByteIdentical) {
  run_pipeline(config("a"));
  run_pipeline(config("b"));
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir_ / "a")) {
    ++files;
    EXPECT_EQ(fixtures::slurp(e.path()), fixtures::slurp(dir_ / "b" / e.path().filename())) << e.path();
  }
  EXPECT_GE(files, 17u);
}

TEST_F(PipelineTest, MissingColumnNamed) {
  fixtures::spit(dir_ / "bad.csv", "game_id,iq_0ms,n_participants,split\ng01,4.5,20,training\n");
  auto cfg = config("bad");
  cfg.games_csv = dir_ / "bad.csv";
  try {
    run_pipeline(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_TRUE(is_input_error(e.code()));
    EXPECT_NE(e.detail().find("iq_200ms"), std::string::npos);
    EXPECT_NE(e.detail().find("[load-games]"), std::string::npos);
  }
}

TEST_F(PipelineTest, LabeledCsvRoundTrip) {
  const auto result = run_pipeline(config("out"));
  const auto back = read_labeled_games_csv((dir_ / "out" / "labeled_training.csv").string());
  ASSERT_EQ(back.size(), result.training.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].game_id, result.training[i].game_id);
    EXPECT_EQ(back[i].features, result.training[i].features);
    EXPECT_EQ(back[i].label, result.training[i].label);
  }
}

TEST(Csv, QuotedFields) {
  const auto row = csv::split_line(R"(a,"b,c","d ""e""",)");
  EXPECT_EQ(row, (csv::Row{"a", "b,c", "d \"e\"", ""}));
  EXPECT_EQ(csv::escape("x,y"), "\"x,y\"");
}
