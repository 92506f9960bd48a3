#pragma once

// End-to-end analysis: rater agreement -> characteristic grouping ->
// sensitivity clustering -> tree induction -> evaluation, plus the file
// formats shared by the individual CLI verbs.

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "delaysense/agreement.hpp"
#include "delaysense/archive.hpp"
#include "delaysense/clustering.hpp"
#include "delaysense/csv.hpp"
#include "delaysense/decision_tree.hpp"
#include "delaysense/domain.hpp"
#include "delaysense/error.hpp"
#include "delaysense/factor_analysis.hpp"
#include "delaysense/study.hpp"

namespace delaysense {

inline constexpr std::string_view kToolVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Input formats

inline std::string matrix_file_name(Characteristic c) { return "matrix_" + std::string(code(c)) + ".csv"; }

/// Loads the nine matrix_<code>.csv files of a ratings export and checks that
/// they describe the same games and raters.
inline std::vector<RatingMatrix> load_export_dir(const std::filesystem::path& dir) {
  std::vector<RatingMatrix> out;
  for (Characteristic c : kAllCharacteristics) {
    const auto path = dir / matrix_file_name(c);
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ValidationError, "missing ratings file " + path.string());
    out.push_back(read_rating_matrix_csv(in, c, path.string()));
  }
  for (const auto& m : out) {
    if (m.subjects() != out.front().subjects() || m.raters() != out.front().raters()) {
      throw Error(ErrorCode::ValidationError, matrix_file_name(m.characteristic()) +
                                                  " lists different games or raters than " +
                                                  matrix_file_name(out.front().characteristic()));
    }
  }
  return out;
}

/// Games x 9 table of mean level indices across raters.
inline Matrix per_game_means(const std::vector<RatingMatrix>& matrices) {
  const std::size_t n = matrices.front().rows();
  Matrix out(n, kCharacteristicCount);
  for (const auto& m : matrices) {
    const std::size_t c = index_of(m.characteristic());
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (double v : m.row(i)) s += v;
      out(i, c) = s / static_cast<double>(m.cols());
    }
  }
  return out;
}

/// Per-game feature vector: median level across raters (lower middle on ties).
inline std::map<std::string, FeatureVector> per_game_medians(const std::vector<RatingMatrix>& matrices) {
  std::map<std::string, FeatureVector> out;
  for (const auto& m : matrices) {
    for (std::size_t i = 0; i < m.rows(); ++i) out[m.subjects()[i]][index_of(m.characteristic())] = median_level(m.row(i));
  }
  return out;
}

struct GameMeasurement {
  GameRecord game;
  IQMeasurement iq;
};

inline std::vector<GameMeasurement> read_games_csv(const std::string& path) {
  const csv::Table t = csv::read_file(path);
  const std::size_t id = t.require_column("game_id");
  const std::size_t iq0 = t.require_column("iq_0ms");
  const std::size_t iq200 = t.require_column("iq_200ms");
  const std::size_t np = t.require_column("n_participants");
  const std::size_t split = t.require_column("split");
  const auto name = t.column("name");
  std::vector<GameMeasurement> out;
  std::set<std::string> seen;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    GameMeasurement g;
    g.game.game_id = t.rows[r][id];
    if (g.game.game_id.empty()) throw Error(ErrorCode::EmptyIdentifier, t.where(r) + ": empty game_id");
    if (!seen.insert(g.game.game_id).second) {
      throw Error(ErrorCode::ValidationError, t.where(r) + ": duplicate game_id '" + g.game.game_id + "'");
    }
    if (name) g.game.name = t.rows[r][*name];
    try {
      g.game.split = parse_split(t.rows[r][split]);
    } catch (const Error& e) {
      throw Error(ErrorCode::ValidationError, t.where(r) + ": " + e.detail());
    }
    g.iq.game_id = g.game.game_id;
    g.iq.iq_0ms = csv::parse_double(t, r, iq0);
    g.iq.iq_200ms = csv::parse_double(t, r, iq200);
    g.iq.n_participants = static_cast<int>(csv::parse_long(t, r, np));
    try {
      validate_measurement(g.iq);
    } catch (const Error& e) {
      throw Error(e.code(), t.where(r) + ": " + e.detail());
    }
    out.push_back(std::move(g));
  }
  return out;
}

inline std::vector<LabeledGame> read_labeled_games_csv(const std::string& path) {
  const csv::Table t = csv::read_file(path);
  const std::size_t id = t.require_column("game_id");
  const std::size_t label = t.require_column("label");
  std::array<std::size_t, kCharacteristicCount> cols{};
  for (Characteristic c : kAllCharacteristics) cols[index_of(c)] = t.require_column(code(c));
  std::vector<LabeledGame> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    LabeledGame g;
    g.game_id = t.rows[r][id];
    for (Characteristic c : kAllCharacteristics) {
      g.features[index_of(c)] = static_cast<int>(csv::parse_long(t, r, cols[index_of(c)]));
    }
    try {
      g.label = parse_sensitivity_class(t.rows[r][label]);
      validate_features(g.features, g.game_id);
    } catch (const Error& e) {
      throw Error(e.code(), t.where(r) + ": " + e.detail());
    }
    out.push_back(std::move(g));
  }
  return out;
}

inline void write_labeled_games_csv(std::ostream& os, const std::vector<LabeledGame>& games) {
  csv::Row header{"game_id"};
  for (Characteristic c : kAllCharacteristics) header.emplace_back(code(c));
  header.emplace_back("label");
  csv::write_row(os, header);
  for (const auto& g : games) {
    csv::Row row{g.game_id};
    for (int v : g.features) row.push_back(std::to_string(v));
    row.emplace_back(to_string(g.label));
    csv::write_row(os, row);
  }
}

// ---------------------------------------------------------------------------
// Output with provenance

struct Provenance {
  std::string tool_version = std::string(kToolVersion);
  std::uint64_t seed = kDefaultSeed;
  std::map<std::string, std::string> inputs;  // file name -> sha256

  std::string inputs_digest() const {
    std::string all;
    for (const auto& [name, hash] : inputs) all += name + "=" + hash + "\n";
    return sha256_hex(all);
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json in = nlohmann::ordered_json::object();
    for (const auto& [name, hash] : inputs) in[name] = hash;
    return {{"tool", "delaysense"}, {"version", tool_version}, {"seed", seed}, {"inputs", in}};
  }

  std::string comment_line(std::string_view prefix) const {
    return std::string(prefix) + " delaysense " + tool_version + " seed=" + std::to_string(seed) +
           " inputs=" + inputs_digest() + "\n";
  }
};

/// Writes report files into one directory and remembers their digests.
class ReportWriter {
 public:
  ReportWriter(std::filesystem::path dir, Provenance provenance)
      : dir_(std::move(dir)), provenance_(std::move(provenance)) {
    std::filesystem::create_directories(dir_);
  }

  void csv(const std::string& name, const std::string& body) { write(name, provenance_.comment_line("#") + body); }
  void dot(const std::string& name, const std::string& body) { write(name, provenance_.comment_line("//") + body); }
  void json(const std::string& name, const nlohmann::ordered_json& report) {
    nlohmann::ordered_json doc = {{"provenance", provenance_.to_json()}, {"report", report}};
    write(name, doc.dump(2) + "\n");
  }
  /// Files that must stay machine-readable by other tools as-is (trees).
  void raw(const std::string& name, const std::string& body) { write(name, body); }

  void manifest(const nlohmann::ordered_json& extra) {
    nlohmann::ordered_json files = nlohmann::ordered_json::object();
    for (const auto& [name, hash] : written_) files[name] = hash;
    nlohmann::ordered_json doc = {{"provenance", provenance_.to_json()}, {"files", files}};
    for (auto& [k, v] : extra.items()) doc[k] = v;
    write_file("manifest.json", doc.dump(2) + "\n");
  }

  const std::filesystem::path& dir() const { return dir_; }
  const std::map<std::string, std::string>& written() const { return written_; }

 private:
  void write(const std::string& name, const std::string& body) {
    write_file(name, body);
    written_[name] = sha256_hex(body);
  }
  void write_file(const std::string& name, const std::string& body) {
    std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
    out << body;
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + (dir_ / name).string());
  }

  std::filesystem::path dir_;
  Provenance provenance_;
  std::map<std::string, std::string> written_;
};

inline Provenance provenance_for(const std::vector<std::filesystem::path>& inputs, std::uint64_t seed) {
  Provenance p;
  p.seed = seed;
  for (const auto& path : inputs) {
    if (std::filesystem::is_directory(path)) {
      std::vector<std::filesystem::path> files;
      for (const auto& e : std::filesystem::directory_iterator(path))
        if (e.is_regular_file()) files.push_back(e.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) p.inputs[f.filename().string()] = sha256_hex(read_file_bytes(f.string()));
    } else {
      p.inputs[path.filename().string()] = sha256_hex(read_file_bytes(path.string()));
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Stage helpers shared with the CLI verbs

inline std::string agreement_csv(const std::vector<AgreementReport>& reports) {
  std::ostringstream os;
  write_agreement_csv(os, reports);
  return os.str();
}

inline nlohmann::ordered_json agreement_json(const std::vector<AgreementReport>& reports) {
  nlohmann::ordered_json a = nlohmann::ordered_json::array();
  for (const auto& r : reports) a.push_back(to_json(r));
  return a;
}

template <typename Fn>
auto run_stage(std::string_view stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.code(), "[" + std::string(stage) + "] " + e.detail());
  }
}

struct PipelineConfig {
  std::filesystem::path ratings_dir;
  std::filesystem::path games_csv;
  std::filesystem::path out_dir;
  double alpha = 0.05;
  KRange k_range{2, 6};
  TreeParams tree;
  std::uint64_t seed = kDefaultSeed;
  int restarts = kDefaultRestarts;
  int n_factors = 3;
  SensitivityClass positive = SensitivityClass::C1_low;
};

struct PipelineResult {
  std::vector<AgreementReport> agreement;
  FactorGrouping grouping;
  ClusteringReport clustering;
  std::vector<LabeledGame> training;
  std::vector<LabeledGame> test;
  SensitivityTree tree;
  EvaluationReport training_eval;
  std::optional<EvaluationReport> test_eval;
  std::vector<std::string> warnings;
  std::map<std::string, std::string> files;  // written report -> sha256
};

inline EvaluationReport evaluate_tree(const SensitivityTree& tree, const std::vector<LabeledGame>& games,
                                      SensitivityClass positive) {
  std::vector<SensitivityClass> predicted;
  std::vector<SensitivityClass> actual;
  for (const auto& g : games) {
    predicted.push_back(predict(tree, g.features));
    actual.push_back(g.label);
  }
  return classification_metrics(confusion_matrix(predicted, actual), positive);
}

inline std::string metrics_csv(const std::vector<std::pair<std::string, EvaluationReport>>& rows) {
  std::ostringstream os;
  write_metrics_csv(os, rows);
  return os.str();
}

inline PipelineResult run_pipeline(const PipelineConfig& cfg) {
  PipelineResult result;
  const auto matrices = run_stage("load-ratings", [&] { return load_export_dir(cfg.ratings_dir); });
  const auto games = run_stage("load-games", [&] { return read_games_csv(cfg.games_csv.string()); });

  ReportWriter out(cfg.out_dir, provenance_for({cfg.ratings_dir, cfg.games_csv}, cfg.seed));

  result.agreement = run_stage("agreement", [&] {
    std::vector<AgreementReport> reports;
    for (const auto& m : matrices) reports.push_back(agreement_report(m, cfg.alpha));
    return reports;
  });
  out.csv("agreement.csv", agreement_csv(result.agreement));
  out.json("agreement.json", agreement_json(result.agreement));

  result.grouping = run_stage("factor-analysis", [&] { return pca_group(per_game_means(matrices), cfg.n_factors); });
  {
    std::ostringstream csv_out;
    write_loadings_csv(csv_out, result.grouping);
    out.csv("factors.csv", csv_out.str());
    out.json("factors.json", to_json(result.grouping));
    std::ostringstream dot_out;
    write_grouping_dot(dot_out, result.grouping);
    out.dot("factors.dot", dot_out.str());
  }

  const auto features = per_game_medians(matrices);
  std::vector<std::string> train_ids;
  std::vector<double> train_drops;
  for (const auto& g : games) {
    if (!features.count(g.game.game_id)) {
      throw Error(ErrorCode::ValidationError, "[load-games] game '" + g.game.game_id +
                                                  "' has no expert ratings in " + cfg.ratings_dir.string());
    }
    if (g.game.split == Split::Training) {
      train_ids.push_back(g.game.game_id);
      train_drops.push_back(iq_drop(g.iq));
    }
  }
  result.clustering = run_stage("clustering", [&] {
    return select_cluster_count(train_ids, train_drops, cfg.k_range, cfg.seed, cfg.restarts);
  });
  result.warnings = result.clustering.warnings;
  {
    std::ostringstream cluster_csv;
    write_clustering_csv(cluster_csv, result.clustering);
    out.csv("clustering.csv", cluster_csv.str());
    out.json("clustering.json", to_json(result.clustering));
  }

  std::ostringstream plot;
  plot << "x,y,game_id,split,class,color\n";
  std::size_t train_pos = 0;
  for (std::size_t i = 0; i < games.size(); ++i) {
    const auto& g = games[i];
    const double drop = iq_drop(g.iq);
    const SensitivityClass cls = g.game.split == Split::Training ? result.clustering.class_of(train_pos++)
                                                                  : classify_drop(result.clustering, drop);
    LabeledGame lg{g.game.game_id, features.at(g.game.game_id), cls};
    (g.game.split == Split::Training ? result.training : result.test).push_back(lg);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", drop);
    plot << i << ',' << buf << ',' << csv::escape(g.game.game_id) << ',' << to_string(g.game.split) << ','
         << to_string(cls) << ',' << (cls == SensitivityClass::C1_low ? "blue" : "red") << '\n';
  }
  out.csv("plot_data.csv", plot.str());
  {
    std::ostringstream training;
    write_labeled_games_csv(training, result.training);
    out.csv("labeled_training.csv", training.str());
    std::ostringstream test;
    write_labeled_games_csv(test, result.test);
    out.csv("labeled_test.csv", test.str());
  }

  result.tree = run_stage("train-tree", [&] { return induce_tree(result.training, cfg.tree); });
  out.raw("tree.json", serialize_tree(result.tree));
  {
    std::ostringstream dot_out;
    write_tree_dot(dot_out, result.tree);
    out.dot("tree.dot", dot_out.str());
  }

  run_stage("evaluate", [&] {
    result.training_eval = evaluate_tree(result.tree, result.training, cfg.positive);
    if (!result.test.empty()) result.test_eval = evaluate_tree(result.tree, result.test, cfg.positive);
    return 0;
  });
  std::vector<std::pair<std::string, EvaluationReport>> rows{{"training", result.training_eval}};
  nlohmann::ordered_json eval_json = {{"training", to_json(result.training_eval)}};
  {
    std::ostringstream c;
    write_confusion_csv(c, result.training_eval.confusion);
    out.csv("confusion_training.csv", c.str());
  }
  if (result.test_eval) {
    rows.emplace_back("test", *result.test_eval);
    eval_json["test"] = to_json(*result.test_eval);
    std::ostringstream c;
    write_confusion_csv(c, result.test_eval->confusion);
    out.csv("confusion_test.csv", c.str());
  }
  out.csv("evaluation.csv", metrics_csv(rows));
  out.json("evaluation.json", eval_json);

  out.manifest({{"parameters",
                 {{"alpha", cfg.alpha},
                  {"k_min", cfg.k_range.min},
                  {"k_max", cfg.k_range.max},
                  {"restarts", cfg.restarts},
                  {"n_factors", cfg.n_factors},
                  {"max_depth", cfg.tree.max_depth},
                  {"min_leaf", cfg.tree.min_leaf},
                  {"min_gain", cfg.tree.min_gain},
                  {"positive_class", to_string(cfg.positive)}}},
                {"warnings", result.warnings}});
  result.files = out.written();
  return result;
}

}  // namespace delaysense
