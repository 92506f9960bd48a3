// delaysense: command-line front end for the delay-sensitivity toolkit.
//
// Exit status: 0 success, 2 invalid input, 1 internal error.

#include <atomic>
#include <csignal>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "delaysense/delaysense.hpp"
#include "delaysense/study_http.hpp"

namespace ds = delaysense;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitInput = 2;

ds::StudyHttpService* g_service = nullptr;

void on_signal(int) {
  if (g_service != nullptr) g_service->stop();
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

void print_metrics(const std::string& title, const ds::EvaluationReport& r) {
  auto cell = [](const std::optional<ds::Fraction>& f) { return f ? fixed(f->value(), 4) : std::string("n/a"); };
  std::cout << title << " (positive class " << ds::to_string(r.positive) << ")\n"
            << "  Accuracy  Precision  Recall  Specificity  F1\n"
            << "  " << cell(r.accuracy) << "    " << cell(r.precision) << "     " << cell(r.recall) << "  "
            << cell(r.specificity) << "       " << cell(r.f1) << "\n";
  const auto& c = r.confusion.cells;
  std::cout << "  confusion (rows actual C1,C2; cols predicted C1,C2): [[" << c[0][0] << "," << c[0][1] << "],["
            << c[1][0] << "," << c[1][1] << "]]\n";
}

ds::SensitivityTree load_tree(const std::string& path) { return ds::parse_tree(ds::read_file_bytes(path)); }

struct CommonOptions {
  std::string data_dir;
  std::string games;
  std::string out = "delaysense-out";
  double alpha = 0.05;
  std::uint64_t seed = ds::kDefaultSeed;
  int k_min = 2;
  int k_max = 6;
  int restarts = ds::kDefaultRestarts;
  int max_depth = 4;
  int min_leaf = 2;
  int factors = 3;
  std::string positive = "C1_low";
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Delay-sensitivity classification of cloud-gaming content"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ds::kToolVersion));

  CommonOptions o;
  std::string tree_path;
  std::string labeled_path;
  std::string listen = "127.0.0.1:8080";
  std::string video_root;
  std::vector<std::string> feature_args;

  auto* serve = app.add_subcommand("serve", "Run the expert-rating study HTTP service");
  serve->add_option("--listen", listen, "host:port to bind")->envname("DELAYSENSE_LISTEN")->capture_default_str();
  serve->add_option("--data-dir", o.data_dir, "Study storage directory")->envname("DELAYSENSE_DATA_DIR")->required();
  serve->add_option("--video-root", video_root, "Directory served under /videos")->envname("DELAYSENSE_VIDEO_ROOT");

  auto* icc = app.add_subcommand("icc", "Rater agreement (ICC) per characteristic from a ratings export");
  icc->add_option("--data-dir", o.data_dir, "Ratings export directory (matrix_<code>.csv)")->required();
  icc->add_option("--out", o.out, "Output directory")->capture_default_str();
  icc->add_option("--alpha", o.alpha, "1 - confidence level of the ICC interval")->capture_default_str();

  auto* pca = app.add_subcommand("pca", "Group characteristics into factors by PCA");
  pca->add_option("--data-dir", o.data_dir, "Ratings export directory")->required();
  pca->add_option("--out", o.out, "Output directory")->capture_default_str();
  pca->add_option("--factors", o.factors, "Number of retained components")->capture_default_str();

  auto* cluster = app.add_subcommand("cluster", "Cluster training games by IQ drop into sensitivity classes");
  cluster->add_option("--games", o.games, "Games CSV with IQ measurements")->required();
  cluster->add_option("--out", o.out, "Output directory")->capture_default_str();
  cluster->add_option("--seed", o.seed, "k-means seed")->capture_default_str();
  cluster->add_option("--k-min", o.k_min, "Smallest k tried")->capture_default_str();
  cluster->add_option("--k-max", o.k_max, "Largest k tried")->capture_default_str();
  cluster->add_option("--restarts", o.restarts, "k-means++ restarts per k")->capture_default_str();

  auto* train = app.add_subcommand("train-tree", "Induce a sensitivity tree from labeled games");
  train->add_option("--labeled", labeled_path, "Labeled games CSV (game_id, TA..ToI, label)")->required();
  train->add_option("--out", o.out, "Output directory")->capture_default_str();
  train->add_option("--max-depth", o.max_depth, "Maximum tree depth")->capture_default_str();
  train->add_option("--min-leaf", o.min_leaf, "Minimum games per leaf")->capture_default_str();

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a tree on labeled games");
  evaluate->add_option("--tree", tree_path, "Tree JSON file")->required();
  evaluate->add_option("--labeled", labeled_path, "Labeled games CSV")->required();
  evaluate->add_option("--out", o.out, "Output directory (evaluation.csv, confusion.csv)");
  evaluate->add_option("--positive-class", o.positive, "C1_low or C2_high")->capture_default_str();

  auto* classify = app.add_subcommand("classify", "Classify one game from characteristic levels");
  classify->add_option("--tree", tree_path, "Tree JSON file")->required();
  classify->add_option("features", feature_args, "Levels as CODE=index, e.g. TA=3 ToI=4")->required();

  auto* pipeline = app.add_subcommand("pipeline", "Run agreement, grouping, clustering, tree and evaluation");
  pipeline->add_option("--data-dir", o.data_dir, "Ratings export directory")->required();
  pipeline->add_option("--games", o.games, "Games CSV with IQ measurements and split")->required();
  pipeline->add_option("--out", o.out, "Output directory")->capture_default_str();
  pipeline->add_option("--alpha", o.alpha, "1 - confidence level of the ICC interval")->capture_default_str();
  pipeline->add_option("--seed", o.seed, "k-means seed")->capture_default_str();
  pipeline->add_option("--k-min", o.k_min, "Smallest k tried")->capture_default_str();
  pipeline->add_option("--k-max", o.k_max, "Largest k tried")->capture_default_str();
  pipeline->add_option("--restarts", o.restarts, "k-means++ restarts per k")->capture_default_str();
  pipeline->add_option("--max-depth", o.max_depth, "Maximum tree depth")->capture_default_str();
  pipeline->add_option("--min-leaf", o.min_leaf, "Minimum games per leaf")->capture_default_str();
  pipeline->add_option("--factors", o.factors, "Number of PCA components")->capture_default_str();
  pipeline->add_option("--positive-class", o.positive, "C1_low or C2_high")->capture_default_str();

  auto* export_dot = app.add_subcommand("export-dot", "Render a tree as Graphviz DOT");
  export_dot->add_option("--tree", tree_path, "Tree JSON file")->required();
  export_dot->add_option("--out", o.out, "Output .dot file ('-' for stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (*serve) {
      const auto colon = listen.rfind(':');
      if (colon == std::string::npos) throw ds::Error(ds::ErrorCode::ValidationError, "--listen must be host:port");
      const std::string host = listen.substr(0, colon);
      const int port = std::stoi(listen.substr(colon + 1));
      ds::StudyStore store(o.data_dir);
      ds::StudyHttpService service(store, video_root);
      g_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "delaysense " << ds::kToolVersion << " serving on " << listen << " (data: " << o.data_dir << ")\n";
      if (!service.listen(host, port)) throw ds::Error(ds::ErrorCode::IoError, "cannot listen on " + listen);
      return kExitOk;
    }

    if (*icc) {
      const auto matrices = ds::run_stage("load-ratings", [&] { return ds::load_export_dir(o.data_dir); });
      std::vector<ds::AgreementReport> reports;
      for (const auto& m : matrices) reports.push_back(ds::run_stage("agreement", [&] { return ds::agreement_report(m, o.alpha); }));
      ds::ReportWriter out(o.out, ds::provenance_for({o.data_dir}, o.seed));
      out.csv("agreement.csv", ds::agreement_csv(reports));
      out.json("agreement.json", ds::agreement_json(reports));
      out.manifest({{"parameters", {{"alpha", o.alpha}}}});
      std::cout << "Characteristic  ICC    CI              F       p       Label\n";
      for (const auto& r : reports) {
        std::cout << "  " << ds::code(r.characteristic) << "\t" << fixed(r.icc, 2) << "  [" << fixed(r.ci_low, 2) << ", "
                  << fixed(r.ci_high, 2) << "]  " << fixed(r.f, 2) << "  " << ds::format_p_value(r.p) << "  "
                  << ds::to_string(r.label) << "\n";
      }
      return kExitOk;
    }

    if (*pca) {
      const auto matrices = ds::run_stage("load-ratings", [&] { return ds::load_export_dir(o.data_dir); });
      const auto g = ds::run_stage("factor-analysis", [&] { return ds::pca_group(ds::per_game_means(matrices), o.factors); });
      ds::ReportWriter out(o.out, ds::provenance_for({o.data_dir}, o.seed));
      std::ostringstream csv_out;
      ds::write_loadings_csv(csv_out, g);
      out.csv("factors.csv", csv_out.str());
      out.json("factors.json", ds::to_json(g));
      std::ostringstream dot;
      ds::write_grouping_dot(dot, g);
      out.dot("factors.dot", dot.str());
      out.manifest({{"parameters", {{"n_factors", o.factors}}}});
      std::cout << csv_out.str();
      return kExitOk;
    }

    if (*cluster) {
      const auto games = ds::run_stage("load-games", [&] { return ds::read_games_csv(o.games); });
      std::vector<std::string> ids;
      std::vector<double> drops;
      for (const auto& g : games) {
        if (g.game.split != ds::Split::Training) continue;
        ids.push_back(g.game.game_id);
        drops.push_back(ds::iq_drop(g.iq));
      }
      const auto report = ds::run_stage("clustering", [&] {
        return ds::select_cluster_count(ids, drops, {o.k_min, o.k_max}, o.seed, o.restarts);
      });
      ds::ReportWriter out(o.out, ds::provenance_for({o.games}, o.seed));
      std::ostringstream csv_out;
      ds::write_clustering_csv(csv_out, report);
      out.csv("clustering.csv", csv_out.str());
      std::ostringstream plot;
      ds::write_plot_data_csv(plot, report);
      out.csv("plot_data.csv", plot.str());
      out.json("clustering.json", ds::to_json(report));
      out.manifest({{"parameters", {{"k_min", o.k_min}, {"k_max", o.k_max}, {"restarts", o.restarts}}}});
      std::cout << "k=" << report.k << " silhouette=" << fixed(report.silhouette, 3) << "\n";
      for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
      return kExitOk;
    }

    if (*train) {
      const auto games = ds::run_stage("load-labeled", [&] { return ds::read_labeled_games_csv(labeled_path); });
      ds::TreeParams params;
      params.max_depth = o.max_depth;
      params.min_leaf = o.min_leaf;
      const auto tree = ds::run_stage("train-tree", [&] { return ds::induce_tree(games, params); });
      ds::ReportWriter out(o.out, ds::provenance_for({labeled_path}, o.seed));
      out.raw("tree.json", ds::serialize_tree(tree));
      std::ostringstream dot;
      ds::write_tree_dot(dot, tree);
      out.dot("tree.dot", dot.str());
      out.manifest({{"parameters", {{"max_depth", o.max_depth}, {"min_leaf", o.min_leaf}}}});
      std::cout << "depth " << tree.depth() << ", features:";
      for (auto c : tree.features_used()) std::cout << ' ' << ds::code(c);
      std::cout << "\n";
      return kExitOk;
    }

    if (*evaluate) {
      const auto tree = ds::run_stage("load-tree", [&] { return load_tree(tree_path); });
      const auto games = ds::run_stage("load-labeled", [&] { return ds::read_labeled_games_csv(labeled_path); });
      const auto positive = ds::parse_sensitivity_class(o.positive);
      const auto report = ds::run_stage("evaluate", [&] { return ds::evaluate_tree(tree, games, positive); });
      if (evaluate->count("--out") > 0) {
        ds::ReportWriter out(o.out, ds::provenance_for({tree_path, labeled_path}, o.seed));
        out.csv("evaluation.csv", ds::metrics_csv({{"evaluated", report}}));
        std::ostringstream c;
        ds::write_confusion_csv(c, report.confusion);
        out.csv("confusion.csv", c.str());
        out.json("evaluation.json", ds::to_json(report));
        out.manifest({{"parameters", {{"positive_class", o.positive}}}});
      }
      print_metrics("evaluation", report);
      return kExitOk;
    }

    if (*classify) {
      const auto tree = ds::run_stage("load-tree", [&] { return load_tree(tree_path); });
      ds::PartialFeatures features;
      for (const auto& arg : feature_args) {
        const auto eq = arg.find('=');
        if (eq == std::string::npos) throw ds::Error(ds::ErrorCode::ParseError, "expected CODE=level, got '" + arg + "'");
        const auto c = ds::characteristic_from_code(arg.substr(0, eq));
        int level = 0;
        try {
          level = std::stoi(arg.substr(eq + 1));
        } catch (const std::exception&) {
          throw ds::Error(ds::ErrorCode::ParseError, "level of " + arg.substr(0, eq) + " is not an integer");
        }
        ds::validate_rating({"cli", "cli", c, level, std::nullopt, {}});
        features[ds::index_of(c)] = level;
      }
      const auto prediction = ds::predict_with_path(tree, features);
      std::cout << ds::to_string(prediction.cls) << "\n";
      for (const auto& step : prediction.path) {
        std::cout << "  " << ds::code(step.characteristic) << " ≤ " << step.threshold << ": "
                  << (step.took_left ? "yes" : "no") << "\n";
      }
      return kExitOk;
    }

    if (*pipeline) {
      ds::PipelineConfig cfg;
      cfg.ratings_dir = o.data_dir;
      cfg.games_csv = o.games;
      cfg.out_dir = o.out;
      cfg.alpha = o.alpha;
      cfg.k_range = {o.k_min, o.k_max};
      cfg.seed = o.seed;
      cfg.restarts = o.restarts;
      cfg.n_factors = o.factors;
      cfg.tree.max_depth = o.max_depth;
      cfg.tree.min_leaf = o.min_leaf;
      cfg.positive = ds::parse_sensitivity_class(o.positive);
      const auto result = ds::run_pipeline(cfg);
      std::cout << "agreement:\n";
      for (const auto& r : result.agreement) {
        std::cout << "  " << ds::code(r.characteristic) << " ICC " << fixed(r.icc, 2) << " " << ds::to_string(r.label) << "\n";
      }
      std::cout << "clusters: k=" << result.clustering.k << " silhouette=" << fixed(result.clustering.silhouette, 3) << "\n";
      std::cout << "tree depth " << result.tree.depth() << ", features:";
      for (auto c : result.tree.features_used()) std::cout << ' ' << ds::code(c);
      std::cout << "\n";
      print_metrics("training", result.training_eval);
      if (result.test_eval) print_metrics("test", *result.test_eval);
      for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
      std::cout << "reports written to " << o.out << "\n";
      return kExitOk;
    }

    if (*export_dot) {
      const auto tree = ds::run_stage("load-tree", [&] { return load_tree(tree_path); });
      std::ostringstream dot;
      ds::write_tree_dot(dot, tree);
      if (export_dot->count("--out") == 0 || o.out == "-") {
        std::cout << dot.str();
      } else {
        std::ofstream f(o.out, std::ios::binary | std::ios::trunc);
        f << dot.str();
        if (!f) throw ds::Error(ds::ErrorCode::IoError, "cannot write " + o.out);
      }
      return kExitOk;
    }
  } catch (const ds::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ds::is_input_error(e.code()) ? kExitInput : kExitInternal;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}
