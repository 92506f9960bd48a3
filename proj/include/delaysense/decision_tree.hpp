#pragma once

// Binary classification tree over ordinal characteristic levels, plus the
// confusion-matrix metrics used to evaluate it.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "delaysense/clustering.hpp"
#include "delaysense/domain.hpp"
#include "delaysense/error.hpp"

namespace delaysense {

using FeatureVector = std::array<int, kCharacteristicCount>;
using PartialFeatures = std::array<std::optional<int>, kCharacteristicCount>;

inline PartialFeatures to_partial(const FeatureVector& f) {
  PartialFeatures p;
  for (std::size_t i = 0; i < f.size(); ++i) p[i] = f[i];
  return p;
}

struct LabeledGame {
  std::string game_id;
  FeatureVector features{};
  SensitivityClass label = SensitivityClass::C1_low;
};

inline void validate_features(const FeatureVector& f, const std::string& game_id) {
  for (Characteristic c : kAllCharacteristics) {
    const int v = f[index_of(c)];
    if (v < 0 || v >= scale_length(c)) {
      throw Error(ErrorCode::OutOfScale, "game '" + game_id + "': " + std::string(code(c)) + "=" +
                                             std::to_string(v) + " outside its scale");
    }
  }
}

/// Median level index; for an even count the lower middle value.
inline int median_level(std::span<const double> levels) {
  if (levels.empty()) throw Error(ErrorCode::DomainError, "median of no ratings");
  std::vector<double> sorted(levels.begin(), levels.end());
  std::sort(sorted.begin(), sorted.end());
  return static_cast<int>(std::lround(sorted[(sorted.size() - 1) / 2]));
}

using ClassCounts = std::array<int, 2>;  // indexed by SensitivityClass

inline std::size_t class_index(SensitivityClass c) { return c == SensitivityClass::C1_low ? 0 : 1; }

inline double gini_impurity(std::span<const int> counts) {
  long total = 0;
  for (int c : counts) {
    if (c < 0) throw Error(ErrorCode::DomainError, "negative class count");
    total += c;
  }
  if (total == 0) throw Error(ErrorCode::EmptyNode, "gini of an empty node");
  double sum_sq = 0.0;
  for (int c : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(total);
    sum_sq += p * p;
  }
  return 1.0 - sum_sq;
}

/// Majority class; ties go to the high-sensitivity class.
inline SensitivityClass majority(const ClassCounts& counts) {
  return counts[0] > counts[1] ? SensitivityClass::C1_low : SensitivityClass::C2_high;
}

struct SplitChoice {
  Characteristic characteristic = Characteristic::TA;
  int threshold = 0;  // left branch: level <= threshold
  double gain = 0.0;
};

// Gains closer than this are treated as ties and resolved by scan order.
inline constexpr double kGainTieTolerance = 1e-12;

/// Scores every (characteristic, threshold) split in TA..ToI order and returns
/// the one with the largest Gini decrease, or nothing without a positive gain.
inline std::optional<SplitChoice> best_split(std::span<const LabeledGame> data,
                                             std::span<const Characteristic> features,
                                             int min_leaf = 1) {
  if (data.size() < 2) return std::nullopt;
  ClassCounts parent{0, 0};
  for (const auto& g : data) ++parent[class_index(g.label)];
  const double parent_gini = gini_impurity(parent);
  const double n = static_cast<double>(data.size());

  std::vector<Characteristic> ordered(features.begin(), features.end());
  std::sort(ordered.begin(), ordered.end());
  ordered.erase(std::unique(ordered.begin(), ordered.end()), ordered.end());

  std::vector<SplitChoice> scored;
  for (Characteristic c : ordered) {
    const int len = scale_length(c);
    // Per-level class histogram, then a prefix sweep over thresholds.
    std::vector<ClassCounts> hist(static_cast<std::size_t>(len), ClassCounts{0, 0});
    for (const auto& g : data) ++hist[static_cast<std::size_t>(g.features[index_of(c)])][class_index(g.label)];
    ClassCounts left{0, 0};
    for (int t = 0; t <= len - 2; ++t) {
      left[0] += hist[static_cast<std::size_t>(t)][0];
      left[1] += hist[static_cast<std::size_t>(t)][1];
      const ClassCounts right{parent[0] - left[0], parent[1] - left[1]};
      const int nl = left[0] + left[1];
      const int nr = right[0] + right[1];
      if (nl < min_leaf || nr < min_leaf || nl == 0 || nr == 0) continue;
      const double weighted = (nl / n) * gini_impurity(left) + (nr / n) * gini_impurity(right);
      scored.push_back({c, t, parent_gini - weighted});
    }
  }
  if (scored.empty()) return std::nullopt;
  double max_gain = scored.front().gain;
  for (const auto& s : scored) max_gain = std::max(max_gain, s.gain);
  if (!(max_gain > kGainTieTolerance)) return std::nullopt;
  for (const auto& s : scored) {
    if (s.gain >= max_gain - kGainTieTolerance) return s;
  }
  return std::nullopt;
}

inline std::optional<SplitChoice> best_split(std::span<const LabeledGame> data, int min_leaf = 1) {
  return best_split(data, kAllCharacteristics, min_leaf);
}

struct TreeParams {
  int max_depth = 4;
  int min_leaf = 2;
  double min_gain = 1e-9;

  friend bool operator==(const TreeParams&, const TreeParams&) = default;
};

struct TreeNode {
  bool leaf = true;
  Characteristic characteristic = Characteristic::TA;
  int threshold = 0;
  int left = -1;   // index into SensitivityTree::nodes, taken when level <= threshold
  int right = -1;  // level > threshold
  SensitivityClass cls = SensitivityClass::C2_high;
  ClassCounts counts{0, 0};

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

/// Immutable once induced; nodes[0] is the root.
struct SensitivityTree {
  std::vector<TreeNode> nodes;
  TreeParams params;

  const TreeNode& root() const { return nodes.front(); }

  int depth() const { return depth_from(0); }

  std::vector<Characteristic> features_used() const {
    std::vector<Characteristic> out;
    for (const auto& n : nodes) {
      if (!n.leaf && std::find(out.begin(), out.end(), n.characteristic) == out.end()) {
        out.push_back(n.characteristic);
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  friend bool operator==(const SensitivityTree&, const SensitivityTree&) = default;

 private:
  int depth_from(int idx) const {
    const auto& n = nodes[static_cast<std::size_t>(idx)];
    if (n.leaf) return 0;
    return 1 + std::max(depth_from(n.left), depth_from(n.right));
  }
};

namespace detail {

inline int grow(SensitivityTree& tree, std::vector<LabeledGame>& data, std::span<const Characteristic> features,
                int depth) {
  TreeNode node;
  for (const auto& g : data) ++node.counts[class_index(g.label)];
  node.cls = majority(node.counts);
  const int idx = static_cast<int>(tree.nodes.size());
  tree.nodes.push_back(node);

  const TreeParams& p = tree.params;
  const bool pure = node.counts[0] == 0 || node.counts[1] == 0;
  if (depth >= p.max_depth || pure || static_cast<int>(data.size()) < 2 * p.min_leaf) return idx;
  const auto split = best_split(data, features, p.min_leaf);
  if (!split || split->gain < p.min_gain) return idx;

  std::vector<LabeledGame> left;
  std::vector<LabeledGame> right;
  for (auto& g : data) {
    (g.features[index_of(split->characteristic)] <= split->threshold ? left : right).push_back(std::move(g));
  }
  data.clear();
  const int l = grow(tree, left, features, depth + 1);
  const int r = grow(tree, right, features, depth + 1);
  TreeNode& self = tree.nodes[static_cast<std::size_t>(idx)];
  self.leaf = false;
  self.characteristic = split->characteristic;
  self.threshold = split->threshold;
  self.left = l;
  self.right = r;
  return idx;
}

}  // namespace detail

inline SensitivityTree induce_tree(std::span<const LabeledGame> data, const TreeParams& params = {},
                                   std::span<const Characteristic> features = kAllCharacteristics) {
  if (params.max_depth < 0 || params.min_leaf < 1) {
    throw Error(ErrorCode::DomainError, "max_depth must be >= 0 and min_leaf >= 1");
  }
  if (data.size() < static_cast<std::size_t>(2 * params.min_leaf) || data.empty()) {
    throw Error(ErrorCode::TooFewGames, "need at least " + std::to_string(2 * params.min_leaf) +
                                            " games, got " + std::to_string(data.size()));
  }
  for (const auto& g : data) validate_features(g.features, g.game_id);
  SensitivityTree tree;
  tree.params = params;
  std::vector<LabeledGame> work(data.begin(), data.end());
  detail::grow(tree, work, features, 0);
  return tree;
}

struct PathStep {
  Characteristic characteristic;
  int threshold;
  bool took_left;  // level <= threshold
};

struct Prediction {
  SensitivityClass cls;
  std::vector<PathStep> path;
};

inline Prediction predict_with_path(const SensitivityTree& tree, const PartialFeatures& features) {
  Prediction out{SensitivityClass::C2_high, {}};
  int idx = 0;
  while (true) {
    const TreeNode& n = tree.nodes.at(static_cast<std::size_t>(idx));
    if (n.leaf) {
      out.cls = n.cls;
      return out;
    }
    const auto& value = features[index_of(n.characteristic)];
    if (!value) {
      throw Error(ErrorCode::MissingFeature, "tree tests " + std::string(code(n.characteristic)) +
                                                 " but no value was given");
    }
    const bool left = *value <= n.threshold;
    out.path.push_back({n.characteristic, n.threshold, left});
    idx = left ? n.left : n.right;
  }
}

inline SensitivityClass predict(const SensitivityTree& tree, const PartialFeatures& features) {
  return predict_with_path(tree, features).cls;
}

inline SensitivityClass predict(const SensitivityTree& tree, const FeatureVector& features) {
  return predict(tree, to_partial(features));
}

/// True when no root-to-leaf path contains a test whose outcome is already
/// decided by an earlier test on the same characteristic.
inline bool paths_consistent(const SensitivityTree& tree) {
  struct Frame {
    int node;
    std::array<int, kCharacteristicCount> lo;  // level >= lo
    std::array<int, kCharacteristicCount> hi;  // level <= hi
  };
  Frame start{0, {}, {}};
  for (Characteristic c : kAllCharacteristics) {
    start.lo[index_of(c)] = 0;
    start.hi[index_of(c)] = scale_length(c) - 1;
  }
  std::vector<Frame> stack{start};
  while (!stack.empty()) {
    Frame f = stack.back();
    stack.pop_back();
    const TreeNode& n = tree.nodes[static_cast<std::size_t>(f.node)];
    if (n.leaf) continue;
    const std::size_t c = index_of(n.characteristic);
    if (n.threshold < f.lo[c] || n.threshold >= f.hi[c]) return false;
    Frame l = f;
    l.node = n.left;
    l.hi[c] = n.threshold;
    Frame r = f;
    r.node = n.right;
    r.lo[c] = n.threshold + 1;
    stack.push_back(l);
    stack.push_back(r);
  }
  return true;
}

// ---------------------------------------------------------------------------
// Serialization

inline constexpr std::string_view kTreeFormat = "delaysense-tree/1";

namespace detail {

inline nlohmann::ordered_json node_json(const SensitivityTree& t, int idx) {
  const TreeNode& n = t.nodes[static_cast<std::size_t>(idx)];
  nlohmann::ordered_json j;
  if (n.leaf) {
    j["class"] = to_string(n.cls);
    j["counts"] = {n.counts[0], n.counts[1]};
    return j;
  }
  j["characteristic"] = code(n.characteristic);
  j["threshold"] = n.threshold;
  j["counts"] = {n.counts[0], n.counts[1]};
  j["le"] = node_json(t, n.left);
  j["gt"] = node_json(t, n.right);
  return j;
}

inline int parse_node(SensitivityTree& t, const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("counts") || !j["counts"].is_array() || j["counts"].size() != 2) {
    throw Error(ErrorCode::ParseError, "tree node without a two-element counts array");
  }
  TreeNode n;
  n.counts = {j["counts"][0].get<int>(), j["counts"][1].get<int>()};
  const int idx = static_cast<int>(t.nodes.size());
  t.nodes.push_back(n);
  if (j.contains("class")) {
    t.nodes[static_cast<std::size_t>(idx)].cls = parse_sensitivity_class(j["class"].get<std::string>());
    return idx;
  }
  if (!j.contains("characteristic") || !j.contains("threshold") || !j.contains("le") || !j.contains("gt")) {
    throw Error(ErrorCode::ParseError, "internal tree node needs characteristic, threshold, le and gt");
  }
  const auto c = parse_characteristic(j["characteristic"].get<std::string>());
  if (!c) throw Error(ErrorCode::ParseError, "unknown characteristic in tree");
  const int threshold = j["threshold"].get<int>();
  if (threshold < 0 || threshold > scale_length(*c) - 2) {
    throw Error(ErrorCode::ParseError, "threshold out of scale in tree");
  }
  const int l = parse_node(t, j["le"]);
  const int r = parse_node(t, j["gt"]);
  TreeNode& self = t.nodes[static_cast<std::size_t>(idx)];
  self.leaf = false;
  self.characteristic = *c;
  self.threshold = threshold;
  self.left = l;
  self.right = r;
  self.cls = majority(self.counts);
  return idx;
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const SensitivityTree& t) {
  nlohmann::ordered_json j;
  j["format"] = kTreeFormat;
  j["params"] = {{"max_depth", t.params.max_depth},
                 {"min_leaf", t.params.min_leaf},
                 {"min_gain", t.params.min_gain}};
  std::vector<std::string> used;
  for (auto c : t.features_used()) used.emplace_back(code(c));
  j["features_used"] = used;
  j["depth"] = t.depth();
  j["root"] = detail::node_json(t, 0);
  return j;
}

/// Canonical text form: identical trees serialize to identical bytes.
inline std::string serialize_tree(const SensitivityTree& t) { return to_json(t).dump(2) + "\n"; }

inline SensitivityTree parse_tree(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("tree file: ") + e.what());
  }
  try {
    if (j.value("format", "") != kTreeFormat) throw Error(ErrorCode::ParseError, "unsupported tree format");
    SensitivityTree t;
    if (j.contains("params")) {
      const auto& p = j["params"];
      t.params.max_depth = p.value("max_depth", t.params.max_depth);
      t.params.min_leaf = p.value("min_leaf", t.params.min_leaf);
      t.params.min_gain = p.value("min_gain", t.params.min_gain);
    }
    if (!j.contains("root")) throw Error(ErrorCode::ParseError, "tree without root");
    detail::parse_node(t, j["root"]);
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("tree file: ") + e.what());
  }
}

inline void write_tree_dot(std::ostream& os, const SensitivityTree& t) {
  os << "digraph sensitivity_tree {\n  node [fontname=\"Helvetica\"];\n";
  for (std::size_t i = 0; i < t.nodes.size(); ++i) {
    const TreeNode& n = t.nodes[i];
    os << "  n" << i << " [";
    if (n.leaf) {
      os << "shape=box, label=\"" << to_string(n.cls) << "\\n[" << n.counts[0] << ", " << n.counts[1] << "]\"";
    } else {
      os << "shape=ellipse, label=\"" << code(n.characteristic) << " <= "
         << scale_levels(n.characteristic)[static_cast<std::size_t>(n.threshold)] << "\"";
    }
    os << "];\n";
  }
  for (std::size_t i = 0; i < t.nodes.size(); ++i) {
    const TreeNode& n = t.nodes[i];
    if (n.leaf) continue;
    os << "  n" << i << " -> n" << n.left << " [label=\"yes\"];\n";
    os << "  n" << i << " -> n" << n.right << " [label=\"no\"];\n";
  }
  os << "}\n";
}

// ---------------------------------------------------------------------------
// Evaluation

/// cells[actual][predicted], both indexed C1_low = 0, C2_high = 1.
struct Confusion {
  std::array<std::array<long, 2>, 2> cells{{{0, 0}, {0, 0}}};

  long total() const { return cells[0][0] + cells[0][1] + cells[1][0] + cells[1][1]; }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

inline Confusion confusion_matrix(std::span<const SensitivityClass> predicted,
                                  std::span<const SensitivityClass> actual) {
  if (predicted.size() != actual.size()) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(predicted.size()) + " predictions for " +
                                               std::to_string(actual.size()) + " labels");
  }
  if (predicted.empty()) throw Error(ErrorCode::LengthMismatch, "no predictions");
  Confusion c;
  for (std::size_t i = 0; i < predicted.size(); ++i) ++c.cells[class_index(actual[i])][class_index(predicted[i])];
  return c;
}

/// Exact non-negative ratio, kept reduced.
struct Fraction {
  long num = 0;
  long den = 1;

  static Fraction make(long n, long d) {
    const long g = std::gcd(n, d);
    return g == 0 ? Fraction{0, 1} : Fraction{n / g, d / g};
  }
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  friend bool operator==(const Fraction&, const Fraction&) = default;
};

inline std::optional<Fraction> ratio(long n, long d) {
  if (d == 0) return std::nullopt;
  return Fraction::make(n, d);
}

/// Decimal expansion truncated (not rounded) to `decimals` places, with
/// trailing zeros dropped: 13/15 -> "0.86", 9/10 -> "0.9", 1 -> "1".
inline std::string format_truncated(const Fraction& f, int decimals) {
  long scale = 1;
  for (int i = 0; i < decimals; ++i) scale *= 10;
  const long scaled = f.num * scale / f.den;
  std::string digits = std::to_string(scaled / scale);
  std::string frac = std::to_string(scaled % scale);
  frac.insert(0, static_cast<std::size_t>(decimals) - frac.size(), '0');
  while (!frac.empty() && frac.back() == '0') frac.pop_back();
  return frac.empty() ? digits : digits + "." + frac;
}

struct EvaluationReport {
  Confusion confusion;
  SensitivityClass positive = SensitivityClass::C1_low;
  long tp = 0, fp = 0, fn = 0, tn = 0;
  std::optional<Fraction> accuracy;
  std::optional<Fraction> precision;
  std::optional<Fraction> recall;
  std::optional<Fraction> specificity;
  std::optional<Fraction> f1;
};

inline EvaluationReport classification_metrics(const Confusion& confusion,
                                               SensitivityClass positive = SensitivityClass::C1_low) {
  if (confusion.total() < 1) throw Error(ErrorCode::EmptyConfusion, "confusion matrix is empty");
  const std::size_t p = class_index(positive);
  const std::size_t q = 1 - p;
  EvaluationReport r;
  r.confusion = confusion;
  r.positive = positive;
  r.tp = confusion.cells[p][p];
  r.fn = confusion.cells[p][q];
  r.fp = confusion.cells[q][p];
  r.tn = confusion.cells[q][q];
  r.accuracy = ratio(r.tp + r.tn, confusion.total());
  r.precision = ratio(r.tp, r.tp + r.fp);
  r.recall = ratio(r.tp, r.tp + r.fn);
  r.specificity = ratio(r.tn, r.tn + r.fp);
  // 2PR/(P+R) reduces to 2TP/(2TP+FP+FN); undefined when P or R is.
  if (r.precision && r.recall) r.f1 = ratio(2 * r.tp, 2 * r.tp + r.fp + r.fn);
  return r;
}

/// Share of items of class `c` that were predicted as `c`.
inline std::optional<Fraction> class_recall(const Confusion& confusion, SensitivityClass c) {
  const std::size_t i = class_index(c);
  return ratio(confusion.cells[i][i], confusion.cells[i][0] + confusion.cells[i][1]);
}

namespace detail {
inline nlohmann::ordered_json fraction_json(const std::optional<Fraction>& f) {
  if (!f) return nullptr;
  return {{"value", f->value()}, {"num", f->num}, {"den", f->den}};
}
inline std::string metric_cell(const std::optional<Fraction>& f) {
  if (!f) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", f->value());
  return buf;
}
}  // namespace detail

inline nlohmann::ordered_json to_json(const EvaluationReport& r) {
  const auto& c = r.confusion.cells;
  return {{"positive_class", to_string(r.positive)},
          {"confusion",
           {{"rows", "actual C1_low, C2_high"},
            {"cols", "predicted C1_low, C2_high"},
            {"cells", {{c[0][0], c[0][1]}, {c[1][0], c[1][1]}}}}},
          {"accuracy", detail::fraction_json(r.accuracy)},
          {"precision", detail::fraction_json(r.precision)},
          {"recall", detail::fraction_json(r.recall)},
          {"specificity", detail::fraction_json(r.specificity)},
          {"f1", detail::fraction_json(r.f1)}};
}

/// Column order: Accuracy, Precision, Recall, Specificity, F1. Undefined
/// metrics are left empty.
inline void write_metrics_csv(std::ostream& os, std::span<const std::pair<std::string, EvaluationReport>> rows) {
  os << "Split,Accuracy,Precision,Recall,Specificity,F1\n";
  for (const auto& [name, r] : rows) {
    os << name << ',' << detail::metric_cell(r.accuracy) << ',' << detail::metric_cell(r.precision) << ','
       << detail::metric_cell(r.recall) << ',' << detail::metric_cell(r.specificity) << ','
       << detail::metric_cell(r.f1) << '\n';
  }
}

inline void write_confusion_csv(std::ostream& os, const Confusion& c) {
  os << "actual,predicted_C1_low,predicted_C2_high,total\n";
  os << "C1_low," << c.cells[0][0] << ',' << c.cells[0][1] << ',' << c.cells[0][0] + c.cells[0][1] << '\n';
  os << "C2_high," << c.cells[1][0] << ',' << c.cells[1][1] << ',' << c.cells[1][0] + c.cells[1][1] << '\n';
  os << "total," << c.cells[0][0] + c.cells[1][0] << ',' << c.cells[0][1] + c.cells[1][1] << ',' << c.total()
     << '\n';
}

}  // namespace delaysense
