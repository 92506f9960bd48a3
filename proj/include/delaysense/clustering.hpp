#pragma once

// Delay-sensitivity classes from the drop of input quality between the
// 0 ms and 200 ms conditions: k-means with silhouette-based choice of k.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "delaysense/domain.hpp"
#include "delaysense/error.hpp"

namespace delaysense {

enum class SensitivityClass { C1_low, C2_high };

inline std::string_view to_string(SensitivityClass c) {
  return c == SensitivityClass::C1_low ? "C1_low" : "C2_high";
}

inline SensitivityClass parse_sensitivity_class(std::string_view text) {
  if (text == "C1_low" || text == "C1" || text == "low") return SensitivityClass::C1_low;
  if (text == "C2_high" || text == "C2" || text == "high") return SensitivityClass::C2_high;
  throw Error(ErrorCode::ParseError, "unknown sensitivity class '" + std::string(text) + "'");
}

/// Degradation of input quality caused by the added delay. Negative values
/// (quality improved under delay) are kept as measured.
inline double iq_drop(const IQMeasurement& m) {
  validate_measurement(m);
  return m.iq_0ms - m.iq_200ms;
}

using Point = std::vector<double>;

struct KMeansResult {
  std::vector<int> assignments;
  std::vector<Point> centroids;  // sorted ascending (lexicographic)
  double inertia = 0.0;
};

namespace detail {

inline double squared_distance(const Point& a, const Point& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

// Uniform double in [0,1) built from raw engine bits so that results do not
// depend on the standard library's distribution implementation.
inline double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::size_t count_distinct(const std::vector<Point>& points) {
  std::set<Point> distinct(points.begin(), points.end());
  return distinct.size();
}

inline std::vector<Point> kmeanspp_seed(const std::vector<Point>& points, int k, std::mt19937_64& rng) {
  const std::size_t n = points.size();
  std::vector<Point> centers;
  centers.push_back(points[static_cast<std::size_t>(unit_draw(rng) * static_cast<double>(n))]);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(points[i], centers.back()));
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double target = unit_draw(rng) * total;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        if (target < d2[i]) {
          pick = i;
          break;
        }
        target -= d2[i];
      }
      while (d2[pick] <= 0.0) pick = (pick + n - 1) % n;  // never re-pick an existing center
    }
    centers.push_back(points[pick]);
  }
  return centers;
}

inline KMeansResult lloyd(const std::vector<Point>& points, std::vector<Point> centers, int max_iterations) {
  const std::size_t n = points.size();
  const std::size_t k = centers.size();
  const std::size_t dim = points.front().size();
  std::vector<int> assign(n, -1);
  for (int iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = squared_distance(points[i], centers[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double d = squared_distance(points[i], centers[c]);
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(c);
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    if (!changed) break;

    std::vector<Point> sums(k, Point(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(assign[i]);
      ++counts[c];
      for (std::size_t d = 0; d < dim; ++d) sums[c][d] += points[i][d];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // Empty cluster: move it onto the point worst served by its center.
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          if (assign[i] < 0) continue;
          const double d = squared_distance(points[i], centers[static_cast<std::size_t>(assign[i])]);
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        centers[c] = points[far];
        assign[far] = -1;
        continue;
      }
      for (std::size_t d = 0; d < dim; ++d) centers[c][d] = sums[c][d] / static_cast<double>(counts[c]);
    }
  }

  KMeansResult r;
  r.centroids = centers;
  r.assignments.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    int best = 0;
    double best_d = squared_distance(points[i], centers[0]);
    for (std::size_t c = 1; c < k; ++c) {
      const double d = squared_distance(points[i], centers[c]);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    r.assignments[i] = best;
    r.inertia += best_d;
  }
  return r;
}

/// Centers of the optimal partition of 1-D points into k contiguous groups of
/// the sorted values, by dynamic programming over prefix sums. O(k n^2).
inline std::vector<Point> optimal_centers_1d(const std::vector<Point>& points, int k) {
  std::vector<double> v;
  v.reserve(points.size());
  for (const Point& p : points) v.push_back(p[0]);
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  const auto uk = static_cast<std::size_t>(k);
  std::vector<double> sum(n + 1, 0.0), sum_sq(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    sum[i + 1] = sum[i] + v[i];
    sum_sq[i + 1] = sum_sq[i] + v[i] * v[i];
  }
  auto cost = [&](std::size_t i, std::size_t j) {  // group v[i..j)
    const double s = sum[j] - sum[i];
    return std::max(0.0, sum_sq[j] - sum_sq[i] - s * s / static_cast<double>(j - i));
  };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best(uk + 1, std::vector<double>(n + 1, inf));
  std::vector<std::vector<std::size_t>> cut(uk + 1, std::vector<std::size_t>(n + 1, 0));
  best[0][0] = 0.0;
  for (std::size_t c = 1; c <= uk; ++c)
    for (std::size_t j = c; j <= n; ++j)
      for (std::size_t i = c - 1; i < j; ++i) {
        const double total = best[c - 1][i] + cost(i, j);
        if (total < best[c][j]) {
          best[c][j] = total;
          cut[c][j] = i;
        }
      }
  std::vector<Point> centers(uk);
  std::size_t j = n;
  for (std::size_t c = uk; c >= 1; --c) {
    const std::size_t i = cut[c][j];
    centers[c - 1] = Point{(sum[j] - sum[i]) / static_cast<double>(j - i)};
    j = i;
  }
  return centers;
}

}  // namespace detail

inline constexpr int kDefaultRestarts = 32;
inline constexpr std::uint64_t kDefaultSeed = 20200615;
inline constexpr int kMaxLloydIterations = 300;

/// k-means++ seeded Lloyd iterations, best of `restarts` by inertia.
inline KMeansResult kmeans(const std::vector<Point>& points, int k, std::uint64_t seed = kDefaultSeed,
                           int restarts = kDefaultRestarts) {
  if (k < 1) throw Error(ErrorCode::DomainError, "k must be >= 1");
  if (restarts < 1) throw Error(ErrorCode::DomainError, "restarts must be >= 1");
  if (points.empty() || detail::count_distinct(points) < static_cast<std::size_t>(k)) {
    throw Error(ErrorCode::TooFewDistinctPoints,
                "need at least " + std::to_string(k) + " distinct points");
  }
  const std::size_t dim = points.front().size();
  for (const Point& p : points) {
    if (p.size() != dim) throw Error(ErrorCode::DomainError, "points differ in dimension");
  }

  std::mt19937_64 rng(seed);
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    KMeansResult trial = detail::lloyd(points, detail::kmeanspp_seed(points, k, rng), kMaxLloydIterations);
    if (trial.inertia < best.inertia) best = std::move(trial);
  }
  // In one dimension the exact optimum is cheap; restarts alone can miss it.
  if (dim == 1) {
    KMeansResult exact = detail::lloyd(points, detail::optimal_centers_1d(points, k), kMaxLloydIterations);
    if (exact.inertia < best.inertia) best = std::move(exact);
  }

  std::vector<int> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return best.centroids[static_cast<std::size_t>(a)] < best.centroids[static_cast<std::size_t>(b)]; });
  std::vector<int> relabel(static_cast<std::size_t>(k));
  std::vector<Point> sorted;
  for (int i = 0; i < k; ++i) {
    relabel[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = i;
    sorted.push_back(best.centroids[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
  }
  for (int& a : best.assignments) a = relabel[static_cast<std::size_t>(a)];
  best.centroids = std::move(sorted);
  return best;
}

inline std::vector<Point> as_points(std::span<const double> values) {
  std::vector<Point> pts;
  pts.reserve(values.size());
  for (double v : values) pts.push_back({v});
  return pts;
}

inline KMeansResult kmeans(std::span<const double> values, int k, std::uint64_t seed = kDefaultSeed,
                           int restarts = kDefaultRestarts) {
  return kmeans(as_points(values), k, seed, restarts);
}

/// Mean silhouette with Euclidean distance. Singleton clusters score 0.
inline double silhouette(const std::vector<Point>& points, std::span<const int> assignments) {
  if (points.size() != assignments.size()) throw Error(ErrorCode::LengthMismatch, "one assignment per point");
  if (points.empty()) throw Error(ErrorCode::SingleCluster, "no points");
  const int k = *std::max_element(assignments.begin(), assignments.end()) + 1;
  std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
  for (int a : assignments) {
    if (a < 0) throw Error(ErrorCode::DomainError, "negative cluster index");
    ++sizes[static_cast<std::size_t>(a)];
  }
  if (k < 2) throw Error(ErrorCode::SingleCluster, "silhouette needs at least two clusters");
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    if (sizes[c] == 0) throw Error(ErrorCode::DomainError, "cluster " + std::to_string(c) + " is empty");
  }

  const std::size_t n = points.size();
  double total = 0.0;
  std::vector<double> sum_to(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < n; ++i) {
    const auto own = static_cast<std::size_t>(assignments[i]);
    if (sizes[own] == 1) continue;
    std::fill(sum_to.begin(), sum_to.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      sum_to[static_cast<std::size_t>(assignments[j])] += std::sqrt(detail::squared_distance(points[i], points[j]));
    }
    const double a = sum_to[own] / static_cast<double>(sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < sum_to.size(); ++c) {
      if (c != own) b = std::min(b, sum_to[c] / static_cast<double>(sizes[c]));
    }
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

inline double silhouette(std::span<const double> values, std::span<const int> assignments) {
  return silhouette(as_points(values), assignments);
}

// Best silhouettes of 30 uniform 1-D draws mostly fall between 0.57 and 0.77,
// so anything below this carries no real cluster evidence.
inline constexpr double kLowConfidenceSilhouette = 0.75;

struct ClusteringReport {
  std::vector<std::string> ids;
  std::vector<double> points;  // ΔIQ per id
  std::vector<int> assignments;
  std::vector<double> centroids;  // ascending
  int k = 0;
  double silhouette = 0.0;
  std::vector<SensitivityClass> class_map;  // per cluster index
  std::vector<std::pair<int, double>> candidates;  // (k, silhouette) for every k tried
  std::uint64_t seed = kDefaultSeed;
  std::vector<std::string> warnings;

  SensitivityClass class_of(std::size_t point) const {
    return class_map[static_cast<std::size_t>(assignments[point])];
  }
};

/// Clusters whose centroid lies nearer the lowest centroid than the highest
/// are low sensitivity; with k = 2 this is simply lower/upper cluster.
inline std::vector<SensitivityClass> sensitivity_class_map(std::span<const double> sorted_centroids) {
  std::vector<SensitivityClass> out;
  const double lo = sorted_centroids.front();
  const double hi = sorted_centroids.back();
  for (std::size_t c = 0; c < sorted_centroids.size(); ++c) {
    if (c == 0) {
      out.push_back(SensitivityClass::C1_low);
    } else if (c + 1 == sorted_centroids.size()) {
      out.push_back(SensitivityClass::C2_high);
    } else {
      out.push_back(sorted_centroids[c] - lo < hi - sorted_centroids[c] ? SensitivityClass::C1_low
                                                                          : SensitivityClass::C2_high);
    }
  }
  return out;
}

struct KRange {
  int min = 2;
  int max = 6;
};

inline ClusteringReport select_cluster_count(const std::vector<std::string>& ids, std::span<const double> drops,
                                             KRange range = {}, std::uint64_t seed = kDefaultSeed,
                                             int restarts = kDefaultRestarts) {
  if (ids.size() != drops.size()) throw Error(ErrorCode::LengthMismatch, "one id per point");
  if (range.min < 2 || range.max < range.min) {
    throw Error(ErrorCode::DomainError, "k range must satisfy 2 <= min <= max");
  }
  const std::vector<Point> pts = as_points(drops);

  ClusteringReport report;
  report.ids = ids;
  report.points.assign(drops.begin(), drops.end());
  report.seed = seed;
  double best_sil = -std::numeric_limits<double>::infinity();
  KMeansResult best;
  for (int k = range.min; k <= range.max; ++k) {
    KMeansResult r = kmeans(pts, k, seed, restarts);
    const double s = silhouette(pts, r.assignments);
    report.candidates.emplace_back(k, s);
    if (s > best_sil) {
      best_sil = s;
      best = std::move(r);
      report.k = k;
    }
  }
  report.silhouette = best_sil;
  report.assignments = best.assignments;
  for (const Point& c : best.centroids) report.centroids.push_back(c[0]);
  report.class_map = sensitivity_class_map(report.centroids);

  if (best_sil < kLowConfidenceSilhouette) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "low confidence: best silhouette %.3f below %.2f", best_sil,
                  kLowConfidenceSilhouette);
    report.warnings.emplace_back(buf);
  }
  for (std::size_t i = 0; i < drops.size(); ++i) {
    if (drops[i] < 0.0) report.warnings.push_back("negative IQ drop for '" + ids[i] + "'");
  }
  return report;
}

/// Class of a new drop value by its nearest centroid (ties go to the higher cluster).
inline SensitivityClass classify_drop(const ClusteringReport& report, double drop) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < report.centroids.size(); ++c) {
    if (std::fabs(drop - report.centroids[c]) <= std::fabs(drop - report.centroids[best])) best = c;
  }
  return report.class_map[best];
}

inline nlohmann::ordered_json to_json(const ClusteringReport& r) {
  nlohmann::ordered_json games = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < r.ids.size(); ++i) {
    games.push_back({{"game_id", r.ids[i]},
                     {"delta_iq", r.points[i]},
                     {"cluster", r.assignments[i]},
                     {"class", to_string(r.class_of(i))}});
  }
  nlohmann::ordered_json candidates = nlohmann::ordered_json::array();
  for (const auto& [k, s] : r.candidates) candidates.push_back({{"k", k}, {"silhouette", s}});
  std::vector<std::string> classes;
  for (auto c : r.class_map) classes.emplace_back(to_string(c));
  return {{"k", r.k},          {"silhouette", r.silhouette}, {"centroids", r.centroids},
          {"class_map", classes}, {"seed", r.seed},          {"candidates", candidates},
          {"games", games},    {"warnings", r.warnings}};
}

inline void write_clustering_csv(std::ostream& os, const ClusteringReport& r) {
  os << "game_id,delta_iq,cluster,class\n";
  char buf[64];
  for (std::size_t i = 0; i < r.ids.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.6f", r.points[i]);
    os << r.ids[i] << ',' << buf << ',' << r.assignments[i] << ',' << to_string(r.class_of(i)) << '\n';
  }
}

/// x = game index, y = ΔIQ, colored by class; for external plotting tools.
inline void write_plot_data_csv(std::ostream& os, const ClusteringReport& r) {
  os << "x,y,game_id,class,color\n";
  char buf[64];
  for (std::size_t i = 0; i < r.ids.size(); ++i) {
    const SensitivityClass c = r.class_of(i);
    std::snprintf(buf, sizeof buf, "%.6f", r.points[i]);
    os << i << ',' << buf << ',' << r.ids[i] << ',' << to_string(c) << ','
       << (c == SensitivityClass::C1_low ? "blue" : "red") << '\n';
  }
}

}  // namespace delaysense
