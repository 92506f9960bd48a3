#pragma once

// Game characteristics rated by experts, their ordinal scales, and the
// records that flow from the rating study into the statistics modules.

#include <algorithm>
#include <array>
#include <chrono>
#include <cstddef>
#include <ctime>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "delaysense/error.hpp"

namespace delaysense {

enum class Characteristic : int { TA = 0, SA, PR, NID, CQ, IoA, NRA, FF, ToI };

inline constexpr std::size_t kCharacteristicCount = 9;

inline constexpr std::array<Characteristic, kCharacteristicCount> kAllCharacteristics = {
    Characteristic::TA,  Characteristic::SA,  Characteristic::PR,
    Characteristic::NID, Characteristic::CQ,  Characteristic::IoA,
    Characteristic::NRA, Characteristic::FF,  Characteristic::ToI};

constexpr std::size_t index_of(Characteristic c) { return static_cast<std::size_t>(c); }

constexpr std::string_view code(Characteristic c) {
  constexpr std::array<std::string_view, kCharacteristicCount> codes = {
      "TA", "SA", "PR", "NID", "CQ", "IoA", "NRA", "FF", "ToI"};
  return codes[index_of(c)];
}

inline std::optional<Characteristic> parse_characteristic(std::string_view text) {
  for (Characteristic c : kAllCharacteristics) {
    if (code(c) == text) return c;
  }
  return std::nullopt;
}

inline Characteristic characteristic_from_code(std::string_view text) {
  if (auto c = parse_characteristic(text)) return *c;
  throw Error(ErrorCode::UnknownCharacteristic, "unknown characteristic code '" + std::string(text) + "'");
}

struct CharacteristicInfo {
  Characteristic characteristic;
  std::string_view name;
  std::string_view definition;
  std::string_view low_example;
  std::string_view high_example;
};

// Short rater-facing descriptions. The scale labels below are the fixed
// category anchors; everything else here is explanatory text for the UI.
inline const std::array<CharacteristicInfo, kCharacteristicCount>& characteristic_catalog() {
  static const std::array<CharacteristicInfo, kCharacteristicCount> catalog = {{
      {Characteristic::TA, "Temporal Accuracy",
       "Length of the time window a player has to carry out an intended interaction.",
       "turn-based board game without a clock", "reaction duel where the first shot wins"},
      {Characteristic::SA, "Spatial Accuracy",
       "Precision with which the player must position, aim or select to succeed.",
       "pinball, where only paddle timing matters", "aiming a scoped rifle at a distant target"},
      {Characteristic::PR, "Predictability",
       "How well upcoming events (object positions, event timing) can be anticipated.",
       "card game with no action-level events", "shooter against human opponents"},
      {Characteristic::NID, "Number of Input Directions",
       "Degrees of freedom of the controls: translations and rotations over all input elements.",
       "jump-only runner (one direction)", "keyboard movement plus mouse look (eight directions)"},
      {Characteristic::CQ, "Consequences",
       "Severity of the penalty (lost progress, points, rewards) when an action fails.",
       "racing game where a mistake still leaves the race winnable",
       "platformer where a single collision ends the game"},
      {Characteristic::IoA, "Importance of Actions",
       "How much a single input can change the outcome of the scenario.",
       "exploring a map", "single-shot sniper fire"},
      {Characteristic::NRA, "Number of Required Actions",
       "Minimum rate of inputs needed to play the scenario (actions per minute).",
       "puzzle with an action every few seconds", "several actions every second"},
      {Characteristic::FF, "Feedback Frequency",
       "How often the game answers the player with visual, audio or haptic feedback.",
       "holding one key down for long stretches", "continuously steering a cursor"},
      {Characteristic::ToI, "Type of Input",
       "Temporal nature of the inputs, from discrete key presses to continuous control.",
       "holding or repeatedly pressing a key", "continuous mouse aiming mixed with button presses"},
  }};
  return catalog;
}

inline const CharacteristicInfo& info(Characteristic c) { return characteristic_catalog()[index_of(c)]; }

/// Ordered category labels; level index i refers to the i-th label.
inline std::span<const std::string_view> scale_levels(Characteristic c) {
  static constexpr std::array<std::string_view, 6> ta = {
      "unlimited", "long", "moderate", "short", "extremely short", "immediate"};
  static constexpr std::array<std::string_view, 4> sa = {
      "no required accuracy", "low required accuracy", "moderately required accuracy",
      "high required accuracy"};
  static constexpr std::array<std::string_view, 4> pr = {
      "nothing to predict", "easy to predict", "difficult to predict", "not predictable"};
  static constexpr std::array<std::string_view, 5> nid = {"1", "2", "3", "4", "more than 4"};
  static constexpr std::array<std::string_view, 3> low_medium_high = {"low", "medium", "high"};
  static constexpr std::array<std::string_view, 3> nra = {"low", "moderate", "high"};
  static constexpr std::array<std::string_view, 3> ff = {"rarely", "sometimes", "very often"};
  static constexpr std::array<std::string_view, 5> toi = {
      "Quasi-Continuous", "Quasi-Continuous and discrete", "Only Discrete", "Only Continuous",
      "Continuous and Discrete"};
  switch (c) {
    case Characteristic::TA: return ta;
    case Characteristic::SA: return sa;
    case Characteristic::PR: return pr;
    case Characteristic::NID: return nid;
    case Characteristic::CQ: return low_medium_high;
    case Characteristic::IoA: return low_medium_high;
    case Characteristic::NRA: return nra;
    case Characteristic::FF: return ff;
    case Characteristic::ToI: return toi;
  }
  return {};
}

inline int scale_length(Characteristic c) { return static_cast<int>(scale_levels(c).size()); }

/// Sum of all scale lengths; changes whenever a scale is edited.
inline int schema_checksum() {
  int total = 0;
  for (Characteristic c : kAllCharacteristics) total += scale_length(c);
  return total;
}

inline nlohmann::ordered_json characteristic_schema_json() {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& entry : characteristic_catalog()) {
    nlohmann::ordered_json levels = nlohmann::ordered_json::array();
    for (auto label : scale_levels(entry.characteristic)) levels.push_back(label);
    out.push_back({{"code", code(entry.characteristic)},
                   {"name", entry.name},
                   {"definition", entry.definition},
                   {"levels", levels},
                   {"examples", {{"lowest", entry.low_example}, {"highest", entry.high_example}}}});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Time helpers. All timestamps are UTC, serialized as ISO-8601 with a Z suffix.

using Timestamp = std::chrono::sys_seconds;

inline std::string format_timestamp(Timestamp t) {
  std::time_t raw = t.time_since_epoch().count();
  std::tm tm{};
  gmtime_r(&raw, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline Timestamp parse_timestamp(std::string_view text) {
  std::tm tm{};
  std::string s(text);
  const char* end = strptime(s.c_str(), "%Y-%m-%dT%H:%M:%SZ", &tm);
  if (end == nullptr || *end != '\0') {
    throw Error(ErrorCode::ParseError, "bad UTC timestamp '" + s + "'");
  }
  return Timestamp(std::chrono::seconds(timegm(&tm)));
}

// ---------------------------------------------------------------------------

enum class Split { Training, Test };

inline std::string_view to_string(Split s) { return s == Split::Training ? "training" : "test"; }

inline Split parse_split(std::string_view text) {
  if (text == "training" || text == "train") return Split::Training;
  if (text == "test") return Split::Test;
  throw Error(ErrorCode::ParseError, "unknown split '" + std::string(text) + "'");
}

struct GameRecord {
  std::string game_id;
  std::string name;
  std::string description;
  std::string video_ref;
  Split split = Split::Training;

  friend bool operator==(const GameRecord&, const GameRecord&) = default;
};

struct IQMeasurement {
  std::string game_id;
  double iq_0ms = 0.0;
  double iq_200ms = 0.0;
  int n_participants = 1;
};

inline constexpr double kMosMin = 1.0;
inline constexpr double kMosMax = 5.0;

inline const IQMeasurement& validate_measurement(const IQMeasurement& m) {
  if (m.game_id.empty()) throw Error(ErrorCode::EmptyIdentifier, "measurement without game_id");
  auto in_range = [](double v) { return v >= kMosMin && v <= kMosMax; };
  if (!in_range(m.iq_0ms) || !in_range(m.iq_200ms)) {
    throw Error(ErrorCode::ValidationError, "IQ of game '" + m.game_id + "' outside [1,5]");
  }
  if (m.n_participants < 1) {
    throw Error(ErrorCode::ValidationError, "game '" + m.game_id + "' has no participants");
  }
  return m;
}

struct ExpertRating {
  std::string rater_id;
  std::string game_id;
  Characteristic characteristic = Characteristic::TA;
  int level_index = 0;
  std::optional<std::string> rationale;
  Timestamp timestamp{};

  friend bool operator==(const ExpertRating&, const ExpertRating&) = default;
};

inline const ExpertRating& validate_rating(const ExpertRating& r) {
  if (r.rater_id.empty()) throw Error(ErrorCode::EmptyIdentifier, "rating without rater_id");
  if (r.game_id.empty()) throw Error(ErrorCode::EmptyIdentifier, "rating without game_id");
  const int len = scale_length(r.characteristic);
  if (r.level_index < 0 || r.level_index >= len) {
    throw Error(ErrorCode::OutOfScale, std::string(code(r.characteristic)) + " level " +
                                           std::to_string(r.level_index) + " not in [0," +
                                           std::to_string(len - 1) + "]");
  }
  return r;
}

/// n subjects (games) by k raters, row-major, for one characteristic.
class RatingMatrix {
 public:
  RatingMatrix(Characteristic c, std::vector<std::string> subjects, std::vector<std::string> raters,
               std::vector<double> values)
      : characteristic_(c),
        subjects_(std::move(subjects)),
        raters_(std::move(raters)),
        values_(std::move(values)) {
    if (values_.size() != subjects_.size() * raters_.size()) {
      throw Error(ErrorCode::DegenerateMatrix, "value count does not match n*k");
    }
  }

  Characteristic characteristic() const { return characteristic_; }
  std::size_t rows() const { return subjects_.size(); }
  std::size_t cols() const { return raters_.size(); }
  const std::vector<std::string>& subjects() const { return subjects_; }
  const std::vector<std::string>& raters() const { return raters_; }
  std::span<const double> values() const { return values_; }

  double at(std::size_t subject, std::size_t rater) const { return values_[subject * cols() + rater]; }
  std::span<const double> row(std::size_t subject) const {
    return std::span<const double>(values_).subspan(subject * cols(), cols());
  }

  friend bool operator==(const RatingMatrix&, const RatingMatrix&) = default;

 private:
  Characteristic characteristic_;
  std::vector<std::string> subjects_;
  std::vector<std::string> raters_;
  std::vector<double> values_;
};

/// Assembles the complete games x raters matrix for one characteristic.
/// Ratings of other characteristics, games or raters are ignored.
inline RatingMatrix build_rating_matrix(std::span<const ExpertRating> ratings, Characteristic c,
                                        const std::vector<std::string>& games,
                                        const std::vector<std::string>& raters) {
  std::map<std::string, std::size_t> game_pos;
  std::map<std::string, std::size_t> rater_pos;
  for (std::size_t i = 0; i < games.size(); ++i) game_pos.emplace(games[i], i);
  for (std::size_t j = 0; j < raters.size(); ++j) rater_pos.emplace(raters[j], j);

  const std::size_t n = games.size();
  const std::size_t k = raters.size();
  std::vector<std::optional<int>> cells(n * k);
  for (const ExpertRating& r : ratings) {
    if (r.characteristic != c) continue;
    auto g = game_pos.find(r.game_id);
    auto e = rater_pos.find(r.rater_id);
    if (g == game_pos.end() || e == rater_pos.end()) continue;
    validate_rating(r);
    auto& cell = cells[g->second * k + e->second];
    if (cell) {
      throw Error(ErrorCode::DuplicateRating, "rater '" + r.rater_id + "' rated " +
                                                  std::string(code(c)) + " of game '" + r.game_id +
                                                  "' more than once");
    }
    cell = r.level_index;
  }

  std::string missing;
  std::size_t missing_count = 0;
  std::vector<double> values(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const auto& cell = cells[i * k + j];
      if (!cell) {
        if (missing_count++ < 20) missing += " (" + games[i] + "," + raters[j] + ")";
        continue;
      }
      values[i * k + j] = static_cast<double>(*cell);
    }
  }
  if (missing_count > 0) {
    throw Error(ErrorCode::MissingCell, std::to_string(missing_count) + " missing " +
                                            std::string(code(c)) + " cells:" + missing +
                                            (missing_count > 20 ? " ..." : ""));
  }
  return RatingMatrix(c, games, raters, std::move(values));
}

}  // namespace delaysense
