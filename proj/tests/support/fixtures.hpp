#pragma once

// Synthetic inputs shared by the unit and acceptance tests.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "delaysense/delaysense.hpp"

namespace fixtures {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "ds") {
    static int counter = 0;
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            (tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::string slurp(const fs::path& p) { return delaysense::read_file_bytes(p.string()); }

inline void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline delaysense::Timestamp fixed_time() { return delaysense::Timestamp(std::chrono::seconds(1592179200)); }

inline std::string game_id(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "g%02d", i + 1);
  return buf;
}

inline delaysense::StudyConfig study_config(int n_games) {
  delaysense::StudyConfig cfg;
  cfg.title = "synthetic";
  for (int i = 0; i < n_games; ++i) {
    delaysense::GameRecord g;
    g.game_id = game_id(i);
    g.name = "Game " + std::to_string(i + 1);
    g.video_ref = g.game_id + ".mp4";
    cfg.games.push_back(g);
  }
  cfg.training_stimulus.game_id = "training";
  cfg.training_stimulus.name = "Warm-up";
  return cfg;
}

// Level each rater is centred on for game i.
inline int latent_level(int game, delaysense::Characteristic c) {
  const int len = delaysense::scale_length(c);
  return (game * 7 + static_cast<int>(delaysense::index_of(c)) * 3 + game / 5) % len;
}

inline std::vector<delaysense::RatingInput> rating_set(int game, int rater, std::mt19937_64& rng) {
  std::vector<delaysense::RatingInput> out;
  for (auto c : delaysense::kAllCharacteristics) {
    const int len = delaysense::scale_length(c);
    int v = latent_level(game, c);
    const auto u = rng() % 10;
    if (u == 0) v -= 1;
    if (u == 1) v += 1;
    v = std::clamp(v, 0, len - 1);
    out.push_back({c, v, (rater + game) % 4 == 0 ? "looked at the replay" : "clear from the clip"});
  }
  return out;
}

// Drives a full study through the store: every rater passes training and
// rates every game in the order the store hands out.
inline std::string run_scripted_study(delaysense::StudyStore& store, int n_games, int n_raters,
                                      std::uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  const std::string sid = store.create_study(study_config(n_games));
  for (int r = 0; r < n_raters; ++r) {
    const auto session = store.start_session(sid, {25 + r, 4, 4});
    store.complete_training(session.session_id, rating_set(0, r, rng));
    while (true) {
      const auto next = store.next_stimulus(session.session_id);
      if (next.phase != delaysense::Phase::Rating) break;
      const int game = std::stoi(next.game->game_id.substr(1)) - 1;
      store.submit_rating(session.session_id, next.game->game_id, rating_set(game, r, rng));
    }
  }
  return sid;
}

inline void write_bundle(const delaysense::ExportBundle& bundle, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& [name, body] : bundle.files) spit(dir / name, body);
}

// Two well separated groups of IQ drops.
inline std::vector<double> two_group_drops(std::size_t n, std::mt19937_64& rng, double low = 0.2, double high = 1.4,
                                           double sd = 0.15) {
  std::normal_distribution<double> lo(low, sd), hi(high, sd);
  std::vector<double> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(i % 2 == 0 ? lo(rng) : hi(rng));
  return out;
}

// games.csv whose drops follow the fixture's TA latent level, so the tree has
// something to learn. The last `n_test` games form the test split.
inline std::string games_csv(int n_games, int n_test, std::uint64_t seed = 11) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.15);
  std::string out = "game_id,name,iq_0ms,iq_200ms,n_participants,split\n";
  for (int i = 0; i < n_games; ++i) {
    const bool high = latent_level(i, delaysense::Characteristic::TA) >= 3;
    const double drop = (high ? 1.4 : 0.2) + noise(rng);
    const double iq0 = 4.5;
    const double iq200 = std::clamp(iq0 - drop, 1.0, 5.0);
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s,Game %d,%.4f,%.4f,%d,%s\n", game_id(i).c_str(), i + 1, iq0, iq200, 25,
                  i >= n_games - n_test ? "test" : "training");
    out += buf;
  }
  return out;
}

// rows x blocks.size() observations with a planted factor structure: column c
// loads on factor blocks[c] with strength[blocks[c]]. Factor scores are made
// exactly uncorrelated in-sample so the planted covariance is what the data
// carries; the unique noise stays random.
inline delaysense::Matrix planted_factors(std::size_t rows, const std::vector<int>& blocks,
                                          const std::vector<double>& strength, std::mt19937_64& rng) {
  std::normal_distribution<double> z(0, 1);
  const std::size_t nf = strength.size();
  std::vector<std::vector<double>> f(nf, std::vector<double>(rows));
  for (std::size_t j = 0; j < nf; ++j) {
    for (auto& v : f[j]) v = z(rng);
    double mean = 0;
    for (double v : f[j]) mean += v;
    mean /= static_cast<double>(rows);
    for (auto& v : f[j]) v -= mean;
    for (std::size_t p = 0; p < j; ++p) {
      double dot = 0;
      for (std::size_t r = 0; r < rows; ++r) dot += f[j][r] * f[p][r];
      for (std::size_t r = 0; r < rows; ++r) f[j][r] -= dot * f[p][r];
    }
    double norm = 0;
    for (double v : f[j]) norm += v * v;
    norm = std::sqrt(norm);
    for (auto& v : f[j]) v /= norm;
  }
  delaysense::Matrix x(rows, blocks.size());
  const double scale = std::sqrt(static_cast<double>(rows - 1));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < blocks.size(); ++c) {
      const auto b = static_cast<std::size_t>(blocks[c]);
      x(r, c) = strength[b] * scale * f[b][r] + std::sqrt(1 - strength[b] * strength[b]) * z(rng);
    }
  return x;
}

}  // namespace fixtures
