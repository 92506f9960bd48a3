#pragma once

// Expert-rating study bookkeeping: studies, rater sessions with Latin-square
// stimulus order, the training gate, rating submission, durable storage and
// export of analysis-ready matrices.
//
// Storage layout, one directory per study under the data directory:
//   <data>/<study_id>/log.jsonl      append-only, one JSON record per line,
//                                    each carrying the SHA-256 of its predecessor
//   <data>/<study_id>/snapshot.json  state as of some log sequence number
// The log is authoritative; the snapshot only shortens replay.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "delaysense/archive.hpp"
#include "delaysense/csv.hpp"
#include "delaysense/domain.hpp"
#include "delaysense/error.hpp"
#include "delaysense/latin_square.hpp"

namespace delaysense {

enum class StudyState { Open, Closed };

struct StudyConfig {
  std::string title;
  std::vector<GameRecord> games;
  GameRecord training_stimulus;
};

struct RaterProfile {
  int age = 0;
  int gaming_experience = 3;  // 1 (novice) .. 5 (expert)
  int delay_awareness = 3;    // 1 (strongly disagree) .. 5 (strongly agree)

  friend bool operator==(const RaterProfile&, const RaterProfile&) = default;
};

/// One characteristic judgement as submitted by a rater; the service fills in
/// rater, game and time when turning it into an ExpertRating.
struct RatingInput {
  Characteristic characteristic = Characteristic::TA;
  int level_index = 0;
  std::string rationale;
};

struct Session {
  std::string session_id;
  std::string study_id;
  std::size_t arrival = 0;
  RaterProfile profile;
  std::vector<int> order;  // permutation of pool indices
  std::size_t cursor = 0;  // next position in `order`
  bool training_passed = false;
  Timestamp started_at{};
  std::vector<ExpertRating> training_ratings;  // never exported
  std::vector<ExpertRating> ratings;

  bool complete() const { return cursor == order.size(); }
};

struct Study {
  std::string study_id;
  std::string title;
  std::vector<GameRecord> games;
  GameRecord training_stimulus;
  Timestamp created_at{};
  StudyState state = StudyState::Open;
  OrderMatrix square;
  std::vector<std::string> session_ids;  // arrival order
};

enum class Phase { Training, Rating, Done };

inline std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Training: return "training";
    case Phase::Rating: return "rating";
    case Phase::Done: return "done";
  }
  return "done";
}

struct NextStimulus {
  Phase phase = Phase::Done;
  std::optional<GameRecord> game;
  std::size_t position = 0;  // 0-based index into the session order
  std::size_t total = 0;
};

struct ExportBundle {
  std::vector<RatingMatrix> matrices;  // one per characteristic, TA..ToI
  std::map<std::string, std::string> files;  // file name -> contents, sorted by name
};

// ---------------------------------------------------------------------------

inline void validate_config(const StudyConfig& cfg) {
  if (cfg.games.empty()) throw Error(ErrorCode::ValidationError, "a study needs at least one game");
  std::set<std::string> ids;
  for (const auto& g : cfg.games) {
    if (g.game_id.empty()) throw Error(ErrorCode::ValidationError, "game without game_id");
    if (!ids.insert(g.game_id).second) throw Error(ErrorCode::ValidationError, "duplicate game_id '" + g.game_id + "'");
  }
  if (cfg.training_stimulus.game_id.empty()) {
    throw Error(ErrorCode::ValidationError, "training stimulus needs a game_id");
  }
  if (ids.count(cfg.training_stimulus.game_id)) {
    throw Error(ErrorCode::ValidationError, "training stimulus '" + cfg.training_stimulus.game_id +
                                                "' must not be part of the rated pool");
  }
}

inline void validate_profile(const RaterProfile& p) {
  if (p.age < 1 || p.age > 130) throw Error(ErrorCode::ValidationError, "age must be in [1,130]");
  if (p.gaming_experience < 1 || p.gaming_experience > 5) {
    throw Error(ErrorCode::ValidationError, "gaming_experience must be on the 1..5 scale");
  }
  if (p.delay_awareness < 1 || p.delay_awareness > 5) {
    throw Error(ErrorCode::ValidationError, "delay_awareness must be on the 1..5 scale");
  }
}

/// Checks that `inputs` rate each of the nine characteristics exactly once,
/// in scale, each with a non-blank rationale.
inline void validate_rating_set(const std::vector<RatingInput>& inputs) {
  std::array<int, kCharacteristicCount> seen{};
  for (const auto& in : inputs) ++seen[index_of(in.characteristic)];
  for (Characteristic c : kAllCharacteristics) {
    if (seen[index_of(c)] == 0) throw Error(ErrorCode::MissingCharacteristic, std::string(code(c)) + " was not rated");
    if (seen[index_of(c)] > 1) throw Error(ErrorCode::ValidationError, std::string(code(c)) + " was rated twice");
  }
  for (const auto& in : inputs) {
    ExpertRating probe{"rater", "game", in.characteristic, in.level_index, std::nullopt, {}};
    validate_rating(probe);
    if (in.rationale.find_first_not_of(" \t\r\n") == std::string::npos) {
      throw Error(ErrorCode::MissingRationale, std::string(code(in.characteristic)) + " has no rationale");
    }
  }
}

// ---------------------------------------------------------------------------
// JSON mapping of the persisted records.

namespace detail {

inline nlohmann::ordered_json game_json(const GameRecord& g) {
  return {{"game_id", g.game_id},
          {"name", g.name},
          {"description", g.description},
          {"video_ref", g.video_ref},
          {"split", to_string(g.split)}};
}

inline GameRecord game_from_json(const nlohmann::json& j) {
  GameRecord g;
  g.game_id = j.at("game_id").get<std::string>();
  g.name = j.value("name", "");
  g.description = j.value("description", "");
  g.video_ref = j.value("video_ref", "");
  g.split = parse_split(j.value("split", "training"));
  return g;
}

inline nlohmann::ordered_json rating_json(const ExpertRating& r) {
  nlohmann::ordered_json j = {{"rater_id", r.rater_id},
                              {"game_id", r.game_id},
                              {"characteristic", code(r.characteristic)},
                              {"level_index", r.level_index}};
  j["rationale"] = r.rationale ? nlohmann::ordered_json(*r.rationale) : nlohmann::ordered_json(nullptr);
  j["timestamp"] = format_timestamp(r.timestamp);
  return j;
}

inline ExpertRating rating_from_json(const nlohmann::json& j) {
  ExpertRating r;
  r.rater_id = j.at("rater_id").get<std::string>();
  r.game_id = j.at("game_id").get<std::string>();
  r.characteristic = characteristic_from_code(j.at("characteristic").get<std::string>());
  r.level_index = j.at("level_index").get<int>();
  if (!j.at("rationale").is_null()) r.rationale = j.at("rationale").get<std::string>();
  r.timestamp = parse_timestamp(j.at("timestamp").get<std::string>());
  return r;
}

inline nlohmann::ordered_json profile_json(const RaterProfile& p) {
  return {{"age", p.age}, {"gaming_experience", p.gaming_experience}, {"delay_awareness", p.delay_awareness}};
}

inline RaterProfile profile_from_json(const nlohmann::json& j) {
  RaterProfile p;
  p.age = j.at("age").get<int>();
  p.gaming_experience = j.at("gaming_experience").get<int>();
  p.delay_awareness = j.at("delay_awareness").get<int>();
  return p;
}

inline nlohmann::ordered_json ratings_json(const std::vector<ExpertRating>& rs) {
  nlohmann::ordered_json a = nlohmann::ordered_json::array();
  for (const auto& r : rs) a.push_back(rating_json(r));
  return a;
}

inline std::vector<ExpertRating> ratings_from_json(const nlohmann::json& j) {
  std::vector<ExpertRating> out;
  for (const auto& r : j) out.push_back(rating_from_json(r));
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------

class StudyStore {
 public:
  using Clock = std::function<Timestamp()>;

  static Timestamp system_now() {
    return std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
  }

  explicit StudyStore(std::filesystem::path data_dir, Clock clock = system_now, std::size_t snapshot_interval = 64)
      : data_dir_(std::move(data_dir)), clock_(std::move(clock)), snapshot_interval_(snapshot_interval) {
    std::filesystem::create_directories(data_dir_);
    std::vector<std::filesystem::path> dirs;
    for (const auto& entry : std::filesystem::directory_iterator(data_dir_)) {
      if (entry.is_directory() && std::filesystem::exists(entry.path() / "log.jsonl")) dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());
    for (const auto& dir : dirs) {
      auto slot = std::make_unique<Slot>();
      slot->dir = dir;
      load(*slot);
      const std::string id = slot->study.study_id;
      studies_.emplace(id, std::move(slot));
    }
  }

  StudyStore(const StudyStore&) = delete;
  StudyStore& operator=(const StudyStore&) = delete;

  std::string create_study(const StudyConfig& cfg) {
    validate_config(cfg);
    std::unique_lock registry(registry_mutex_);
    const std::string id = next_study_id();
    auto slot = std::make_unique<Slot>();
    slot->dir = data_dir_ / id;
    std::filesystem::create_directories(slot->dir);

    nlohmann::ordered_json games = nlohmann::ordered_json::array();
    for (const auto& g : cfg.games) games.push_back(detail::game_json(g));
    nlohmann::ordered_json rec = {{"type", "study_created"},
                                  {"at", format_timestamp(clock_())},
                                  {"study_id", id},
                                  {"title", cfg.title},
                                  {"games", games},
                                  {"training_stimulus", detail::game_json(cfg.training_stimulus)}};
    commit(*slot, std::move(rec));
    studies_.emplace(id, std::move(slot));
    return id;
  }

  Session start_session(const std::string& study_id, const RaterProfile& profile) {
    validate_profile(profile);
    Slot& slot = find_study(study_id);
    std::unique_lock lock(slot.mutex);
    if (slot.study.state == StudyState::Closed) throw Error(ErrorCode::StudyClosed, "study '" + study_id + "' is closed");
    const std::size_t arrival = slot.study.session_ids.size();
    nlohmann::ordered_json rec = {{"type", "session_started"},
                                  {"at", format_timestamp(clock_())},
                                  {"session_id", session_id_for(study_id, arrival)},
                                  {"profile", detail::profile_json(profile)}};
    commit(slot, std::move(rec));
    return slot.sessions.at(slot.study.session_ids.back());
  }

  void complete_training(const std::string& session_id, const std::vector<RatingInput>& inputs) {
    Slot& slot = find_study(study_of(session_id));
    std::unique_lock lock(slot.mutex);
    Session& s = find_session(slot, session_id);
    if (s.training_passed) throw Error(ErrorCode::AlreadyPassed, "session '" + session_id + "' already passed training");
    validate_rating_set(inputs);
    commit(slot, ratings_record("training_completed", s, slot.study.training_stimulus.game_id, inputs));
  }

  void submit_rating(const std::string& session_id, const std::string& game_id, const std::vector<RatingInput>& inputs) {
    Slot& slot = find_study(study_of(session_id));
    std::unique_lock lock(slot.mutex);
    Session& s = find_session(slot, session_id);
    if (slot.study.state == StudyState::Closed) {
      throw Error(ErrorCode::StudyClosed, "study '" + slot.study.study_id + "' is closed");
    }
    if (!s.training_passed) throw Error(ErrorCode::TrainingNotPassed, "session '" + session_id + "' has not passed training");
    for (std::size_t pos = 0; pos < s.cursor; ++pos) {
      if (slot.study.games[static_cast<std::size_t>(s.order[pos])].game_id == game_id) {
        throw Error(ErrorCode::DuplicateSubmission, "game '" + game_id + "' was already rated in this session");
      }
    }
    if (s.complete()) throw Error(ErrorCode::OutOfOrder, "session '" + session_id + "' has rated every stimulus");
    const std::string& expected = slot.study.games[static_cast<std::size_t>(s.order[s.cursor])].game_id;
    if (game_id != expected) {
      throw Error(ErrorCode::OutOfOrder, "expected stimulus '" + expected + "' (position " + std::to_string(s.cursor) +
                                             "), got '" + game_id + "'");
    }
    validate_rating_set(inputs);
    commit(slot, ratings_record("ratings_submitted", s, game_id, inputs));
  }

  void close_study(const std::string& study_id) {
    Slot& slot = find_study(study_id);
    std::unique_lock lock(slot.mutex);
    if (slot.study.state == StudyState::Closed) return;
    commit(slot, {{"type", "study_closed"}, {"at", format_timestamp(clock_())}});
  }

  Study study(const std::string& study_id) const {
    const Slot& slot = find_study(study_id);
    std::shared_lock lock(slot.mutex);
    return slot.study;
  }

  std::vector<std::string> study_ids() const {
    std::shared_lock registry(registry_mutex_);
    std::vector<std::string> out;
    for (const auto& [id, _] : studies_) out.push_back(id);
    return out;
  }

  Session session(const std::string& session_id) const {
    const Slot& slot = find_study(study_of(session_id));
    std::shared_lock lock(slot.mutex);
    return find_session(slot, session_id);
  }

  NextStimulus next_stimulus(const std::string& session_id) const {
    const Slot& slot = find_study(study_of(session_id));
    std::shared_lock lock(slot.mutex);
    const Session& s = find_session(slot, session_id);
    NextStimulus next;
    next.total = s.order.size();
    next.position = s.cursor;
    if (!s.training_passed) {
      next.phase = Phase::Training;
      next.game = slot.study.training_stimulus;
    } else if (!s.complete()) {
      next.phase = Phase::Rating;
      next.game = slot.study.games[static_cast<std::size_t>(s.order[s.cursor])];
    }
    return next;
  }

  /// Nine games x complete-raters matrices plus the flat ratings file.
  ExportBundle export_ratings(const std::string& study_id) const {
    const Slot& slot = find_study(study_id);
    std::shared_lock lock(slot.mutex);
    const Study& st = slot.study;

    std::vector<std::string> game_ids;
    for (const auto& g : st.games) game_ids.push_back(g.game_id);
    std::vector<std::string> raters;
    std::vector<ExpertRating> pooled;
    nlohmann::ordered_json excluded = nlohmann::ordered_json::array();
    for (const auto& sid : st.session_ids) {
      const Session& s = slot.sessions.at(sid);
      if (s.complete()) {
        raters.push_back(sid);
        pooled.insert(pooled.end(), s.ratings.begin(), s.ratings.end());
      } else {
        excluded.push_back({{"session_id", sid},
                            {"reason", "incomplete"},
                            {"rated", s.cursor},
                            {"of", s.order.size()},
                            {"training_passed", s.training_passed}});
      }
    }

    ExportBundle bundle;
    for (Characteristic c : kAllCharacteristics) {
      RatingMatrix m = build_rating_matrix(pooled, c, game_ids, raters);
      std::ostringstream os;
      write_rating_matrix_csv(os, m);
      bundle.files["matrix_" + std::string(code(c)) + ".csv"] = os.str();
      bundle.matrices.push_back(std::move(m));
    }

    std::ostringstream flat;
    csv::write_row(flat, {"rater_id", "game_id", "characteristic", "level_index", "level_label", "rationale",
                          "timestamp", "session_complete"});
    for (const auto& sid : st.session_ids) {
      const Session& s = slot.sessions.at(sid);
      for (const auto& r : s.ratings) {
        csv::write_row(flat, {r.rater_id, r.game_id, std::string(code(r.characteristic)),
                              std::to_string(r.level_index),
                              std::string(scale_levels(r.characteristic)[static_cast<std::size_t>(r.level_index)]),
                              r.rationale.value_or(""), format_timestamp(r.timestamp), s.complete() ? "yes" : "no"});
      }
    }
    bundle.files["ratings.csv"] = flat.str();

    nlohmann::ordered_json manifest = {{"study_id", st.study_id},
                                       {"title", st.title},
                                       {"state", st.state == StudyState::Open ? "open" : "closed"},
                                       {"games", game_ids},
                                       {"raters", raters},
                                       {"excluded_sessions", excluded},
                                       {"training_ratings", "excluded"},
                                       {"schema_checksum", schema_checksum()}};
    bundle.files["manifest.json"] = manifest.dump(2) + "\n";
    return bundle;
  }

  std::string export_zip(const std::string& study_id) const {
    ZipWriter zip;
    for (auto& [name, data] : export_ratings(study_id).files) zip.add(name, data);
    return zip.finish();
  }

  const std::filesystem::path& data_dir() const { return data_dir_; }

  static void write_rating_matrix_csv(std::ostream& os, const RatingMatrix& m) {
    csv::Row header{"game_id"};
    header.insert(header.end(), m.raters().begin(), m.raters().end());
    csv::write_row(os, header);
    for (std::size_t i = 0; i < m.rows(); ++i) {
      csv::Row row{m.subjects()[i]};
      for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(std::to_string(static_cast<int>(m.at(i, j))));
      csv::write_row(os, row);
    }
  }

 private:
  struct Slot {
    std::filesystem::path dir;
    mutable std::shared_mutex mutex;  // exclusive for the single writer of this study
    Study study;
    std::map<std::string, Session> sessions;
    std::uint64_t seq = 0;  // sequence number of the last applied record
    std::string head = std::string(64, '0');
    std::uint64_t last_snapshot = 0;
  };

  static std::string session_id_for(const std::string& study_id, std::size_t arrival) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%03zu", arrival + 1);
    return study_id + ".r" + buf;
  }

  static std::string study_of(const std::string& session_id) {
    const auto dot = session_id.rfind(".r");
    if (dot == std::string::npos) throw Error(ErrorCode::UnknownSession, "malformed session id '" + session_id + "'");
    return session_id.substr(0, dot);
  }

  std::string next_study_id() const {
    for (std::size_t i = studies_.size() + 1;; ++i) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "study-%04zu", i);
      if (!studies_.count(buf) && !std::filesystem::exists(data_dir_ / buf)) return buf;
    }
  }

  Slot& find_study(const std::string& id) const {
    std::shared_lock registry(registry_mutex_);
    auto it = studies_.find(id);
    if (it == studies_.end()) {
      throw Error(id.find(".r") == std::string::npos ? ErrorCode::UnknownStudy : ErrorCode::UnknownSession,
                  "no study '" + id + "'");
    }
    return *it->second;
  }

  static Session& find_session(Slot& slot, const std::string& id) {
    auto it = slot.sessions.find(id);
    if (it == slot.sessions.end()) throw Error(ErrorCode::UnknownSession, "no session '" + id + "'");
    return it->second;
  }
  static const Session& find_session(const Slot& slot, const std::string& id) {
    auto it = slot.sessions.find(id);
    if (it == slot.sessions.end()) throw Error(ErrorCode::UnknownSession, "no session '" + id + "'");
    return it->second;
  }

  nlohmann::ordered_json ratings_record(std::string_view type, const Session& s, const std::string& game_id,
                                        const std::vector<RatingInput>& inputs) const {
    const Timestamp now = clock_();
    std::vector<ExpertRating> ratings;
    for (const auto& in : inputs) {
      ratings.push_back({s.session_id, game_id, in.characteristic, in.level_index, in.rationale, now});
    }
    // Canonical TA..ToI order regardless of submission order.
    std::sort(ratings.begin(), ratings.end(),
              [](const ExpertRating& a, const ExpertRating& b) { return a.characteristic < b.characteristic; });
    return {{"type", type},
            {"at", format_timestamp(now)},
            {"session_id", s.session_id},
            {"game_id", game_id},
            {"ratings", detail::ratings_json(ratings)}};
  }

  // Appends one record durably, then applies it. Caller holds the study's
  // exclusive lock (or owns the slot exclusively).
  void commit(Slot& slot, nlohmann::ordered_json rec) {
    nlohmann::ordered_json line;
    line["seq"] = slot.seq + 1;
    line["prev"] = slot.head;
    for (auto& [k, v] : rec.items()) line[k] = v;
    const std::string text = line.dump();

    // Apply to a scratch copy first so a malformed record can never leave
    // the in-memory state half-updated.
    Study study = slot.study;
    std::map<std::string, Session> sessions = slot.sessions;
    apply(study, sessions, nlohmann::json::parse(text));

    {
      std::ofstream out(slot.dir / "log.jsonl", std::ios::app | std::ios::binary);
      out << text << '\n';
      out.flush();
      if (!out) throw Error(ErrorCode::IoError, "cannot append to " + (slot.dir / "log.jsonl").string());
    }
    slot.study = std::move(study);
    slot.sessions = std::move(sessions);
    slot.seq += 1;
    slot.head = sha256_hex(text);
    if (snapshot_interval_ > 0 && slot.seq - slot.last_snapshot >= snapshot_interval_) write_snapshot(slot);
  }

  static void apply(Study& study, std::map<std::string, Session>& sessions, const nlohmann::json& rec) {
    const std::string type = rec.at("type").get<std::string>();
    const Timestamp at = parse_timestamp(rec.at("at").get<std::string>());
    if (type == "study_created") {
      study.study_id = rec.at("study_id").get<std::string>();
      study.title = rec.value("title", "");
      study.games.clear();
      for (const auto& g : rec.at("games")) study.games.push_back(detail::game_from_json(g));
      study.training_stimulus = detail::game_from_json(rec.at("training_stimulus"));
      study.created_at = at;
      study.state = StudyState::Open;
      study.square = balanced_latin_square(static_cast<int>(study.games.size()));
    } else if (type == "session_started") {
      Session s;
      s.session_id = rec.at("session_id").get<std::string>();
      s.study_id = study.study_id;
      s.arrival = study.session_ids.size();
      s.profile = detail::profile_from_json(rec.at("profile"));
      s.order = session_order(study.square, s.arrival);
      s.started_at = at;
      study.session_ids.push_back(s.session_id);
      sessions.emplace(s.session_id, std::move(s));
    } else if (type == "training_completed") {
      Session& s = sessions.at(rec.at("session_id").get<std::string>());
      s.training_ratings = detail::ratings_from_json(rec.at("ratings"));
      s.training_passed = true;
    } else if (type == "ratings_submitted") {
      Session& s = sessions.at(rec.at("session_id").get<std::string>());
      auto rs = detail::ratings_from_json(rec.at("ratings"));
      s.ratings.insert(s.ratings.end(), rs.begin(), rs.end());
      s.cursor += 1;
    } else if (type == "study_closed") {
      study.state = StudyState::Closed;
    } else {
      throw Error(ErrorCode::CorruptLog, "unknown record type '" + type + "'");
    }
  }

  static nlohmann::ordered_json state_json(const Slot& slot) {
    nlohmann::ordered_json games = nlohmann::ordered_json::array();
    for (const auto& g : slot.study.games) games.push_back(detail::game_json(g));
    nlohmann::ordered_json sessions = nlohmann::ordered_json::array();
    for (const auto& sid : slot.study.session_ids) {
      const Session& s = slot.sessions.at(sid);
      sessions.push_back({{"session_id", s.session_id},
                          {"profile", detail::profile_json(s.profile)},
                          {"cursor", s.cursor},
                          {"training_passed", s.training_passed},
                          {"started_at", format_timestamp(s.started_at)},
                          {"training_ratings", detail::ratings_json(s.training_ratings)},
                          {"ratings", detail::ratings_json(s.ratings)}});
    }
    return {{"study_id", slot.study.study_id},
            {"title", slot.study.title},
            {"games", games},
            {"training_stimulus", detail::game_json(slot.study.training_stimulus)},
            {"created_at", format_timestamp(slot.study.created_at)},
            {"state", slot.study.state == StudyState::Open ? "open" : "closed"},
            {"sessions", sessions}};
  }

  static void restore_state(Slot& slot, const nlohmann::json& j) {
    Study& st = slot.study;
    st.study_id = j.at("study_id").get<std::string>();
    st.title = j.at("title").get<std::string>();
    st.games.clear();
    for (const auto& g : j.at("games")) st.games.push_back(detail::game_from_json(g));
    st.training_stimulus = detail::game_from_json(j.at("training_stimulus"));
    st.created_at = parse_timestamp(j.at("created_at").get<std::string>());
    st.state = j.at("state").get<std::string>() == "open" ? StudyState::Open : StudyState::Closed;
    st.square = balanced_latin_square(static_cast<int>(st.games.size()));
    st.session_ids.clear();
    slot.sessions.clear();
    for (const auto& sj : j.at("sessions")) {
      Session s;
      s.session_id = sj.at("session_id").get<std::string>();
      s.study_id = st.study_id;
      s.arrival = st.session_ids.size();
      s.profile = detail::profile_from_json(sj.at("profile"));
      s.order = session_order(st.square, s.arrival);
      s.cursor = sj.at("cursor").get<std::size_t>();
      s.training_passed = sj.at("training_passed").get<bool>();
      s.started_at = parse_timestamp(sj.at("started_at").get<std::string>());
      s.training_ratings = detail::ratings_from_json(sj.at("training_ratings"));
      s.ratings = detail::ratings_from_json(sj.at("ratings"));
      st.session_ids.push_back(s.session_id);
      slot.sessions.emplace(s.session_id, std::move(s));
    }
  }

  static void write_snapshot(Slot& slot) {
    nlohmann::ordered_json snap = {{"seq", slot.seq}, {"head", slot.head}, {"state", state_json(slot)}};
    const auto tmp = slot.dir / "snapshot.json.tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << snap.dump() << '\n';
      if (!out) throw Error(ErrorCode::IoError, "cannot write snapshot for " + slot.study.study_id);
    }
    std::filesystem::rename(tmp, slot.dir / "snapshot.json");
    slot.last_snapshot = slot.seq;
  }

  // Verifies the hash chain of the whole log, restores the snapshot when it
  // matches a point on the chain, and replays the records after it.
  static void load(Slot& slot) {
    std::ifstream in(slot.dir / "log.jsonl", std::ios::binary);
    std::vector<std::string> lines;
    std::vector<std::string> heads{std::string(64, '0')};
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      nlohmann::json rec;
      try {
        rec = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception&) {
        throw Error(ErrorCode::CorruptLog, slot.dir.string() + ": unparsable record " + std::to_string(lines.size() + 1));
      }
      if (rec.value("seq", std::uint64_t{0}) != lines.size() + 1 || rec.value("prev", "") != heads.back()) {
        throw Error(ErrorCode::CorruptLog, slot.dir.string() + ": hash chain broken at record " +
                                               std::to_string(lines.size() + 1));
      }
      heads.push_back(sha256_hex(line));
      lines.push_back(line);
    }

    std::size_t start = 0;
    const auto snap_path = slot.dir / "snapshot.json";
    if (std::filesystem::exists(snap_path)) {
      try {
        const auto snap = nlohmann::json::parse(read_file_bytes(snap_path.string()));
        const auto seq = snap.at("seq").get<std::size_t>();
        if (seq >= 1 && seq <= lines.size() && snap.at("head").get<std::string>() == heads[seq]) {
          restore_state(slot, snap.at("state"));
          start = seq;
          slot.last_snapshot = seq;
        }
      } catch (const std::exception&) {
        start = 0;  // unusable snapshot; full replay from the log
      }
    }
    if (start == 0) {
      slot.study = Study{};
      slot.sessions.clear();
    }
    for (std::size_t i = start; i < lines.size(); ++i) apply(slot.study, slot.sessions, nlohmann::json::parse(lines[i]));
    slot.seq = lines.size();
    slot.head = heads.back();
  }

  std::filesystem::path data_dir_;
  Clock clock_;
  std::size_t snapshot_interval_;
  mutable std::shared_mutex registry_mutex_;
  std::map<std::string, std::unique_ptr<Slot>> studies_;
};

/// Reads a matrix file written by StudyStore::write_rating_matrix_csv.
inline RatingMatrix read_rating_matrix_csv(std::istream& in, Characteristic c, const std::string& source) {
  const csv::Table t = csv::read(in, source);
  if (t.header.empty() || t.header[0] != "game_id") {
    throw Error(ErrorCode::ValidationError, source + ": first column must be game_id");
  }
  std::vector<std::string> raters(t.header.begin() + 1, t.header.end());
  std::vector<std::string> games;
  std::vector<double> values;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    games.push_back(t.rows[r][0]);
    for (std::size_t j = 1; j < t.header.size(); ++j) {
      if (t.rows[r][j].empty()) {
        throw Error(ErrorCode::MissingCell, t.where(r) + ": no rating from '" + t.header[j] + "'");
      }
      const long v = csv::parse_long(t, r, j);
      if (v < 0 || v >= scale_length(c)) {
        throw Error(ErrorCode::OutOfScale, t.where(r) + ": " + std::string(code(c)) + " level " + std::to_string(v));
      }
      values.push_back(static_cast<double>(v));
    }
  }
  return RatingMatrix(c, std::move(games), std::move(raters), std::move(values));
}

}  // namespace delaysense
