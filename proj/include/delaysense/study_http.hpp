#pragma once

// JSON-over-HTTP front end for StudyStore.
//
//   POST /studies                    create a study
//   GET  /studies/:id                study summary
//   POST /studies/:id/sessions       start a rater session
//   POST /studies/:id/close          close the study (operator)
//   GET  /studies/:id/export         zip of the analysis CSVs
//   GET  /sessions/:id               session state
//   GET  /sessions/:id/next          next stimulus + characteristic schema
//   POST /sessions/:id/training      nine training ratings
//   POST /sessions/:id/ratings       nine ratings for the current stimulus
//   GET  /videos/...                 static stimulus files (optional)

#include <filesystem>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "delaysense/domain.hpp"
#include "delaysense/error.hpp"
#include "delaysense/study.hpp"

namespace delaysense {

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownStudy:
    case ErrorCode::UnknownSession:
      return 404;
    case ErrorCode::StudyClosed:
    case ErrorCode::AlreadyPassed:
    case ErrorCode::DuplicateSubmission:
    case ErrorCode::OutOfOrder:
      return 409;
    case ErrorCode::TrainingNotPassed:
      return 403;
    case ErrorCode::IoError:
    case ErrorCode::CorruptLog:
    case ErrorCode::NoConvergence:
      return 500;
    default:
      return 400;
  }
}

inline std::vector<RatingInput> parse_rating_inputs(const nlohmann::json& body) {
  if (!body.contains("ratings") || !body["ratings"].is_array()) {
    throw Error(ErrorCode::ValidationError, "body needs a 'ratings' array");
  }
  std::vector<RatingInput> out;
  for (const auto& r : body["ratings"]) {
    if (!r.is_object()) throw Error(ErrorCode::ValidationError, "rating entries must be objects");
    RatingInput in;
    in.characteristic = characteristic_from_code(r.at("characteristic").get<std::string>());
    in.level_index = r.at("level_index").get<int>();
    if (r.contains("rationale") && r["rationale"].is_string()) in.rationale = r["rationale"].get<std::string>();
    out.push_back(std::move(in));
  }
  return out;
}

inline nlohmann::ordered_json session_json(const Session& s) {
  return {{"session_id", s.session_id},
          {"study_id", s.study_id},
          {"arrival", s.arrival},
          {"order", s.order},
          {"cursor", s.cursor},
          {"total", s.order.size()},
          {"training_passed", s.training_passed},
          {"complete", s.complete()},
          {"started_at", format_timestamp(s.started_at)}};
}

class StudyHttpService {
 public:
  explicit StudyHttpService(StudyStore& store, std::filesystem::path video_root = {})
      : store_(store), video_root_(std::move(video_root)) {
    routes();
  }

  bool listen(const std::string& host, int port) { return server_.listen(host, port); }
  int bind_to_any_port(const std::string& host) { return server_.bind_to_any_port(host); }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  bool is_running() const { return server_.is_running(); }
  void wait_until_ready() const { server_.wait_until_ready(); }

 private:
  template <typename Handler>
  httplib::Server::Handler guarded(Handler handler) {
    return [handler](const httplib::Request& req, httplib::Response& res) {
      try {
        handler(req, res);
      } catch (const Error& e) {
        res.status = http_status(e.code());
        res.set_content(nlohmann::ordered_json{{"error", to_string(e.code())}, {"message", e.detail()}}.dump(),
                        "application/json");
      } catch (const nlohmann::json::exception& e) {
        res.status = 400;
        res.set_content(nlohmann::ordered_json{{"error", "ParseError"}, {"message", e.what()}}.dump(),
                        "application/json");
      }
    };
  }

  static nlohmann::json body_json(const httplib::Request& req) {
    if (req.body.empty()) return nlohmann::json::object();
    return nlohmann::json::parse(req.body);
  }

  static void reply(httplib::Response& res, int status, const nlohmann::ordered_json& j) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
  }

  std::string video_url(const GameRecord& g) const {
    if (g.video_ref.empty() || g.video_ref.find("://") != std::string::npos) return g.video_ref;
    return "/videos/" + g.video_ref;
  }

  void routes() {
    if (!video_root_.empty()) server_.set_mount_point("/videos", video_root_.string());

    server_.Post("/studies", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto body = body_json(req);
      StudyConfig cfg;
      cfg.title = body.value("title", "");
      if (!body.contains("games") || !body["games"].is_array()) {
        throw Error(ErrorCode::ValidationError, "body needs a 'games' array");
      }
      for (const auto& g : body["games"]) cfg.games.push_back(detail::game_from_json(g));
      if (!body.contains("training_stimulus")) throw Error(ErrorCode::ValidationError, "body needs 'training_stimulus'");
      cfg.training_stimulus = detail::game_from_json(body["training_stimulus"]);
      const std::string id = store_.create_study(cfg);
      reply(res, 201, {{"study_id", id}, {"pool_size", cfg.games.size()}});
    }));

    server_.Get("/studies/:id", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const Study st = store_.study(req.path_params.at("id"));
      reply(res, 200,
            {{"study_id", st.study_id},
             {"title", st.title},
             {"state", st.state == StudyState::Open ? "open" : "closed"},
             {"pool_size", st.games.size()},
             {"sessions", st.session_ids},
             {"created_at", format_timestamp(st.created_at)}});
    }));

    server_.Post("/studies/:id/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto body = body_json(req);
      const RaterProfile profile = detail::profile_from_json(body);
      reply(res, 201, session_json(store_.start_session(req.path_params.at("id"), profile)));
    }));

    server_.Post("/studies/:id/close", guarded([this](const httplib::Request& req, httplib::Response& res) {
      store_.close_study(req.path_params.at("id"));
      reply(res, 200, {{"study_id", req.path_params.at("id")}, {"state", "closed"}});
    }));

    server_.Get("/studies/:id/export", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.path_params.at("id");
      res.status = 200;
      res.set_header("Content-Disposition", "attachment; filename=\"" + id + "-export.zip\"");
      res.set_content(store_.export_zip(id), "application/zip");
    }));

    server_.Get("/sessions/:id", guarded([this](const httplib::Request& req, httplib::Response& res) {
      reply(res, 200, session_json(store_.session(req.path_params.at("id"))));
    }));

    server_.Get("/sessions/:id/next", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string sid = req.path_params.at("id");
      const NextStimulus next = store_.next_stimulus(sid);
      nlohmann::ordered_json j = {{"session_id", sid},
                                  {"phase", to_string(next.phase)},
                                  {"position", next.position},
                                  {"total", next.total}};
      if (next.game) {
        j["stimulus"] = {{"game_id", next.game->game_id},
                         {"name", next.game->name},
                         {"description", next.game->description},
                         {"video_url", video_url(*next.game)}};
      } else {
        j["stimulus"] = nullptr;
      }
      j["characteristics"] = characteristic_schema_json();
      reply(res, 200, j);
    }));

    server_.Post("/sessions/:id/training", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string sid = req.path_params.at("id");
      store_.complete_training(sid, parse_rating_inputs(body_json(req)));
      reply(res, 200, {{"session_id", sid}, {"training_passed", true}});
    }));

    server_.Post("/sessions/:id/ratings", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string sid = req.path_params.at("id");
      const auto body = body_json(req);
      if (!body.contains("game_id") || !body["game_id"].is_string()) {
        throw Error(ErrorCode::ValidationError, "body needs 'game_id'");
      }
      store_.submit_rating(sid, body["game_id"].get<std::string>(), parse_rating_inputs(body));
      const Session s = store_.session(sid);
      reply(res, 200, {{"session_id", sid}, {"cursor", s.cursor}, {"complete", s.complete()}});
    }));
  }

  StudyStore& store_;
  std::filesystem::path video_root_;
  httplib::Server server_;
};

}  // namespace delaysense
