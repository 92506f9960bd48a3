#include <gtest/gtest.h>

#include <thread>

#include "delaysense/study_http.hpp"
#include "support/fixtures.hpp"

using namespace delaysense;
using nlohmann::json;

static const json kProfile = {{"age", 31}, {"gaming_experience", 3}, {"delay_awareness", 2}};

class HttpTest : public ::testing::Test {
 protected:
  void SetUp() override {
    store_ = std::make_unique<StudyStore>(dir_.path() / "data", fixtures::fixed_time);
    fixtures::spit(dir_.path() / "g01.mp4", "not really a video");
    service_ = std::make_unique<StudyHttpService>(*store_, dir_.path());
    port_ = service_->bind_to_any_port("127.0.0.1");
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { service_->listen_after_bind(); });
    service_->wait_until_ready();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }
  void TearDown() override {
    service_->stop();
    thread_.join();
  }

  httplib::Result post(const std::string& path, const json& body) {
    return client_->Post(path, body.dump(), "application/json");
  }

  static json nine(int level = 0) {
    json out = json::array();
    for (auto c : kAllCharacteristics)
      out.push_back({{"characteristic", code(c)}, {"level_index", std::min(level, scale_length(c) - 1)},
                     {"rationale", "seen in the clip"}});
    return out;
  }

  json create_study(int n) {
    json games = json::array();
    for (const auto& g : fixtures::study_config(n).games) games.push_back(json::parse(detail::game_json(g).dump()));
    auto res = post("/studies", {{"title", "http"}, {"games", games},
                                 {"training_stimulus", {{"game_id", "training"}, {"name", "Warm-up"}}}});
    EXPECT_EQ(res->status, 201);
    return json::parse(res->body);
  }

  fixtures::TempDir dir_;
  std::unique_ptr<StudyStore> store_;
  std::unique_ptr<StudyHttpService> service_;
  std::unique_ptr<httplib::Client> client_;
  std::thread thread_;
  int port_ = 0;
};

TEST_F(HttpTest, FullSessionFlow) {
  const std::string sid = create_study(3)["study_id"];
  auto res = post("/studies/" + sid + "/sessions", {{"age", 29}, {"gaming_experience", 4}, {"delay_awareness", 5}});
  ASSERT_EQ(res->status, 201);
  const std::string session = json::parse(res->body)["session_id"];

  res = client_->Get("/sessions/" + session + "/next");
  ASSERT_EQ(res->status, 200);
  auto next = json::parse(res->body);
  EXPECT_EQ(next["phase"], "training");
  EXPECT_EQ(next["characteristics"].size(), 9u);

  res = post("/sessions/" + session + "/ratings", {{"game_id", "g01"}, {"ratings", nine()}});
  EXPECT_EQ(res->status, 403);
  EXPECT_EQ(json::parse(res->body)["error"], "TrainingNotPassed");

  res = post("/sessions/" + session + "/training", {{"ratings", nine()}});
  ASSERT_EQ(res->status, 200);

  for (int i = 0; i < 3; ++i) {
    next = json::parse(client_->Get("/sessions/" + session + "/next")->body);
    ASSERT_EQ(next["phase"], "rating");
    EXPECT_EQ(next["position"], i);
    EXPECT_EQ(next["stimulus"]["video_url"], "/videos/" + next["stimulus"]["game_id"].get<std::string>() + ".mp4");
    res = post("/sessions/" + session + "/ratings", {{"game_id", next["stimulus"]["game_id"]}, {"ratings", nine(1)}});
    ASSERT_EQ(res->status, 200) << res->body;
  }
  EXPECT_TRUE(json::parse(res->body)["complete"]);
  EXPECT_EQ(json::parse(client_->Get("/sessions/" + session + "/next")->body)["phase"], "done");

  res = client_->Get("/studies/" + sid + "/export");
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Content-Type"), "application/zip");
  EXPECT_EQ(res->body, store_->export_zip(sid));
}

TEST_F(HttpTest, ErrorStatuses) {
  EXPECT_EQ(client_->Get("/studies/study-0042")->status, 404);
  EXPECT_EQ(client_->Get("/sessions/study-0042.r001/next")->status, 404);
  EXPECT_EQ(client_->Post("/studies", "{not json", "application/json")->status, 400);
  EXPECT_EQ(post("/studies", {{"games", json::array()}, {"training_stimulus", {{"game_id", "t"}}}})->status, 400);

  const std::string sid = create_study(2)["study_id"];
  const std::string session = json::parse(post("/studies/" + sid + "/sessions", kProfile)->body)["session_id"];
  auto eight = nine();
  eight.erase(eight.size() - 1);
  auto res = post("/sessions/" + session + "/training", {{"ratings", eight}});
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(json::parse(res->body)["error"], "MissingCharacteristic");
  ASSERT_EQ(post("/sessions/" + session + "/training", {{"ratings", nine()}})->status, 200);
  EXPECT_EQ(post("/sessions/" + session + "/training", {{"ratings", nine()}})->status, 409);

  const auto order = json::parse(client_->Get("/sessions/" + session)->body)["order"];
  const std::string wrong = fixtures::game_id(order[1].get<int>());
  EXPECT_EQ(post("/sessions/" + session + "/ratings", {{"game_id", wrong}, {"ratings", nine()}})->status, 409);

  ASSERT_EQ(client_->Post("/studies/" + sid + "/close")->status, 200);
  EXPECT_EQ(post("/studies/" + sid + "/sessions", kProfile)->status, 409);
  EXPECT_EQ(json::parse(client_->Get("/studies/" + sid)->body)["state"], "closed");
  EXPECT_EQ(post("/studies/" + sid + "/sessions", json::object())->status, 400);
}

TEST_F(HttpTest, ServesVideos) {
  auto res = client_->Get("/videos/g01.mp4");
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(res->body, "not really a video");
}
