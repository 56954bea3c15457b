#include "coficot/mock_server.hpp"

#include <functional>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "coficot/errors.hpp"

namespace coficot::harness {

namespace {

using nlohmann::json;

json usage_json(const BackendUsage& u) {
  return json{{"prompt_tokens", u.prompt_tokens},
              {"completion_tokens", u.completion_tokens}};
}

void reply_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

using Handler = std::function<json(const json&)>;

void install(httplib::Server& server, const std::string& path, Handler fn) {
  server.Post(path, [fn = std::move(fn)](const httplib::Request& req,
                                         httplib::Response& res) {
    try {
      reply_json(res, fn(json::parse(req.body)));
    } catch (const std::exception& e) {
      reply_json(res, json{{"error", e.what()}}, 400);
    }
  });
}

}  // namespace

MockServer::MockServer(std::shared_ptr<const MockWorld> world)
    : world_(std::move(world)), server_(std::make_unique<httplib::Server>()) {
  const MockWorld* w = world_.get();

  install(*server_, "/v1/chat", [w](const json& in) {
    backends::ChatRequest req;
    for (const auto& m : in.at("messages")) {
      req.messages.push_back({m.at("role").get<std::string>(),
                              m.at("content").get<std::string>()});
    }
    req.temperature = in.value("temperature", 0.0);
    req.n = in.value("n", 1);
    req.seed = in.value("seed", std::uint64_t{0});
    req.sample_index = in.value("sample_index", 0);

    backends::ChatResponse out = w->chat(req);
    json choices = json::array();
    for (const auto& content : out.contents) {
      choices.push_back(json{{"message", json{{"content", content}}}});
    }
    return json{{"choices", choices}, {"usage", usage_json(out.usage)}};
  });

  install(*server_, "/v1/orm", [w](const json& in) {
    backends::ScoreResponse out = w->score_solution(
        in.at("question").get<std::string>(),
        in.at("solution").get<std::string>());
    return json{{"score", *out.score}, {"usage", usage_json(out.usage)}};
  });

  install(*server_, "/v1/prm", [w](const json& in) {
    backends::ScoreResponse out = w->score_steps(
        in.at("question").get<std::string>(),
        in.at("steps").get<std::vector<std::string>>());
    return json{{"step_scores", *out.step_scores},
                {"usage", usage_json(out.usage)}};
  });
}

MockServer::~MockServer() { stop(); }

int MockServer::start(int port, const std::string& host) {
  host_ = host;
  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
    if (port_ <= 0) throw Error("mock server could not bind a port");
  } else {
    if (!server_->bind_to_port(host, port)) {
      throw Error("mock server could not bind port " + std::to_string(port));
    }
    port_ = port;
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void MockServer::stop() {
  if (server_ && server_->is_running()) server_->stop();
  if (thread_.joinable()) thread_.join();
}

void MockServer::wait() {
  if (thread_.joinable()) thread_.join();
}

std::string MockServer::base_url() const {
  return "http://" + host_ + ":" + std::to_string(port_);
}

}  // namespace coficot::harness
