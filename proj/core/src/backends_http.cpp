#include <memory>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "coficot/backends.hpp"

namespace coficot::backends {

namespace {

using nlohmann::json;

struct ParsedUrl {
  std::string origin;  // scheme://host:port
  std::string path;
};

ParsedUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  auto path_start = url.find('/', host_start);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

httplib::Headers auth_headers(const std::string& api_key) {
  httplib::Headers h;
  if (!api_key.empty()) h.emplace("Authorization", "Bearer " + api_key);
  return h;
}

// One httplib::Client per request: the client object is not safe for
// concurrent requests, and the ensemble fan-out is parallel.
std::string post_json(const ParsedUrl& url, const std::string& api_key,
                      const std::string& body) {
  httplib::Client cli(url.origin);
  cli.set_connection_timeout(10, 0);
  cli.set_read_timeout(120, 0);
  auto res = cli.Post(url.path, auth_headers(api_key), body,
                      "application/json");
  if (!res)
    throw BackendUnavailable("no response from " + url.origin +
                             " (" + httplib::to_string(res.error()) + ")");
  if (res->status != 200)
    throw BackendUnavailable("HTTP " + std::to_string(res->status) +
                             " from " + url.origin + url.path);
  return res->body;
}

BackendUsage parse_usage(const json& doc) {
  BackendUsage u;
  if (doc.contains("usage")) {
    u.prompt_tokens = doc["usage"].value("prompt_tokens", 0L);
    u.completion_tokens = doc["usage"].value("completion_tokens", 0L);
  }
  return u;
}

class HttpChatClient : public ChatClient {
 public:
  HttpChatClient(std::string url, std::string api_key)
      : url_(split_url(url)), api_key_(std::move(api_key)) {}

  ChatResponse chat(const ChatRequest& request) override {
    json body;
    body["messages"] = json::array();
    for (const auto& m : request.messages)
      body["messages"].push_back({{"role", m.role}, {"content", m.content}});
    body["temperature"] = request.temperature;
    body["n"] = request.n;
    body["seed"] = request.seed;
    body["sample_index"] = request.sample_index;

    std::string reply = post_json(url_, api_key_, body.dump());
    try {
      json doc = json::parse(reply);
      ChatResponse out;
      for (const auto& choice : doc.at("choices"))
        out.contents.push_back(
            choice.at("message").at("content").get<std::string>());
      out.usage = parse_usage(doc);
      return out;
    } catch (const json::exception& e) {
      throw BackendUnavailable(std::string("malformed chat reply: ") +
                               e.what());
    }
  }

 private:
  ParsedUrl url_;
  std::string api_key_;
};

class HttpScoreClient : public ScoreClient {
 public:
  HttpScoreClient(std::string url, std::string api_key)
      : url_(split_url(url)), api_key_(std::move(api_key)) {}

  ScoreResponse score(const ScoreRequest& request) override {
    json body;
    body["question"] = request.question;
    if (request.solution) body["solution"] = *request.solution;
    if (request.steps) body["steps"] = *request.steps;

    std::string reply = post_json(url_, api_key_, body.dump());
    try {
      json doc = json::parse(reply);
      ScoreResponse out;
      if (doc.contains("score")) out.score = doc["score"].get<double>();
      if (doc.contains("step_scores"))
        out.step_scores = doc["step_scores"].get<std::vector<double>>();
      out.usage = parse_usage(doc);
      return out;
    } catch (const json::exception& e) {
      throw BackendUnavailable(std::string("malformed score reply: ") +
                               e.what());
    }
  }

 private:
  ParsedUrl url_;
  std::string api_key_;
};

}  // namespace

std::shared_ptr<ChatClient> make_http_chat_client(const std::string& url,
                                                  const std::string& api_key) {
  return std::make_shared<HttpChatClient>(url, api_key);
}

std::shared_ptr<ScoreClient> make_http_score_client(const std::string& url,
                                                    const std::string& api_key) {
  return std::make_shared<HttpScoreClient>(url, api_key);
}

}  // namespace coficot::backends
