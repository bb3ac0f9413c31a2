#include <atomic>
#include <cstdlib>
#include <mutex>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "pathise/reasoner.hpp"

using namespace pathise;
using nlohmann::json;

namespace {

// Chat-completion stand-in on a loopback port; `handler` sees each request.
class FakeEndpoint {
 public:
  explicit FakeEndpoint(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server_.Post("/v1/chat/completions", [this, handler](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      handler(req, res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeEndpoint() {
    server_.stop();
    thread_.join();
  }

  HttpChatConfig config() const {
    HttpChatConfig c;
    c.endpoint = "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
    c.model = "test-model";
    c.api_key_env = "PATHISE_TEST_KEY";
    c.timeout_seconds = 5.0;
    c.backoff_seconds = 0.01;
    return c;
  }

  std::atomic<int> hits{0};

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

std::string reply_body(const std::string& content, bool with_usage) {
  json j = {{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}};
  if (with_usage) j["usage"] = {{"prompt_tokens", 12}, {"completion_tokens", 1}};
  return j.dump();
}

ReasonerRequest demeter() {
  return {"t6",
          "Who is Demeter's brother?",
          {{"Demeter",
            {"fictional_universe.fictional_character.siblings",
             "fictional_universe.sibling_relationship_of_fictional_characters.siblings"},
            {"Zeus"}}}};
}

}  // namespace

TEST_CASE("answer lines") {
  CHECK(parse_answer_lines("Zeus\n") == std::vector<std::string>{"Zeus"});
  CHECK(parse_answer_lines("a\na\nb") == std::vector<std::string>{"a", "b"});
  CHECK(parse_answer_lines("1. Paris\n2) Lyon\n- Nice\n* Lille\n\n   \n") ==
        std::vector<std::string>{"Paris", "Lyon", "Nice", "Lille"});
  CHECK(parse_answer_lines("1984\n-5\n") == std::vector<std::string>{"1984", "-5"});
  CHECK(parse_answer_lines("").empty());
}

TEST_CASE("whitespace token count") {
  CHECK(whitespace_token_count("") == 0);
  CHECK(whitespace_token_count("  a b\n\tc ") == 3);
}

TEST_CASE("union mock answers every end entity in first-appearance order") {
  ReasonerRequest r{"q", "?", {{"A", {"r"}, {"x", "y"}}, {"A", {"s"}, {"y", "z"}}, {"B", {"t"}, {}}}};
  ReasonerResponse out = mock_union_reasoner(r);
  CHECK(out.id == "q");
  CHECK(out.answers == std::vector<std::string>{"x", "y", "z"});
  CHECK(out.usage.calls == 0);
  CHECK(out.usage.input_tokens == whitespace_token_count(verbalize_evidence(r.question, r.evidence)));
  CHECK(mock_union_reasoner({"e", "?", {}}).answers.empty());
}

TEST_CASE("chat reply parsing") {
  ChatReply r = parse_chat_reply(reply_body("Zeus", true));
  CHECK(r.content == "Zeus");
  CHECK(r.prompt_tokens == 12u);
  CHECK(r.completion_tokens == 1u);
  CHECK_FALSE(parse_chat_reply(reply_body("Zeus", false)).prompt_tokens.has_value());
  CHECK_THROWS_AS(parse_chat_reply("{}"), Error);
  CHECK_THROWS_AS(parse_chat_reply("not json"), Error);
}

TEST_CASE("endpoint validation") {
  HttpChatConfig c;
  c.endpoint = "127.0.0.1/v1";
  CHECK_THROWS_AS(HttpChatClient{c}, Error);
  c.endpoint = "ftp://host/x";
  CHECK_THROWS_AS(HttpChatClient{c}, Error);
}

TEST_CASE("a successful call sends the prompt and reports endpoint usage") {
  ::setenv("PATHISE_TEST_KEY", "sk-test", 1);
  json seen;
  std::string auth;
  FakeEndpoint ep([&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    auth = req.get_header_value("Authorization");
    res.set_content(reply_body("Zeus\n", true), "application/json");
  });
  HttpChatClient client(ep.config());
  ReasonerResponse out = reason(demeter(), client, "be brief");
  CHECK(out.answers == std::vector<std::string>{"Zeus"});
  CHECK(out.usage.input_tokens == 12);
  CHECK(out.usage.output_tokens == 1);
  CHECK(out.usage.calls == 1);
  CHECK(auth == "Bearer sk-test");
  CHECK(seen["model"] == "test-model");
  REQUIRE(seen["messages"].size() == 2);
  CHECK(seen["messages"][0]["role"] == "system");
  CHECK(seen["messages"][1]["content"] == verbalize_evidence(demeter().question, demeter().evidence));
  ::unsetenv("PATHISE_TEST_KEY");

  HttpChatClient no_key(ep.config());
  reason(demeter(), no_key);
  CHECK(auth.empty());
  CHECK(seen["messages"].size() == 1);
}

TEST_CASE("missing usage falls back to whitespace counts") {
  FakeEndpoint ep([](const httplib::Request&, httplib::Response& res) {
    res.set_content(reply_body("Zeus\nHades", false), "application/json");
  });
  HttpChatClient client(ep.config());
  ReasonerResponse out = reason(demeter(), client);
  CHECK(out.usage.output_tokens == 2);
  CHECK(out.usage.input_tokens == whitespace_token_count(verbalize_evidence(demeter().question, demeter().evidence)));
}

TEST_CASE("server errors are retried, client errors are not") {
  SUBCASE("500 then success") {
    FakeEndpoint ep([&](const httplib::Request&, httplib::Response& res) {
      if (ep.hits == 1) {
        res.status = 500;
      } else {
        res.set_content(reply_body("Zeus", true), "application/json");
      }
    });
    HttpChatClient client(ep.config());
    CHECK(reason(demeter(), client).answers == std::vector<std::string>{"Zeus"});
    CHECK(ep.hits == 2);
  }
  SUBCASE("429 until retries run out") {
    FakeEndpoint ep([](const httplib::Request&, httplib::Response& res) { res.status = 429; });
    HttpChatConfig c = ep.config();
    c.max_retries = 2;
    HttpChatClient client(c);
    try {
      reason(demeter(), client);
      FAIL("expected a network error");
    } catch (const Error& e) {
      CHECK(e.kind() == Error::Kind::kNetwork);
      CHECK(std::string(e.what()).find("429") != std::string::npos);
    }
    CHECK(ep.hits == 3);
  }
  SUBCASE("400 fails at once") {
    FakeEndpoint ep([](const httplib::Request&, httplib::Response& res) { res.status = 400; });
    HttpChatClient client(ep.config());
    CHECK_THROWS_AS(reason(demeter(), client), Error);
    CHECK(ep.hits == 1);
  }
  SUBCASE("malformed body") {
    FakeEndpoint ep([](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"choices": []})", "application/json");
    });
    HttpChatClient client(ep.config());
    try {
      reason(demeter(), client);
      FAIL("expected a format error");
    } catch (const Error& e) {
      CHECK(e.kind() == Error::Kind::kFormat);
    }
  }
}

TEST_CASE("unreachable endpoint is a network error") {
  HttpChatConfig c;
  c.endpoint = "http://127.0.0.1:1/v1/chat/completions";
  c.max_retries = 1;
  c.backoff_seconds = 0.01;
  c.timeout_seconds = 1.0;
  HttpChatClient client(c);
  try {
    reason(demeter(), client);
    FAIL("expected a network error");
  } catch (const Error& e) {
    CHECK(e.kind() == Error::Kind::kNetwork);
  }
}

TEST_CASE("concurrent requests come back in request order") {
  FakeEndpoint ep([](const httplib::Request& req, httplib::Response& res) {
    json body = json::parse(req.body);
    std::string prompt = body["messages"].back()["content"];
    auto at = prompt.find("Question: ");
    std::string q = prompt.substr(at + 10, prompt.find('\n', at) - at - 10);
    std::this_thread::sleep_for(std::chrono::milliseconds(q.size() % 3 * 5));
    res.set_content(reply_body("answer to " + q, true), "application/json");
  });
  std::vector<ReasonerRequest> reqs;
  for (int i = 0; i < 12; ++i) reqs.push_back({"q" + std::to_string(i), "question " + std::to_string(i), {}});
  HttpChatClient client(ep.config());
  std::vector<TranscriptEntry> transcript;
  auto out = reason_all(reqs, client, 4, "", &transcript);
  REQUIRE(out.size() == reqs.size());
  REQUIRE(transcript.size() == reqs.size());
  for (std::size_t i = 0; i < reqs.size(); ++i) {
    CHECK(out[i].id == reqs[i].id);
    CHECK(out[i].answers == std::vector<std::string>{"answer to question " + std::to_string(i)});
    json line = json::parse(transcript_line(transcript[i]));
    CHECK(line["id"] == reqs[i].id);
    CHECK(line["response"] == out[i].raw);
    CHECK(line["usage"]["calls"] == 1);
  }
  CHECK(ep.hits == 12);
  CHECK_THROWS_AS(reason_all(reqs, client, 0), Error);
}
