#include "pathise/reasoner.hpp"

#include <atomic>
#include <cctype>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace pathise {

Usage& Usage::operator+=(const Usage& o) {
  input_tokens += o.input_tokens;
  output_tokens += o.output_tokens;
  calls += o.calls;
  seconds += o.seconds;
  return *this;
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string strip_list_marker(const std::string& line) {
  std::size_t i = 0;
  if (!line.empty() && (line[0] == '-' || line[0] == '*')) {
    i = 1;
  } else {
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
    if (i == 0 || i >= line.size() || (line[i] != '.' && line[i] != ')')) return line;
    ++i;
  }
  // A marker needs trailing whitespace, so "3.5" or "-ish" stay intact.
  if (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) return line;
  return trim(std::string_view(line).substr(i));
}

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::vector<std::string> parse_answer_lines(const std::string& raw) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  std::istringstream in(raw);
  std::string line;
  while (std::getline(in, line)) {
    std::string a = strip_list_marker(trim(line));
    if (a.empty()) continue;
    if (seen.insert(a).second) out.push_back(a);
  }
  return out;
}

std::size_t whitespace_token_count(const std::string& text) {
  std::istringstream in(text);
  std::size_t n = 0;
  std::string tok;
  while (in >> tok) ++n;
  return n;
}

ReasonerResponse mock_union_reasoner(const ReasonerRequest& request) {
  auto t0 = std::chrono::steady_clock::now();
  ReasonerResponse r;
  r.id = request.id;
  std::set<std::string> seen;
  for (const EvidenceText& ev : request.evidence) {
    for (const std::string& e : ev.end_entities) {
      if (seen.insert(e).second) r.answers.push_back(e);
    }
  }
  for (const std::string& a : r.answers) r.raw += a + "\n";
  r.usage.input_tokens = whitespace_token_count(verbalize_evidence(request.question, request.evidence));
  r.usage.output_tokens = whitespace_token_count(r.raw);
  r.usage.calls = 0;
  r.usage.seconds = since(t0);
  return r;
}

ChatReply parse_chat_reply(const std::string& body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw format_error(std::string("chat endpoint returned invalid JSON: ") + e.what());
  }
  const auto* content = [&]() -> const nlohmann::json* {
    if (!j.is_object() || !j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) return nullptr;
    const auto& c = j["choices"][0];
    if (!c.is_object() || !c.contains("message") || !c["message"].is_object()) return nullptr;
    const auto& m = c["message"];
    if (!m.contains("content") || !m["content"].is_string()) return nullptr;
    return &m["content"];
  }();
  if (!content) throw format_error("chat endpoint reply has no choices[0].message.content");
  ChatReply reply;
  reply.content = content->get<std::string>();
  if (j.contains("usage") && j["usage"].is_object()) {
    const auto& u = j["usage"];
    if (u.contains("prompt_tokens") && u["prompt_tokens"].is_number_unsigned()) {
      reply.prompt_tokens = u["prompt_tokens"].get<std::size_t>();
    }
    if (u.contains("completion_tokens") && u["completion_tokens"].is_number_unsigned()) {
      reply.completion_tokens = u["completion_tokens"].get<std::size_t>();
    }
  }
  return reply;
}

HttpChatClient::HttpChatClient(HttpChatConfig config) : config_(std::move(config)) {
  const std::string& url = config_.endpoint;
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw validation_error("endpoint URL needs a scheme: " + url);
  std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw validation_error("unsupported endpoint scheme: " + scheme);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (scheme == "https") throw validation_error("this build has no TLS support; use an http endpoint");
#endif
  auto path_start = url.find('/', scheme_end + 3);
  base_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
  if (base_.size() <= scheme_end + 3) throw validation_error("endpoint URL has no host: " + url);
  if (!config_.api_key_env.empty()) {
    if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
  }
  if (config_.timeout_seconds <= 0.0) throw validation_error("reasoner timeout must be positive");
}

ChatReply HttpChatClient::complete(const std::vector<ChatMessage>& messages) {
  nlohmann::json body = {{"model", config_.model}, {"temperature", config_.temperature}};
  body["messages"] = nlohmann::json::array();
  for (const ChatMessage& m : messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  auto secs = std::chrono::duration_cast<std::chrono::microseconds>(
      std::chrono::duration<double>(config_.timeout_seconds));
  double backoff = config_.backoff_seconds;
  std::string last = "no attempt made";
  for (std::size_t attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
      backoff *= 2.0;
    }
    httplib::Client client(base_);
    client.set_connection_timeout(secs);
    client.set_read_timeout(secs);
    client.set_write_timeout(secs);
    auto res = client.Post(path_, headers, payload, "application/json");
    if (!res) {
      last = "network error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) return parse_chat_reply(res->body);
    last = "HTTP status " + std::to_string(res->status);
    if (res->status != 429 && res->status < 500) break;
  }
  throw Error(Error::Kind::kNetwork, "chat request to " + config_.endpoint + " failed: " + last);
}

ReasonerResponse reason(const ReasonerRequest& request, ChatClient& client, const std::string& system_prompt) {
  auto t0 = std::chrono::steady_clock::now();
  std::string prompt = verbalize_evidence(request.question, request.evidence);
  std::vector<ChatMessage> messages;
  if (!system_prompt.empty()) messages.push_back({"system", system_prompt});
  messages.push_back({"user", prompt});
  ChatReply reply = client.complete(messages);

  ReasonerResponse r;
  r.id = request.id;
  r.raw = reply.content;
  r.answers = parse_answer_lines(reply.content);
  r.usage.calls = 1;
  r.usage.input_tokens = reply.prompt_tokens.value_or(whitespace_token_count(prompt));
  r.usage.output_tokens = reply.completion_tokens.value_or(whitespace_token_count(reply.content));
  r.usage.seconds = since(t0);
  return r;
}

std::vector<ReasonerResponse> reason_all(std::span<const ReasonerRequest> requests, ChatClient& client,
                                         std::size_t concurrency, const std::string& system_prompt,
                                         std::vector<TranscriptEntry>* transcript) {
  if (concurrency == 0) throw validation_error("reasoner concurrency must be at least 1");
  std::vector<ReasonerResponse> out(requests.size());
  std::vector<std::exception_ptr> errors(requests.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < requests.size(); i = next++) {
      try {
        out[i] = reason(requests[i], client, system_prompt);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(concurrency, requests.size()); ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  if (transcript) {
    for (std::size_t i = 0; i < requests.size(); ++i) {
      transcript->push_back(
          {requests[i].id, verbalize_evidence(requests[i].question, requests[i].evidence), out[i].raw, out[i].usage});
    }
  }
  return out;
}

std::string transcript_line(const TranscriptEntry& e) {
  nlohmann::json j = {{"id", e.id},
                      {"request", e.prompt},
                      {"response", e.reply},
                      {"usage",
                       {{"input_tokens", e.usage.input_tokens},
                        {"output_tokens", e.usage.output_tokens},
                        {"calls", e.usage.calls}}},
                      {"latency_seconds", e.usage.seconds}};
  return j.dump();
}

}  // namespace pathise
