#pragma once

#include <chrono>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pathise/prompts.hpp"

namespace pathise {

struct Usage {
  std::size_t input_tokens = 0;
  std::size_t output_tokens = 0;
  std::size_t calls = 0;
  double seconds = 0.0;

  Usage& operator+=(const Usage& o);
};

struct ReasonerRequest {
  std::string id;
  std::string question;
  std::vector<EvidenceText> evidence;  // may be empty
};

struct ReasonerResponse {
  std::string id;
  std::vector<std::string> answers;  // first = top-1
  std::string raw;
  Usage usage;
};

/// Nonempty trimmed lines with leading list markers ("1.", "2)", "-", "*")
/// removed; duplicates dropped keeping the first occurrence.
std::vector<std::string> parse_answer_lines(const std::string& raw);

std::size_t whitespace_token_count(const std::string& text);

/// Offline double: answers are the end entities of all evidence in order of
/// first appearance. No network calls; usage counted by whitespace tokens.
ReasonerResponse mock_union_reasoner(const ReasonerRequest& request);

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatReply {
  std::string content;
  std::optional<std::size_t> prompt_tokens;
  std::optional<std::size_t> completion_tokens;
};

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual ChatReply complete(const std::vector<ChatMessage>& messages) = 0;
};

struct HttpChatConfig {
  std::string endpoint = "http://127.0.0.1:8000/v1/chat/completions";
  std::string model = "gpt-4o-mini";
  std::string api_key_env = "OPENAI_API_KEY";  // unset or empty: no Authorization header
  double timeout_seconds = 60.0;
  std::size_t max_retries = 3;
  double backoff_seconds = 0.5;  // doubled after every failed attempt
  double temperature = 0.0;
  std::string system_prompt;  // sent as a system message when nonempty
};

/// Chat-completion client over HTTP(S). Retries network failures, 429 and 5xx
/// responses with exponential backoff; other statuses fail immediately.
class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(HttpChatConfig config);
  ChatReply complete(const std::vector<ChatMessage>& messages) override;
  const HttpChatConfig& config() const { return config_; }

 private:
  HttpChatConfig config_;
  std::string base_;  // scheme://host[:port]
  std::string path_;
  std::string api_key_;
};

/// Parses a chat-completion response body; throws a format error when
/// choices[0].message.content is missing.
ChatReply parse_chat_reply(const std::string& body);

ReasonerResponse reason(const ReasonerRequest& request, ChatClient& client, const std::string& system_prompt = {});

struct TranscriptEntry {
  std::string id;
  std::string prompt;
  std::string reply;
  Usage usage;
};

/// Runs requests with at most `concurrency` in flight. Responses come back in
/// request order. Failed requests rethrow the first error after all finish.
std::vector<ReasonerResponse> reason_all(std::span<const ReasonerRequest> requests, ChatClient& client,
                                         std::size_t concurrency, const std::string& system_prompt = {},
                                         std::vector<TranscriptEntry>* transcript = nullptr);

std::string transcript_line(const TranscriptEntry& entry);

}  // namespace pathise
