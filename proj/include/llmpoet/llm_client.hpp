#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "llmpoet/error.hpp"
#include "llmpoet/grid.hpp"

namespace llmpoet::llm {

inline constexpr const char* kApiKeyEnvVar = "LLMPOET_API_KEY";

struct CompletionRequest {
  std::string system_text;
  std::string user_text;
  double temperature = 0.7;
  int max_tokens = 4096;
  std::string model_name;
};

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds backoff_base{1000};  // doubles on every retry
  int rate_limit = 2;                            // max requests in flight
};

class ClientError : public Error {
 public:
  ClientError(std::string message, int status, int attempts)
      : Error(std::move(message)), status_(status), attempts_(attempts) {}
  int status() const { return status_; }
  int attempts() const { return attempts_; }

 private:
  int status_;
  int attempts_;
};

class TimeoutError : public ClientError {
 public:
  using ClientError::ClientError;
};

/// Anything that turns a request into completion text. Generators depend on
/// this, never on HTTP directly.
class TextCompleter {
 public:
  virtual ~TextCompleter() = default;
  virtual std::string complete(const CompletionRequest& request) = 0;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Raised by a Transport when no HTTP status was obtained.
class TransportError : public Error {
 public:
  TransportError(std::string message, bool timeout) : Error(std::move(message)), timeout_(timeout) {}
  bool timeout() const { return timeout_; }

 private:
  bool timeout_;
};

using Headers = std::vector<std::pair<std::string, std::string>>;

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post_json(const std::string& path, const std::string& body,
                                 const Headers& headers) = 0;
};

/// cpp-httplib backed transport. `base_url` is scheme://host[:port][/prefix].
class HttpTransport : public Transport {
 public:
  HttpTransport(std::string base_url, std::chrono::seconds timeout);
  HttpResponse post_json(const std::string& path, const std::string& body,
                         const Headers& headers) override;

 private:
  std::string scheme_host_port_;
  std::string prefix_;
  std::chrono::seconds timeout_;
};

struct ClientOptions {
  std::string model = "gpt-3.5-turbo";
  std::string api_key;
  RetryPolicy retry;
  std::optional<std::filesystem::path> log_path;  // JSONL request/response log
  bool hash_prompts = false;
  // Injected so tests can run retry schedules without sleeping.
  std::function<void(std::chrono::milliseconds)> sleep;
};

/// Chat-completions request body for `request`.
std::string build_request_body(const CompletionRequest& request, const std::string& default_model);

/// choices[0].message.content (or choices[0].text); throws ClientError on other shapes.
std::string parse_completion_text(const std::string& body);

class CompletionClient : public TextCompleter {
 public:
  CompletionClient(ClientOptions options, std::unique_ptr<Transport> transport);

  /// Reads the credential from LLMPOET_API_KEY.
  static std::unique_ptr<CompletionClient> from_environment(const std::string& endpoint,
                                                            ClientOptions options,
                                                            std::chrono::seconds timeout);

  std::string complete(const CompletionRequest& request) override;

  int peak_in_flight() const;

 private:
  void log_exchange(const CompletionRequest& request, int attempt, int status,
                    const std::string& response);

  ClientOptions options_;
  std::unique_ptr<Transport> transport_;

  mutable std::mutex mutex_;
  std::condition_variable slot_free_;
  int in_flight_ = 0;
  int peak_in_flight_ = 0;
  std::mutex log_mutex_;
};

struct CaptionedGrid {
  std::string caption;
  grid::VoxelGrid grid;
};

enum class DatasetErrc { DuplicateCaption, InvalidTerrain, Io };

class DatasetError : public Error {
 public:
  DatasetError(DatasetErrc code, std::string message) : Error(std::move(message)), code_(code) {}
  DatasetErrc code() const { return code_; }

 private:
  DatasetErrc code_;
};

/// Writes one chat-format JSON object per line and returns the line count.
/// Exact duplicates (same caption, same grid) are written once; a caption
/// reused for a different grid is an error unless allow_duplicates.
std::size_t export_finetune_dataset(const std::vector<CaptionedGrid>& pairs,
                                    const std::filesystem::path& path,
                                    bool allow_duplicates = false);

}  // namespace llmpoet::llm
