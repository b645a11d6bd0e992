#include "httplib.h"

#include "llmpoet/llm_client.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "llmpoet/rng.hpp"

namespace llmpoet::llm {

using nlohmann::json;

HttpTransport::HttpTransport(std::string base_url, std::chrono::seconds timeout)
    : timeout_(timeout) {
  auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint must include a scheme: " + base_url);
  auto path_start = base_url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    scheme_host_port_ = base_url;
  } else {
    scheme_host_port_ = base_url.substr(0, path_start);
    prefix_ = base_url.substr(path_start);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  }
}

HttpResponse HttpTransport::post_json(const std::string& path, const std::string& body,
                                      const Headers& headers) {
  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  client.set_write_timeout(timeout_);
  httplib::Headers h;
  for (const auto& [k, v] : headers) h.emplace(k, v);
  auto res = client.Post(prefix_ + path, h, body, "application/json");
  if (!res) {
    auto err = res.error();
    throw TransportError("transport failure: " + httplib::to_string(err),
                         err == httplib::Error::Read || err == httplib::Error::Write ||
                             err == httplib::Error::ConnectionTimeout);
  }
  return {res->status, res->body};
}

std::string build_request_body(const CompletionRequest& request, const std::string& default_model) {
  json messages = json::array();
  if (!request.system_text.empty())
    messages.push_back({{"role", "system"}, {"content", request.system_text}});
  messages.push_back({{"role", "user"}, {"content", request.user_text}});
  json body = {{"model", request.model_name.empty() ? default_model : request.model_name},
               {"messages", messages},
               {"temperature", request.temperature},
               {"max_tokens", request.max_tokens}};
  return body.dump();
}

std::string parse_completion_text(const std::string& body) {
  try {
    auto j = json::parse(body);
    const auto& choice = j.at("choices").at(0);
    if (choice.contains("message")) return choice["message"].at("content").get<std::string>();
    return choice.at("text").get<std::string>();
  } catch (const json::exception& e) {
    throw ClientError(std::string("unexpected completion response: ") + e.what(), 200, 1);
  }
}

CompletionClient::CompletionClient(ClientOptions options, std::unique_ptr<Transport> transport)
    : options_(std::move(options)), transport_(std::move(transport)) {
  if (options_.retry.max_retries < 0 || options_.retry.backoff_base.count() < 0 ||
      options_.retry.rate_limit < 1)
    throw ConfigError("retry policy values must be non-negative and rate_limit >= 1");
  if (!options_.sleep) options_.sleep = [](auto d) { std::this_thread::sleep_for(d); };
}

std::unique_ptr<CompletionClient> CompletionClient::from_environment(const std::string& endpoint,
                                                                     ClientOptions options,
                                                                     std::chrono::seconds timeout) {
  if (endpoint.empty()) throw ConfigError("no LLM endpoint configured (llm.endpoint)");
  const char* key = std::getenv(kApiKeyEnvVar);
  options.api_key = key ? key : "";
  return std::make_unique<CompletionClient>(std::move(options),
                                            std::make_unique<HttpTransport>(endpoint, timeout));
}

int CompletionClient::peak_in_flight() const {
  std::lock_guard lock(mutex_);
  return peak_in_flight_;
}

void CompletionClient::log_exchange(const CompletionRequest& request, int attempt, int status,
                                    const std::string& response) {
  if (!options_.log_path) return;
  auto redact = [&](const std::string& text) {
    return options_.hash_prompts ? fmt::format("fnv1a:{:016x}", fnv1a(text)) : text;
  };
  json entry = {{"attempt", attempt},
                {"status", status},
                {"system", redact(request.system_text)},
                {"user", redact(request.user_text)},
                {"temperature", request.temperature},
                {"response", response}};
  std::lock_guard lock(log_mutex_);
  std::ofstream out(*options_.log_path, std::ios::app);
  out << entry.dump() << '\n';
}

std::string CompletionClient::complete(const CompletionRequest& request) {
  if (request.user_text.empty()) throw ClientError("completion request has empty user text", 0, 0);

  {
    std::unique_lock lock(mutex_);
    slot_free_.wait(lock, [&] { return in_flight_ < options_.retry.rate_limit; });
    ++in_flight_;
    peak_in_flight_ = std::max(peak_in_flight_, in_flight_);
  }
  struct Release {
    CompletionClient* self;
    ~Release() {
      {
        std::lock_guard lock(self->mutex_);
        --self->in_flight_;
      }
      self->slot_free_.notify_one();
    }
  } release{this};

  const auto body = build_request_body(request, options_.model);
  Headers headers;
  if (!options_.api_key.empty()) headers.emplace_back("Authorization", "Bearer " + options_.api_key);

  const int max_attempts = options_.retry.max_retries + 1;
  int last_status = 0;
  bool last_timeout = false;
  std::string last_message;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    if (attempt > 1) options_.sleep(options_.retry.backoff_base * (1LL << (attempt - 2)));
    try {
      auto res = transport_->post_json("/chat/completions", body, headers);
      log_exchange(request, attempt, res.status, res.body);
      if (res.status >= 200 && res.status < 300) {
        auto text = parse_completion_text(res.body);
        return text;
      }
      last_status = res.status;
      last_timeout = false;
      last_message = fmt::format("HTTP {}", res.status);
      const bool retryable = res.status == 429 || res.status >= 500;
      if (!retryable)
        throw ClientError(fmt::format("completion request rejected: HTTP {}", res.status),
                          res.status, attempt);
    } catch (const TransportError& e) {
      log_exchange(request, attempt, 0, e.what());
      last_status = 0;
      last_timeout = e.timeout();
      last_message = e.what();
    }
  }
  auto message = fmt::format("completion failed after {} attempts: {}", max_attempts, last_message);
  if (last_timeout) throw TimeoutError(message, last_status, max_attempts);
  throw ClientError(message, last_status, max_attempts);
}

std::size_t export_finetune_dataset(const std::vector<CaptionedGrid>& pairs,
                                    const std::filesystem::path& path, bool allow_duplicates) {
  std::map<std::string, std::vector<std::string>> seen;
  std::string out;
  std::size_t lines = 0;
  for (const auto& p : pairs) {
    if (!grid::validate_terrain(p.grid).empty())
      throw DatasetError(DatasetErrc::InvalidTerrain,
                         "grid for caption '" + p.caption + "' is not valid terrain");
    auto text = grid::render_grid(p.grid);
    auto& grids = seen[p.caption];
    if (std::find(grids.begin(), grids.end(), text) != grids.end()) continue;
    if (!grids.empty() && !allow_duplicates)
      throw DatasetError(DatasetErrc::DuplicateCaption,
                         "caption '" + p.caption + "' is used for different grids");
    grids.push_back(text);
    json line = {{"messages",
                  json::array({{{"role", "user"}, {"content", p.caption}},
                               {{"role", "assistant"}, {"content", text}}})}};
    out += line.dump();
    out += '\n';
    ++lines;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DatasetError(DatasetErrc::Io, "cannot write " + path.string());
  f << out;
  if (!f) throw DatasetError(DatasetErrc::Io, "short write to " + path.string());
  return lines;
}

}  // namespace llmpoet::llm
