#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "icr/feedback.hpp"

namespace icr {

struct RetryPolicy {
  int max_attempts = 3;
  int backoff_ms = 200;
  double backoff_factor = 2.0;
};

struct GeneratorEndpoint {
  std::string base_url;  // e.g. http://127.0.0.1:8000 (an optional path prefix is kept)
  std::string model;
  double timeout_s = 60.0;
  std::size_t max_in_flight = 4;
  RetryPolicy retry;
  std::string api_key_env = "ICR_API_KEY";
};

enum class ReplayMode { Off, Replay, Record };

ReplayMode parse_replay_mode(const std::string& s);

/// request-hash -> recorded response body, stored as JSONL
/// {"key", "path", "request", "status", "body"}.
class ReplayStore {
 public:
  ReplayStore(ReplayMode mode, std::string path);

  ReplayMode mode() const { return mode_; }
  static std::string request_key(const std::string& path, const std::string& body);
  std::optional<std::string> find(const std::string& key) const;
  void record(const std::string& key, const std::string& path, const std::string& request, int status,
              const std::string& body);

 private:
  ReplayMode mode_;
  std::string path_;
  mutable std::mutex mu_;
  std::map<std::string, std::string> bodies_;
};

struct TransportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// OpenAI-style completion endpoint. Scoring uses echo + logprobs with zero
/// new tokens; generation is greedy (temperature 0).
class GeneratorClient : public LogprobSource {
 public:
  explicit GeneratorClient(GeneratorEndpoint endpoint, std::shared_ptr<ReplayStore> replay = nullptr);

  std::string model_name() const override { return endpoint_.model; }
  const GeneratorEndpoint& endpoint() const { return endpoint_; }

  /// Throws ConfigError when the endpoint does not return token log-probabilities.
  void probe();
  std::vector<double> continuation_logprobs(const std::string& context, const std::string& continuation) override;
  std::string generate(const std::string& prompt, int max_tokens, const std::vector<std::string>& stop = {});

 private:
  std::string post(const std::string& path, const std::string& body);

  GeneratorEndpoint endpoint_;
  std::shared_ptr<ReplayStore> replay_;
  std::string origin_;  // scheme://host[:port]
  std::string prefix_;  // path prefix without trailing slash
};

}  // namespace icr
