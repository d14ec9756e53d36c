#include "icr/generator_client.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "httplib.h"
#include "icr/binio.hpp"
#include "icr/errors.hpp"
#include "json.hpp"

namespace icr {

using nlohmann::json;

namespace {

// OpenAI-style text_offset values count code points, not bytes.
std::size_t utf8_length(std::string_view s) {
  std::size_t n = 0;
  for (unsigned char c : s)
    if ((c & 0xC0) != 0x80) ++n;
  return n;
}

bool retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

}  // namespace

ReplayMode parse_replay_mode(const std::string& s) {
  if (s.empty() || s == "off") return ReplayMode::Off;
  if (s == "replay") return ReplayMode::Replay;
  if (s == "record") return ReplayMode::Record;
  throw ConfigError("replay.mode", "expected off, replay or record, got '" + s + "'");
}

ReplayStore::ReplayStore(ReplayMode mode, std::string path) : mode_(mode), path_(std::move(path)) {
  if (mode_ == ReplayMode::Off) return;
  std::ifstream in(path_);
  if (!in) {
    if (mode_ == ReplayMode::Replay) throw ConfigError("replay.path", "cannot open fixture file " + path_);
    return;
  }
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      auto j = json::parse(line);
      bodies_[j.at("key").get<std::string>()] = j.at("body").get<std::string>();
    } catch (const json::exception& e) {
      throw FormatError(path_ + ": line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::string ReplayStore::request_key(const std::string& path, const std::string& body) {
  return hex64(fnv1a64(path + "\n" + body));
}

std::optional<std::string> ReplayStore::find(const std::string& key) const {
  std::lock_guard lock(mu_);
  auto it = bodies_.find(key);
  if (it == bodies_.end()) return std::nullopt;
  return it->second;
}

void ReplayStore::record(const std::string& key, const std::string& path, const std::string& request, int status,
                         const std::string& body) {
  std::lock_guard lock(mu_);
  if (!bodies_.emplace(key, body).second) return;
  std::ofstream out(path_, std::ios::app);
  if (!out) throw std::runtime_error("cannot append to fixture file " + path_);
  json j = {{"key", key}, {"path", path}, {"request", json::parse(request)}, {"status", status}, {"body", body}};
  out << j.dump() << '\n';
}

GeneratorClient::GeneratorClient(GeneratorEndpoint endpoint, std::shared_ptr<ReplayStore> replay)
    : endpoint_(std::move(endpoint)), replay_(std::move(replay)) {
  if (endpoint_.max_in_flight == 0) throw ConfigError("generator.max_in_flight", "must be >= 1");
  if (endpoint_.retry.max_attempts < 1) throw ConfigError("generator.retry.max_attempts", "must be >= 1");
  const bool offline = replay_ && replay_->mode() == ReplayMode::Replay;
  if (endpoint_.base_url.empty() && !offline) throw ConfigError("generator.base_url", "must be set");
  const auto scheme_end = endpoint_.base_url.find("://");
  if (scheme_end != std::string::npos) {
    const auto path_start = endpoint_.base_url.find('/', scheme_end + 3);
    origin_ = endpoint_.base_url.substr(0, path_start);
    if (path_start != std::string::npos) prefix_ = endpoint_.base_url.substr(path_start);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  } else if (!offline) {
    throw ConfigError("generator.base_url", "expected scheme://host[:port][/prefix], got '" + endpoint_.base_url + "'");
  }
}

std::string GeneratorClient::post(const std::string& path, const std::string& body) {
  const std::string full_path = prefix_ + path;
  const std::string key = ReplayStore::request_key(path, body);
  if (replay_ && replay_->mode() == ReplayMode::Replay) {
    if (auto hit = replay_->find(key)) return *hit;
    throw TransportError("no recorded response for request " + key);
  }

  httplib::Client cli(origin_);
  const auto secs = static_cast<time_t>(endpoint_.timeout_s);
  const auto usecs = static_cast<time_t>((endpoint_.timeout_s - static_cast<double>(secs)) * 1e6);
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (const char* keyv = std::getenv(endpoint_.api_key_env.c_str()); keyv && *keyv)
    headers.emplace("Authorization", std::string("Bearer ") + keyv);

  std::string last_error;
  double delay_ms = endpoint_.retry.backoff_ms;
  for (int attempt = 1; attempt <= endpoint_.retry.max_attempts; ++attempt) {
    auto res = cli.Post(full_path, headers, body, "application/json");
    if (res && res->status == 200) {
      if (replay_ && replay_->mode() == ReplayMode::Record) replay_->record(key, path, body, res->status, res->body);
      return res->body;
    }
    if (res) {
      last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
      if (!retryable_status(res->status)) break;
    } else {
      last_error = "transport error: " + httplib::to_string(res.error());
    }
    if (attempt < endpoint_.retry.max_attempts) {
      std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(delay_ms));
      delay_ms *= endpoint_.retry.backoff_factor;
    }
  }
  throw TransportError(endpoint_.base_url + full_path + ": " + last_error);
}

std::vector<double> GeneratorClient::continuation_logprobs(const std::string& context,
                                                           const std::string& continuation) {
  json req = {{"model", endpoint_.model}, {"prompt", context + continuation},
              {"max_tokens", 0},          {"echo", true},
              {"logprobs", 0},            {"temperature", 0}};
  const auto body = post("/v1/completions", req.dump());
  json res;
  try {
    res = json::parse(body);
  } catch (const json::exception& e) {
    throw TransportError(std::string("unparseable completion response: ") + e.what());
  }
  const auto& choices = res.value("choices", json::array());
  if (choices.empty() || !choices[0].contains("logprobs") || choices[0]["logprobs"].is_null())
    throw ConfigError("generator", "endpoint does not return token log-probabilities");
  const auto& lp = choices[0]["logprobs"];
  if (!lp.contains("token_logprobs") || !lp.contains("text_offset"))
    throw ConfigError("generator", "endpoint does not return token log-probabilities");
  const auto& values = lp["token_logprobs"];
  const auto& offsets = lp["text_offset"];
  if (values.size() != offsets.size()) throw TransportError("token_logprobs and text_offset differ in length");
  const std::size_t boundary = utf8_length(context);
  std::vector<double> out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (offsets[i].get<std::size_t>() < boundary) continue;
    if (values[i].is_null()) throw TransportError("null log-probability inside the continuation");
    out.push_back(values[i].get<double>());
  }
  return out;
}

void GeneratorClient::probe() {
  auto lps = continuation_logprobs("Probe:", " ok");
  if (lps.empty()) throw ConfigError("generator", "endpoint returned no log-probabilities for the probe continuation");
}

std::string GeneratorClient::generate(const std::string& prompt, int max_tokens, const std::vector<std::string>& stop) {
  json req = {{"model", endpoint_.model}, {"prompt", prompt}, {"max_tokens", max_tokens}, {"temperature", 0}};
  if (!stop.empty()) req["stop"] = stop;
  const auto body = post("/v1/completions", req.dump());
  try {
    auto res = json::parse(body);
    return res.at("choices").at(0).at("text").get<std::string>();
  } catch (const json::exception& e) {
    throw TransportError(std::string("unexpected completion response: ") + e.what());
  }
}

}  // namespace icr
