#pragma once

// Client for OpenAI-compatible completion endpoints that can echo the
// prompt with per-token logprobs (max_tokens 0, echo true).

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <mutex>
#include <string>
#include <string_view>

#include <json.hpp>

#include "primelens/scoring.hpp"

namespace primelens {

struct RetryPolicy {
  double base_delay_s = 0.5;
  double factor = 2.0;
  std::size_t max_attempts = 5;
  double jitter = 0.25;  // delay is scaled by a uniform draw in [1-j, 1+j]
};

struct EndpointConfig {
  std::string url;  // scheme://host[:port]
  std::string path = "/v1/completions";
  std::string api_key;
  std::string remote_model;  // sent as "model"; empty means the request's model_id
  double timeout_s = 30.0;
  RetryPolicy retry;
  std::size_t max_in_flight = 4;
  double logprob_base = 0.0;  // 0 means natural log; otherwise converted to nats
  std::string separator = kDefaultSeparator;
  // Prepended to the prompt when the context is empty, so that the first
  // continuation token is conditioned on something (e.g. a BOS string).
  std::string empty_context_prefix;

  // PRIMELENS_ENDPOINT and PRIMELENS_API_KEY, when set, override url and
  // api_key.
  EndpointConfig with_environment() const;
};

struct FetchStats {
  std::size_t attempts = 0;
  std::size_t retries = 0;
};

struct Prompt {
  std::string text;
  std::size_t continuation_begin = 0;
};

Prompt build_prompt(const ScoreRequest& request, const EndpointConfig& config);

// Extracts the continuation's tokens from an echo response. Throws
// ProtocolError for missing or malformed logprob fields and CoverageError
// when the returned tokens do not tile the continuation.
ScoredSequence parse_completion_response(const nlohmann::json& body, const Prompt& prompt,
                                         double logprob_base, std::string backend_id);

// One request with retries and exponential backoff on transport failures,
// timeouts, HTTP 429 and 5xx.
ScoredSequence fetch_remote(const ScoreRequest& request, const EndpointConfig& config,
                            FetchStats* stats = nullptr);

class RemoteScorer : public Scorer {
 public:
  RemoteScorer(EndpointConfig config, std::string backend_id);
  ScoredSequence score(const ScoreRequest& request) override;
  std::string backend_id() const override { return id_; }

  std::size_t total_retries() const { return retries_.load(); }
  std::size_t peak_in_flight() const { return peak_.load(); }

 private:
  EndpointConfig config_;
  std::string id_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t in_flight_ = 0;
  std::atomic<std::size_t> retries_{0};
  std::atomic<std::size_t> peak_{0};
};

}  // namespace primelens
