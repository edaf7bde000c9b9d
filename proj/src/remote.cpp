#include "primelens/remote.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <random>
#include <thread>

#include <httplib.h>

#include "primelens/error.hpp"
#include "primelens/text.hpp"

namespace primelens {

EndpointConfig EndpointConfig::with_environment() const {
  EndpointConfig out = *this;
  if (const char* url = std::getenv("PRIMELENS_ENDPOINT"); url && *url) out.url = url;
  if (const char* key = std::getenv("PRIMELENS_API_KEY"); key && *key) out.api_key = key;
  return out;
}

Prompt build_prompt(const ScoreRequest& request, const EndpointConfig& config) {
  Prompt p;
  if (request.context.empty()) {
    p.text = config.empty_context_prefix;
  } else {
    p.text = request.context + config.separator;
  }
  p.continuation_begin = p.text.size();
  p.text += request.continuation;
  return p;
}

ScoredSequence parse_completion_response(const nlohmann::json& body, const Prompt& prompt,
                                         double logprob_base, std::string backend_id) {
  const nlohmann::json* lp = nullptr;
  try {
    lp = &body.at("choices").at(0).at("logprobs");
  } catch (const nlohmann::json::exception&) {
    throw ProtocolError("response has no choices[0].logprobs");
  }
  if (!lp->contains("tokens") || !lp->contains("token_logprobs") || !lp->contains("text_offset")) {
    throw ProtocolError("logprobs object lacks tokens, token_logprobs or text_offset");
  }
  const auto& tokens = lp->at("tokens");
  const auto& logprobs = lp->at("token_logprobs");
  const auto& offsets = lp->at("text_offset");
  if (!tokens.is_array() || !logprobs.is_array() || !offsets.is_array() ||
      tokens.size() != logprobs.size() || tokens.size() != offsets.size()) {
    throw ProtocolError("tokens, token_logprobs and text_offset differ in length");
  }
  const double scale = logprob_base > 0.0 ? std::log(logprob_base) : 1.0;
  const std::size_t cbegin = prompt.continuation_begin;
  const std::size_t cend = prompt.text.size();

  ScoredSequence out;
  out.backend_id = std::move(backend_id);
  std::size_t cursor = cbegin;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!tokens[i].is_string() || !offsets[i].is_number_integer()) {
      throw ProtocolError("token " + std::to_string(i) + " has a malformed text or offset");
    }
    const std::string tok = tokens[i].get<std::string>();
    const auto off = offsets[i].get<long long>();
    if (off < 0) throw ProtocolError("negative text offset");
    const std::size_t begin = static_cast<std::size_t>(off);
    const std::size_t end = begin + tok.size();
    if (end <= cbegin || begin >= cend) continue;  // context or generated text
    if (begin < cbegin) {
      // A token may absorb the separator; anything else crosses the
      // context/continuation boundary.
      for (std::size_t k = begin; k < cbegin; ++k) {
        if (!text::is_space(prompt.text[k])) {
          throw CoverageError("token '" + tok + "' straddles the context/continuation boundary");
        }
      }
    }
    const std::size_t span_begin = std::max(begin, cbegin);
    if (span_begin != cursor) {
      throw CoverageError("token '" + tok + "' starts at " + std::to_string(span_begin - cbegin) +
                          ", expected " + std::to_string(cursor - cbegin));
    }
    if (end > cend) throw CoverageError("token '" + tok + "' extends past the continuation");
    if (!logprobs[i].is_number()) {
      throw ProtocolError("token " + std::to_string(i) + " in the continuation has no logprob");
    }
    ScoredToken t;
    t.text = tok;
    t.logprob = logprobs[i].get<double>() * scale;
    t.span = {span_begin - cbegin, end - cbegin};
    out.tokens.push_back(std::move(t));
    cursor = end;
  }
  if (cursor != cend) {
    throw CoverageError("tokens cover " + std::to_string(cursor - cbegin) + " of " +
                        std::to_string(cend - cbegin) + " continuation characters");
  }
  finalize_total(out);
  return out;
}

namespace {

struct Attempt {
  enum class Kind { Ok, Retryable, Fatal } kind;
  std::string error;
  std::string body;
};

Attempt post_once(const EndpointConfig& config, const std::string& payload) {
  httplib::Client client(config.url);
  const auto secs = static_cast<time_t>(config.timeout_s);
  const auto usecs = static_cast<time_t>((config.timeout_s - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!config.api_key.empty()) headers.emplace("Authorization", "Bearer " + config.api_key);
  auto res = client.Post(config.path, headers, payload, "application/json");
  if (!res) return {Attempt::Kind::Retryable, "transport error: " + httplib::to_string(res.error()), {}};
  if (res->status == 429 || res->status >= 500) {
    return {Attempt::Kind::Retryable, "HTTP " + std::to_string(res->status), {}};
  }
  if (res->status != 200) {
    return {Attempt::Kind::Fatal, "HTTP " + std::to_string(res->status) + ": " + res->body, {}};
  }
  return {Attempt::Kind::Ok, {}, std::move(res->body)};
}

double jittered(double delay, double jitter) {
  if (jitter <= 0.0) return delay;
  thread_local std::mt19937_64 rng{std::random_device{}()};
  std::uniform_real_distribution<double> u(1.0 - jitter, 1.0 + jitter);
  return delay * u(rng);
}

}  // namespace

ScoredSequence fetch_remote(const ScoreRequest& request, const EndpointConfig& config,
                            FetchStats* stats) {
  if (request.continuation.empty()) throw InvalidArgument("empty continuation");
  if (config.url.empty()) throw ConfigError("endpoint url is not configured");
  const Prompt prompt = build_prompt(request, config);
  nlohmann::json payload = {
      {"model", config.remote_model.empty() ? request.model_id : config.remote_model},
      {"prompt", prompt.text},
      {"max_tokens", 0},
      {"echo", true},
      {"logprobs", true},
  };
  const std::string body = payload.dump();

  FetchStats local;
  FetchStats& st = stats ? *stats : local;
  st = {};
  const std::size_t max_attempts = std::max<std::size_t>(1, config.retry.max_attempts);
  double delay = config.retry.base_delay_s;
  std::string last_error;
  for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
    if (attempt > 0) {
      ++st.retries;
      std::this_thread::sleep_for(std::chrono::duration<double>(jittered(delay, config.retry.jitter)));
      delay *= config.retry.factor;
    }
    ++st.attempts;
    auto result = post_once(config, body);
    if (result.kind == Attempt::Kind::Retryable) {
      last_error = result.error;
      continue;
    }
    if (result.kind == Attempt::Kind::Fatal) throw ProtocolError(result.error);
    nlohmann::json parsed;
    try {
      parsed = nlohmann::json::parse(result.body);
    } catch (const nlohmann::json::exception& e) {
      throw ProtocolError(std::string("response is not JSON: ") + e.what());
    }
    return parse_completion_response(parsed, prompt, config.logprob_base, request.model_id);
  }
  throw BackendUnavailable("endpoint " + config.url + config.path + " failed after " +
                           std::to_string(max_attempts) + " attempts: " + last_error);
}

RemoteScorer::RemoteScorer(EndpointConfig config, std::string backend_id)
    : config_(std::move(config)), id_(std::move(backend_id)) {
  if (config_.max_in_flight == 0) config_.max_in_flight = 1;
}

ScoredSequence RemoteScorer::score(const ScoreRequest& request) {
  {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return in_flight_ < config_.max_in_flight; });
    ++in_flight_;
    std::size_t peak = peak_.load();
    while (in_flight_ > peak && !peak_.compare_exchange_weak(peak, in_flight_)) {
    }
  }
  struct Release {
    RemoteScorer* self;
    ~Release() {
      {
        std::lock_guard lock(self->mu_);
        --self->in_flight_;
      }
      self->cv_.notify_one();
    }
  } release{this};

  FetchStats stats;
  auto req = request;
  auto seq = fetch_remote(req, config_, &stats);
  retries_ += stats.retries;
  seq.backend_id = id_;
  return seq;
}

}  // namespace primelens
