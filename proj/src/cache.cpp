#include "primelens/cache.hpp"

#include <cstdio>
#include <iostream>
#include <sstream>

#include <json.hpp>
#include <zlib.h>

#include "primelens/error.hpp"

namespace primelens {

namespace {
constexpr std::string_view kCrcField = ",\"crc32\":\"";

std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}
}  // namespace

std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

std::string encode_cache_row(const ScoreRequest& key, const ScoredSequence& seq) {
  nlohmann::ordered_json j;
  j["model_id"] = key.model_id;
  j["context"] = key.context;
  j["continuation"] = key.continuation;
  j["backend_id"] = seq.backend_id;
  auto tokens = nlohmann::ordered_json::array();
  auto logprobs = nlohmann::ordered_json::array();
  auto spans = nlohmann::ordered_json::array();
  for (const auto& t : seq.tokens) {
    tokens.push_back(t.text);
    logprobs.push_back(t.logprob);
    spans.push_back({t.span.begin, t.span.end});
  }
  j["tokens"] = std::move(tokens);
  j["logprobs"] = std::move(logprobs);
  j["spans"] = std::move(spans);
  j["total_logprob"] = seq.total_logprob;
  std::string payload = j.dump();
  // The checksum covers the payload object exactly as written.
  const std::string crc = hex32(crc32_of(payload));
  payload.pop_back();
  payload += kCrcField;
  payload += crc;
  payload += "\"}";
  return payload;
}

std::pair<ScoreRequest, ScoredSequence> decode_cache_row(std::string_view line, std::size_t row) {
  const auto pos = line.rfind(kCrcField);
  if (pos == std::string_view::npos || !line.ends_with("\"}") ||
      line.size() != pos + kCrcField.size() + 8 + 2) {
    throw CacheCorruption(row, "missing or malformed crc32 field");
  }
  const std::string payload = std::string(line.substr(0, pos)) + "}";
  const std::string_view stored = line.substr(pos + kCrcField.size(), 8);
  if (hex32(crc32_of(payload)) != stored) throw CacheCorruption(row, "checksum mismatch");
  try {
    auto j = nlohmann::json::parse(payload);
    ScoreRequest key{j.at("context").get<std::string>(), j.at("continuation").get<std::string>(),
                     j.at("model_id").get<std::string>()};
    ScoredSequence seq;
    seq.backend_id = j.at("backend_id").get<std::string>();
    const auto& tokens = j.at("tokens");
    const auto& logprobs = j.at("logprobs");
    const auto& spans = j.at("spans");
    if (tokens.size() != logprobs.size() || tokens.size() != spans.size()) {
      throw CacheCorruption(row, "token arrays differ in length");
    }
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      seq.tokens.push_back({tokens[i].get<std::string>(), logprobs[i].get<double>(),
                            {spans[i].at(0).get<std::size_t>(), spans[i].at(1).get<std::size_t>()}});
    }
    seq.total_logprob = j.at("total_logprob").get<double>();
    return {std::move(key), std::move(seq)};
  } catch (const nlohmann::json::exception& e) {
    throw CacheCorruption(row, e.what());
  }
}

ScoreCache::ScoreCache(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  if (std::filesystem::exists(path_)) {
    std::string content;
    {
      std::ifstream in(path_, std::ios::binary);
      std::ostringstream ss;
      ss << in.rdbuf();
      content = ss.str();
    }
    if (!content.empty() && content.back() != '\n') {
      const auto keep = content.rfind('\n');
      const std::size_t new_size = keep == std::string::npos ? 0 : keep + 1;
      std::cerr << "warning: " << path_.string() << ": dropping torn final row\n";
      content.resize(new_size);
      std::filesystem::resize_file(path_, new_size);
      recovered_ = true;
    }
    std::size_t row = 0;
    std::size_t start = 0;
    while (start < content.size()) {
      const auto end = content.find('\n', start);
      ++row;
      std::string_view line(content.data() + start, end - start);
      auto [key, seq] = decode_cache_row(line, row);
      rows_.emplace(key_of(key), std::move(seq));
      start = end + 1;
    }
  }
  out_.open(path_, std::ios::binary | std::ios::app);
  if (!out_) throw InvalidArgument("cannot open cache file " + path_.string() + " for writing");
}

std::optional<ScoredSequence> ScoreCache::get(const ScoreRequest& key) const {
  std::shared_lock lock(mu_);
  auto it = rows_.find(key_of(key));
  if (it == rows_.end()) return std::nullopt;
  return it->second;
}

bool ScoreCache::contains(const ScoreRequest& key) const {
  std::shared_lock lock(mu_);
  return rows_.count(key_of(key)) > 0;
}

void ScoreCache::put(const ScoreRequest& key, const ScoredSequence& seq) {
  std::unique_lock lock(mu_);
  auto [it, inserted] = rows_.emplace(key_of(key), seq);
  if (!inserted) return;
  out_ << encode_cache_row(key, seq) << '\n';
  out_.flush();
  if (!out_) throw Error("failed to append to cache " + path_.string());
}

std::size_t ScoreCache::size() const {
  std::shared_lock lock(mu_);
  return rows_.size();
}

CachedScorer::CachedScorer(std::shared_ptr<ScoreCache> cache, std::shared_ptr<Scorer> upstream,
                           std::string backend_id)
    : cache_(std::move(cache)), upstream_(std::move(upstream)), id_(std::move(backend_id)) {}

ScoredSequence CachedScorer::score(const ScoreRequest& request) {
  if (auto hit = cache_->get(request)) {
    try {
      validate_sequence(*hit, request.continuation.size());
    } catch (const Error& e) {
      throw TokenizationMismatch("cached row for '" + request.continuation +
                                 "' does not match the request: " + e.what());
    }
    ++hits_;
    return *hit;
  }
  if (!upstream_) {
    throw CacheMiss("no cached score for model '" + request.model_id + "' continuation '" +
                    request.continuation + "' with context '" + request.context + "'");
  }
  auto seq = upstream_->score(request);
  validate_sequence(seq, request.continuation.size());
  cache_->put(request, seq);
  ++fetched_;
  return seq;
}

}  // namespace primelens
