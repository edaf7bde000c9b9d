#pragma once

// Persistent score cache: append-only JSON Lines, one row per
// (model_id, context, continuation), each carrying a CRC32 of its payload.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <tuple>

#include "primelens/scoring.hpp"

namespace primelens {

std::uint32_t crc32_of(std::string_view bytes);

// Serialized row without the trailing newline.
std::string encode_cache_row(const ScoreRequest& key, const ScoredSequence& seq);
// Throws CacheCorruption(row) on a checksum mismatch or malformed row.
std::pair<ScoreRequest, ScoredSequence> decode_cache_row(std::string_view line, std::size_t row);

class ScoreCache {
 public:
  // Loads and verifies every existing row. A final row with no newline is
  // a torn write from an interrupted run and is truncated away.
  explicit ScoreCache(std::filesystem::path path);

  std::optional<ScoredSequence> get(const ScoreRequest& key) const;
  // Appends and flushes one row. Re-putting an existing key is a no-op.
  void put(const ScoreRequest& key, const ScoredSequence& seq);
  bool contains(const ScoreRequest& key) const;

  std::size_t size() const;
  const std::filesystem::path& path() const { return path_; }
  bool recovered_torn_row() const { return recovered_; }

 private:
  using Key = std::tuple<std::string, std::string, std::string>;
  static Key key_of(const ScoreRequest& r) { return {r.model_id, r.context, r.continuation}; }

  std::filesystem::path path_;
  mutable std::shared_mutex mu_;
  std::map<Key, ScoredSequence> rows_;
  std::ofstream out_;
  bool recovered_ = false;
};

// Serves scores from the cache and fills misses from an upstream backend.
// Without an upstream every miss raises CacheMiss.
class CachedScorer : public Scorer {
 public:
  CachedScorer(std::shared_ptr<ScoreCache> cache, std::shared_ptr<Scorer> upstream,
               std::string backend_id);
  ScoredSequence score(const ScoreRequest& request) override;
  std::string backend_id() const override { return id_; }

  std::size_t hits() const { return hits_.load(); }
  std::size_t fetched() const { return fetched_.load(); }

 private:
  std::shared_ptr<ScoreCache> cache_;
  std::shared_ptr<Scorer> upstream_;
  std::string id_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> fetched_{0};
};

}  // namespace primelens
