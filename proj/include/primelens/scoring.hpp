#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace primelens {

struct ScoreRequest {
  std::string context;  // may be empty
  std::string continuation;
  std::string model_id;
};

// Half-open character range into the continuation.
struct CharSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  friend bool operator==(const CharSpan&, const CharSpan&) = default;
};

struct ScoredToken {
  std::string text;
  double logprob = 0.0;  // natural log
  CharSpan span;
  friend bool operator==(const ScoredToken&, const ScoredToken&) = default;
};

struct ScoredSequence {
  std::vector<ScoredToken> tokens;
  double total_logprob = 0.0;
  std::string backend_id;

  friend bool operator==(const ScoredSequence&, const ScoredSequence&) = default;
};

// Sums token logprobs into total_logprob.
void finalize_total(ScoredSequence& seq);

// Throws CoverageError unless spans are ordered and tile [0, length), and
// InvariantError on a non-finite logprob or a total that is off by > 1e-9.
void validate_sequence(const ScoredSequence& seq, std::size_t continuation_length);

// Left context and continuation are joined with this when the context is
// non-empty.
inline constexpr char kDefaultSeparator[] = " ";

// The scoring contract shared by every backend. Implementations must be
// safe to call concurrently.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual ScoredSequence score(const ScoreRequest& request) = 0;
  virtual std::string backend_id() const = 0;
};

}  // namespace primelens
