#include "primelens/scoring.hpp"

#include <cmath>
#include <string>

#include "primelens/error.hpp"

namespace primelens {

void finalize_total(ScoredSequence& seq) {
  double total = 0.0;
  for (const auto& t : seq.tokens) total += t.logprob;
  seq.total_logprob = total;
}

void validate_sequence(const ScoredSequence& seq, std::size_t continuation_length) {
  std::size_t cursor = 0;
  double total = 0.0;
  for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
    const auto& t = seq.tokens[i];
    if (t.span.begin != cursor || t.span.end <= t.span.begin) {
      throw CoverageError("token " + std::to_string(i) + " span [" + std::to_string(t.span.begin) +
                          "," + std::to_string(t.span.end) + ") does not continue at " +
                          std::to_string(cursor));
    }
    if (!std::isfinite(t.logprob)) {
      throw InvariantError("token " + std::to_string(i) + " has a non-finite logprob");
    }
    cursor = t.span.end;
    total += t.logprob;
  }
  if (cursor != continuation_length) {
    throw CoverageError("tokens cover " + std::to_string(cursor) + " of " +
                        std::to_string(continuation_length) + " continuation characters");
  }
  if (std::abs(total - seq.total_logprob) > 1e-9) {
    throw InvariantError("total_logprob disagrees with the token sum");
  }
}

}  // namespace primelens
