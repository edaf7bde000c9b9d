#pragma once

#include <cstddef>
#include <vector>

#include "primelens/scoring.hpp"
#include "primelens/structure.hpp"

namespace primelens {

// Token index range [begin, end) belonging to one word slot.
struct SlotRange {
  Slot slot;
  std::size_t begin = 0;
  std::size_t end = 0;
  friend bool operator==(const SlotRange&, const SlotRange&) = default;
};

struct SlotAlignment {
  std::vector<SlotRange> slot_spans;  // template order, tiling [0, n_tokens)
  std::size_t n_tokens = 0;

  const SlotRange* find(Slot slot) const;
  friend bool operator==(const SlotAlignment&, const SlotAlignment&) = default;
};

// Assigns each token to the word whose span contains the token's midpoint.
// Whitespace before a word counts as part of that word. Throws
// AlignmentMismatch when the tokens do not spell the rendering or some
// word receives no token.
SlotAlignment align(const ScoredSequence& scored, const SlotWords& words, Structure structure);

// Sum of the logprobs of the slot's tokens. Throws InvalidArgument for a
// slot the alignment does not contain.
double slot_logprob(const ScoredSequence& scored, const SlotAlignment& alignment, Slot slot);

}  // namespace primelens
