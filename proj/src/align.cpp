#include "primelens/align.hpp"

#include <algorithm>
#include <string>

#include "primelens/corpus.hpp"
#include "primelens/error.hpp"
#include "primelens/text.hpp"

namespace primelens {

const SlotRange* SlotAlignment::find(Slot slot) const {
  auto it = std::find_if(slot_spans.begin(), slot_spans.end(),
                         [&](const SlotRange& r) { return r.slot == slot; });
  return it == slot_spans.end() ? nullptr : &*it;
}

SlotAlignment align(const ScoredSequence& scored, const SlotWords& words, Structure structure) {
  const std::string rendering = render(words, structure);

  std::string concat;
  for (const auto& t : scored.tokens) concat += t.text;
  const std::string normalized = text::normalize_whitespace(concat);
  if (normalized != rendering) {
    std::size_t i = 0;
    while (i < normalized.size() && i < rendering.size() && normalized[i] == rendering[i]) ++i;
    throw AlignmentMismatch(i, "tokens spell '" + normalized + "', expected '" + rendering + "'");
  }

  // Word boundaries in the rendering; each word owns the whitespace before it.
  const auto tmpl = slot_template(structure);
  std::vector<std::size_t> word_end;
  for (std::size_t i = 0; i < rendering.size(); ++i) {
    if (rendering[i] == ' ') word_end.push_back(i);
  }
  word_end.push_back(rendering.size());

  SlotAlignment out;
  out.n_tokens = scored.tokens.size();
  std::vector<std::size_t> first(tmpl.size(), out.n_tokens), count(tmpl.size(), 0);
  std::size_t cursor = 0;
  std::size_t w = 0;
  for (std::size_t t = 0; t < scored.tokens.size(); ++t) {
    const auto& span = scored.tokens[t].span;
    if (span.begin != cursor || span.end <= span.begin || span.end > rendering.size()) {
      throw AlignmentMismatch(span.begin, "token spans do not tile the rendering");
    }
    cursor = span.end;
    const std::size_t mid2 = span.begin + span.end;
    while (w + 1 < word_end.size() && mid2 >= 2 * word_end[w]) ++w;
    if (count[w] == 0) first[w] = t;
    ++count[w];
  }
  if (cursor != rendering.size()) {
    throw AlignmentMismatch(cursor, "tokens end before the rendering does");
  }
  for (std::size_t k = 0; k < tmpl.size(); ++k) {
    if (count[k] == 0) {
      const std::size_t begin = k == 0 ? 0 : word_end[k - 1] + 1;
      throw AlignmentMismatch(begin, "no token falls on slot " + std::string(to_string(tmpl[k])));
    }
    out.slot_spans.push_back({tmpl[k], first[k], first[k] + count[k]});
  }
  return out;
}

double slot_logprob(const ScoredSequence& scored, const SlotAlignment& alignment, Slot slot) {
  const auto* range = alignment.find(slot);
  if (!range) throw InvalidArgument("slot " + std::string(to_string(slot)) + " is not aligned");
  double sum = 0.0;
  for (std::size_t i = range->begin; i < range->end; ++i) sum += scored.tokens[i].logprob;
  return sum;
}

}  // namespace primelens
