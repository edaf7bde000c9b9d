#include "primelens/ngram.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "primelens/error.hpp"
#include "primelens/text.hpp"

namespace primelens {

NGramModel train_ngram(const std::vector<std::vector<std::string>>& sentences, std::size_t order,
                       std::vector<double> weights, std::size_t context_window,
                       UnknownWordPolicy policy) {
  if (order < 1) throw InvalidArgument("n-gram order must be at least 1");
  if (weights.size() != order) {
    throw InvalidArgument("expected " + std::to_string(order) + " interpolation weights, got " +
                          std::to_string(weights.size()));
  }
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidArgument("interpolation weights must be non-negative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw InvalidArgument("interpolation weights must sum to 1");

  std::set<std::string> words;
  std::size_t n_tokens = 0;
  for (const auto& s : sentences) {
    words.insert(s.begin(), s.end());
    n_tokens += s.size();
  }
  if (n_tokens == 0) throw InvalidArgument("cannot train an n-gram model on an empty corpus");

  NGramModel m;
  m.weights_ = std::move(weights);
  m.context_window_ = context_window;
  m.policy_ = policy;
  if (policy == UnknownWordPolicy::MapToUnk) words.insert(std::string(NGramModel::kUnk));
  m.vocab_.assign(words.begin(), words.end());
  for (std::size_t i = 0; i < m.vocab_.size(); ++i) m.ids_[m.vocab_[i]] = static_cast<int>(i);
  m.tables_.resize(order);

  for (const auto& s : sentences) {
    std::vector<int> ids;
    for (const auto& w : s) ids.push_back(m.ids_.at(w));
    for (std::size_t i = 0; i < ids.size(); ++i) {
      for (std::size_t k = 0; k < order && k <= i; ++k) {
        std::vector<int> ctx(ids.begin() + static_cast<std::ptrdiff_t>(i - k),
                             ids.begin() + static_cast<std::ptrdiff_t>(i));
        auto& cc = m.tables_[k][ctx];
        ++cc.total;
        ++cc.next[ids[i]];
      }
    }
  }
  if (policy == UnknownWordPolicy::MapToUnk) {
    auto& unigram = m.tables_[0][{}];
    ++unigram.total;
    ++unigram.next[m.ids_.at(std::string(NGramModel::kUnk))];
  }
  return m;
}

bool NGramModel::in_vocabulary(std::string_view word) const {
  return ids_.count(std::string(word)) > 0;
}

int NGramModel::word_id(std::string_view word) const {
  auto it = ids_.find(std::string(word));
  if (it != ids_.end()) return it->second;
  if (policy_ == UnknownWordPolicy::MapToUnk) return ids_.at(std::string(kUnk));
  throw VocabularyError("word '" + std::string(word) + "' is not in the oracle vocabulary");
}

// P_{k+1}(word | last k words of history), backing off to shorter contexts
// when the k-word context is unseen or the history is too short.
double NGramModel::component(const std::vector<int>& history, std::size_t k, int word) const {
  if (k > 0 && history.size() < k) return component(history, k - 1, word);
  std::vector<int> ctx(history.end() - static_cast<std::ptrdiff_t>(k), history.end());
  auto it = tables_[k].find(ctx);
  if (it == tables_[k].end() || it->second.total == 0) {
    return k == 0 ? 0.0 : component(history, k - 1, word);
  }
  auto w = it->second.next.find(word);
  double c = w == it->second.next.end() ? 0.0 : static_cast<double>(w->second);
  return c / static_cast<double>(it->second.total);
}

double NGramModel::prob(std::span<const std::string> history, std::string_view word) const {
  const std::size_t keep = std::min(order() - 1, context_window_);
  std::vector<int> h;
  const std::size_t start = history.size() > keep ? history.size() - keep : 0;
  for (std::size_t i = start; i < history.size(); ++i) h.push_back(word_id(history[i]));
  const int w = word_id(word);
  double p = 0.0;
  for (std::size_t k = 0; k < order(); ++k) {
    if (weights_[k] == 0.0) continue;
    p += weights_[k] * component(h, k, w);
  }
  return p;
}

double NGramModel::logprob(std::span<const std::string> history, std::string_view word) const {
  double p = prob(history, word);
  if (!(p > 0.0)) {
    throw InvariantError("oracle assigns zero probability to '" + std::string(word) + "'");
  }
  return std::log(p);
}

NGramScorer::NGramScorer(std::shared_ptr<const NGramModel> model, std::string id)
    : model_(std::move(model)), id_(std::move(id)) {}

ScoredSequence NGramScorer::score(const ScoreRequest& request) {
  if (request.continuation.empty()) throw InvalidArgument("empty continuation");
  std::vector<std::string> history = text::split_whitespace(request.context);
  ScoredSequence out;
  out.backend_id = id_;
  const auto& s = request.continuation;
  std::size_t i = 0;
  while (i < s.size()) {
    std::size_t word_begin = i;
    while (word_begin < s.size() && text::is_space(s[word_begin])) ++word_begin;
    if (word_begin == s.size()) {
      // Trailing whitespace joins the last token.
      if (out.tokens.empty()) throw InvalidArgument("continuation is all whitespace");
      out.tokens.back().text += s.substr(i);
      out.tokens.back().span.end = s.size();
      break;
    }
    std::size_t word_end = word_begin;
    while (word_end < s.size() && !text::is_space(s[word_end])) ++word_end;
    std::string word = s.substr(word_begin, word_end - word_begin);
    ScoredToken tok;
    tok.text = s.substr(i, word_end - i);
    tok.span = {i, word_end};
    tok.logprob = model_->logprob(history, word);
    out.tokens.push_back(std::move(tok));
    history.push_back(std::move(word));
    i = word_end;
  }
  finalize_total(out);
  return out;
}

}  // namespace primelens
