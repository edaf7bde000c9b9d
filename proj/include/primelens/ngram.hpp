#pragma once

// Interpolated n-gram language model used as a deterministic scoring oracle.
//
// P(w | h) = sum_k weight[k-1] * P_k(w | h), where P_k is the maximum
// likelihood estimate conditioned on the last k-1 words of h. When that
// (k-1)-word context was never observed, or h is shorter than k-1 words,
// P_k falls back to P_{k-1}, so every component stays a proper
// distribution over the vocabulary.

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "primelens/scoring.hpp"

namespace primelens {

enum class UnknownWordPolicy {
  Reject,    // closed vocabulary: unknown words raise VocabularyError
  MapToUnk,  // unknown words map to <unk>, which gets one pseudo-count
};

class NGramModel {
 public:
  static constexpr std::string_view kUnk = "<unk>";

  std::size_t order() const { return weights_.size(); }
  const std::vector<double>& weights() const { return weights_; }
  std::size_t context_window() const { return context_window_; }
  UnknownWordPolicy unknown_policy() const { return policy_; }
  const std::vector<std::string>& vocabulary() const { return vocab_; }
  bool in_vocabulary(std::string_view word) const;

  // Only the last min(order-1, context_window) history words are used.
  double prob(std::span<const std::string> history, std::string_view word) const;
  double logprob(std::span<const std::string> history, std::string_view word) const;

 private:
  friend NGramModel train_ngram(const std::vector<std::vector<std::string>>&, std::size_t,
                                std::vector<double>, std::size_t, UnknownWordPolicy);

  struct ContextCounts {
    std::uint64_t total = 0;
    std::unordered_map<int, std::uint64_t> next;
  };

  int word_id(std::string_view word) const;
  double component(const std::vector<int>& history, std::size_t k, int word) const;

  std::vector<double> weights_;
  std::size_t context_window_ = 0;
  UnknownWordPolicy policy_ = UnknownWordPolicy::Reject;
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, int> ids_;
  // tables_[k] holds counts for contexts of k words, k = 0 .. order-1.
  std::vector<std::map<std::vector<int>, ContextCounts>> tables_;
};

// Throws InvalidArgument for an empty corpus, order < 1, or weights that
// are negative, of the wrong length, or do not sum to 1 within 1e-12.
NGramModel train_ngram(const std::vector<std::vector<std::string>>& sentences, std::size_t order,
                       std::vector<double> weights, std::size_t context_window,
                       UnknownWordPolicy policy = UnknownWordPolicy::Reject);

// Tokenizes the continuation on whitespace, attaching each word's leading
// whitespace to its token (" girl"), and conditions every token on the
// context words plus the preceding continuation words.
class NGramScorer : public Scorer {
 public:
  NGramScorer(std::shared_ptr<const NGramModel> model, std::string id);
  ScoredSequence score(const ScoreRequest& request) override;
  std::string backend_id() const override { return id_; }
  const NGramModel& model() const { return *model_; }

 private:
  std::shared_ptr<const NGramModel> model_;
  std::string id_;
};

}  // namespace primelens
