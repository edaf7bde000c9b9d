#pragma once

// Reference implementations for tests. Each is written the slow, obvious
// way and shares no code with the library.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "primelens/scoring.hpp"
#include "primelens/text.hpp"

namespace primelens::testing {

// Rank of x[i] = 1 + (#values below) + (#other equal values) / 2.
inline std::vector<double> brute_ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double below = 0, equal = 0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (x[j] < x[i]) below += 1;
      if (x[j] == x[i]) equal += 1;
    }
    r[i] = 1.0 + below + (equal - 1.0) / 2.0;
  }
  return r;
}

inline double brute_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  long double n = x.size(), sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += (long double)x[i] * x[i];
    syy += (long double)y[i] * y[i];
    sxy += (long double)x[i] * y[i];
  }
  const long double num = n * sxy - sx * sy;
  const long double den = std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
  return static_cast<double>(num / den);
}

inline double brute_spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return brute_pearson(brute_ranks(x), brute_ranks(y));
}

// Two-sided standard normal tail by composite Simpson integration of the
// density over [0, |z|].
inline double simpson_two_sided_p(double z) {
  const double a = std::abs(z);
  if (a == 0.0) return 1.0;
  const int n = 20000;
  const double h = a / n;
  auto phi = [](double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi); };
  long double s = phi(0.0) + phi(a);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0L : 2.0L) * phi(i * h);
  const long double half = s * h / 3.0L;
  return static_cast<double>(1.0L - 2.0L * half);
}

struct AnovaEstimate {
  double sigma2 = 0.0;
  double sigma2_group = 0.0;
};

// Balanced one-way layout: y[g * n + i]. When MSB <= MSW the group
// variance is clamped at zero and the residual variance becomes the
// pooled total variance, which is where REML lands on that boundary.
inline AnovaEstimate anova_estimate(const std::vector<double>& y, std::size_t groups, std::size_t n) {
  long double grand = 0;
  for (double v : y) grand += v;
  grand /= (long double)y.size();
  long double ssw = 0, ssb = 0;
  for (std::size_t g = 0; g < groups; ++g) {
    long double m = 0;
    for (std::size_t i = 0; i < n; ++i) m += y[g * n + i];
    m /= n;
    for (std::size_t i = 0; i < n; ++i) ssw += (y[g * n + i] - m) * (y[g * n + i] - m);
    ssb += n * (m - grand) * (m - grand);
  }
  const long double msw = ssw / (long double)(groups * (n - 1));
  const long double msb = ssb / (long double)(groups - 1);
  if (msb > msw) return {static_cast<double>(msw), static_cast<double>((msb - msw) / n)};
  return {static_cast<double>((ssw + ssb) / (long double)(groups * n - 1)), 0.0};
}

inline std::uint64_t fnv(std::string_view s, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Uniform in [0, 1) from a string.
inline double unit_hash(std::string_view s) { return static_cast<double>(fnv(s) >> 11) * 0x1.0p-53; }

// Word-level scorer: every continuation word is one token carrying its
// leading space. Subclasses supply the per-token logprob.
class WordScorer : public Scorer {
 public:
  ScoredSequence score(const ScoreRequest& req) override {
    ScoredSequence seq;
    seq.backend_id = backend_id();
    const auto ctx = text::split_whitespace(req.context);
    const auto words = text::split_whitespace(req.continuation);
    std::size_t cursor = 0;
    for (std::size_t i = 0; i < words.size(); ++i) {
      // Each token runs from the end of the previous word, so it carries
      // the whitespace in front of its own word.
      const std::size_t end = req.continuation.find(words[i], cursor) + words[i].size();
      ScoredToken t;
      t.text = req.continuation.substr(cursor, end - cursor);
      t.span = {cursor, end};
      cursor = end;
      t.logprob = token_logprob(ctx, words, i);
      seq.tokens.push_back(std::move(t));
    }
    finalize_total(seq);
    return seq;
  }

 protected:
  virtual double token_logprob(const std::vector<std::string>& context,
                               const std::vector<std::string>& words, std::size_t i) const = 0;

  // 9 words is a PO rendering, 8 a DO rendering.
  static int structure_of(const std::vector<std::string>& words) {
    return words.size() == 9 ? 0 : words.size() == 8 ? 1 : -1;
  }

  static std::string join(const std::vector<std::string>& w, std::size_t n) {
    std::string s;
    for (std::size_t i = 0; i < n && i < w.size(); ++i) s += w[i] + " ";
    return s;
  }
};

// Context-free base logprob plus gamma on the final token whenever the
// context has the same structure as the continuation, so every sentence
// priming effect is gamma by construction.
class GammaBoostScorer : public WordScorer {
 public:
  explicit GammaBoostScorer(double gamma) : gamma_(gamma) {}
  std::string backend_id() const override { return "gamma-boost"; }

 protected:
  double token_logprob(const std::vector<std::string>& ctx, const std::vector<std::string>& words,
                       std::size_t i) const override {
    double lp = -1.0 - 4.0 * unit_hash(join(words, i) + "|" + words[i]);
    if (i + 1 == words.size() && !ctx.empty() && structure_of(ctx) == structure_of(words)) lp += gamma_;
    return lp;
  }

 private:
  double gamma_;
};

// Prefix tokens move by +a after a PO prime and by -a after a DO prime,
// which makes the two targets' prefix effects exact negatives. Post-divergence tokens
// gain an independent item- and structure-specific b after a congruent
// prime.
class SofteningScorer : public WordScorer {
 public:
  SofteningScorer(double prefix_scale, double suffix_scale)
      : a_scale_(prefix_scale), b_scale_(suffix_scale) {}
  std::string backend_id() const override { return "softening"; }

 protected:
  double token_logprob(const std::vector<std::string>& ctx, const std::vector<std::string>& words,
                       std::size_t i) const override {
    double lp = -2.0 - unit_hash(join(words, i) + "#" + words[i]);
    const int cs = structure_of(ctx);
    if (cs < 0) return lp;
    if (i < 4) {
      const double a = a_scale_ * (unit_hash("a:" + join(words, 4)) - 0.5) / 4.0;
      lp += cs == 0 ? a : -a;
    } else if (cs == structure_of(words)) {
      const double b = b_scale_ * (unit_hash("b:" + join(words, words.size())) - 0.5) /
                       static_cast<double>(words.size() - 4);
      lp += b;
    }
    return lp;
  }

 private:
  double a_scale_;
  double b_scale_;
};

}  // namespace primelens::testing
