#include <cmath>
#include <memory>
#include <mutex>
#include <sstream>

#include <gtest/gtest.h>

#include "primelens/metrics.hpp"
#include "primelens/ngram.hpp"
#include "primelens/text.hpp"
#include "oracles.hpp"
#include "toy.hpp"

using namespace primelens;
using primelens::testing::GammaBoostScorer;
using primelens::testing::SofteningScorer;
using primelens::testing::Toy;

namespace {

std::vector<PrimeTargetItem> toy_items(Condition c, std::size_t n, std::uint64_t seed = 17) {
  const auto& toy = Toy::get();
  return generate(c, n, toy.lexicon, toy.norms, toy.embeddings, seed);
}

NGramScorer unigram_over(const std::vector<PrimeTargetItem>& items) {
  std::vector<std::vector<std::string>> sentences;
  for (const auto& it : items) {
    for (const auto* s : {&it.prime_po, &it.prime_do, &it.target_po, &it.target_do}) {
      sentences.push_back(text::split_whitespace(*s));
    }
  }
  return NGramScorer(std::make_shared<NGramModel>(train_ngram(sentences, 1, {1.0}, 64)), "unigram");
}

ScoredSequence one_token(double lp, std::size_t len) {
  ScoredSequence s;
  s.tokens = {{std::string(len, 'x'), lp, {0, len}}};
  finalize_total(s);
  return s;
}

// Records the requests it sees.
class RecordingScorer : public Scorer {
 public:
  explicit RecordingScorer(std::shared_ptr<Scorer> inner) : inner_(std::move(inner)) {}
  ScoredSequence score(const ScoreRequest& r) override {
    std::lock_guard lock(mu_);
    seen.push_back(r);
    return inner_->score(r);
  }
  std::string backend_id() const override { return inner_->backend_id(); }
  std::vector<ScoreRequest> seen;

 private:
  std::shared_ptr<Scorer> inner_;
  std::mutex mu_;
};

PEResult with_slots(SlotValues po, SlotValues dO) {
  PEResult r;
  r.w_pe_po = std::move(po);
  r.w_pe_do = std::move(dO);
  for (const auto& [s, v] : r.w_pe_po) r.s_pe_po += v;
  for (const auto& [s, v] : r.w_pe_do) r.s_pe_do += v;
  return r;
}

}  // namespace

TEST(SentencePe, Subtraction) {
  ItemLegs legs;
  legs.congruent = {one_token(-10.0, 3), one_token(-7.0, 3)};
  legs.incongruent = {one_token(-12.0, 3), one_token(-6.5, 3)};
  auto [po, dO] = sentence_pe(legs);
  EXPECT_DOUBLE_EQ(po, 2.0);
  EXPECT_DOUBLE_EQ(dO, -0.5);
}

TEST(SentencePe, ExactlyFourLegsInFixedOrder) {
  auto items = toy_items(Condition::Core, 1);
  auto rec = std::make_shared<RecordingScorer>(std::make_shared<GammaBoostScorer>(0.7));
  measure_item(items[0], "m", *rec);
  ASSERT_EQ(rec->seen.size(), 4u);
  auto expected = leg_requests(items[0], "m");
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(rec->seen[i].context, expected[i].context);
    EXPECT_EQ(rec->seen[i].continuation, expected[i].continuation);
  }
}

TEST(SentencePe, UnigramOracleIsExactlyZero) {
  auto items = toy_items(Condition::OverlapNouns, 30);
  auto uni = unigram_over(items);
  for (const auto& it : items) {
    auto r = measure_item(it, "unigram", uni);
    EXPECT_EQ(r.s_pe_po, 0.0);
    EXPECT_EQ(r.s_pe_do, 0.0);
    EXPECT_EQ(r.s_delta_pe_po, 0.0);
    for (const auto& [s, v] : r.w_pe_po) EXPECT_EQ(v, 0.0);
    for (const auto& [s, v] : r.w_pe_do) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(r.quadrant, Quadrant::Inverse);
  }
}

TEST(SentencePe, GammaBoostIsRecovered) {
  GammaBoostScorer gamma(0.7);
  for (const auto& it : toy_items(Condition::SimNouns, 20)) {
    auto [po, dO] = sentence_pe(it, "g", gamma);
    EXPECT_NEAR(po, 0.7, 1e-9);
    EXPECT_NEAR(dO, 0.7, 1e-9);
  }
}

TEST(SentencePe, FailedLegIsNamed) {
  auto item = toy_items(Condition::Core, 1).front();
  class Failing : public Scorer {
   public:
    explicit Failing(std::string bad_context) : bad_(std::move(bad_context)) {}
    ScoredSequence score(const ScoreRequest& r) override {
      if (r.context == bad_ && r.continuation.find(" to ") == std::string::npos &&
          r.continuation.find(" for ") == std::string::npos) {
        throw BackendUnavailable("down");
      }
      return GammaBoostScorer(0.1).score(r);
    }
    std::string backend_id() const override { return "f"; }

   private:
    std::string bad_;
  } failing(item.prime_do);
  try {
    score_legs(item, "m", failing);
    FAIL() << "expected LegError";
  } catch (const LegError& e) {
    EXPECT_EQ(e.item_id(), item.id);
    EXPECT_EQ(e.leg(), "target_do|prime_do");
    EXPECT_FALSE(e.missing());
  }
}

TEST(TokenPe, DecomposesSentenceEffect) {
  SofteningScorer soft(1.5, 2.0);
  for (const auto& it : toy_items(Condition::OverlapVerb, 25)) {
    auto r = measure_item(it, "s", soft);
    double po = 0, dO = 0;
    for (const auto& [s, v] : r.w_pe_po) po += v;
    for (const auto& [s, v] : r.w_pe_do) dO += v;
    EXPECT_NEAR(po, r.s_pe_po, 1e-9);
    EXPECT_NEAR(dO, r.s_pe_do, 1e-9);
    EXPECT_EQ(r.w_pe_po.size(), 9u);
    EXPECT_EQ(r.w_pe_do.size(), 8u);
    for (Slot s : kPrefixSlots) EXPECT_NEAR(r.w_pe_po.at(s) + r.w_pe_do.at(s), 0.0, 1e-9);
  }
}

TEST(TokenPe, MismatchedTokenizationsAreRejected) {
  auto item = toy_items(Condition::Core, 1).front();
  GammaBoostScorer g(0.5);
  auto legs = score_legs(item, "m", g);
  auto& t = legs.incongruent[0].tokens;
  t[0].text += t[1].text;
  t[0].span.end = t[1].span.end;
  t.erase(t.begin() + 1);
  EXPECT_THROW(token_pe(item, legs), TokenizationMismatch);
}

TEST(SDeltaPe, SlotSelection) {
  auto n3 = with_slots({{Slot::DT1, 0.0}, {Slot::N3, 1.25}}, {{Slot::N3, -0.5}});
  auto [a, b] = s_delta_pe(n3);
  EXPECT_EQ(a, n3.s_pe_po);
  EXPECT_EQ(b, n3.s_pe_do);

  auto dt1 = with_slots({{Slot::DT1, 0.8}, {Slot::N3, 0.0}}, {{Slot::DT1, -0.8}});
  auto [c, d] = s_delta_pe(dt1);
  EXPECT_EQ(c, 0.0);
  EXPECT_EQ(d, 0.0);

  auto mixed = with_slots({{Slot::DT1, 0.3}, {Slot::V, -0.2}, {Slot::N2, 0.7}, {Slot::END, 0.1}},
                          {{Slot::DT1, -0.3}, {Slot::V, 0.2}, {Slot::N3, -0.4}, {Slot::N2, 0.9}});
  auto [e, f] = s_delta_pe(mixed);
  EXPECT_NEAR(e + f, mixed.s_pe_po + mixed.s_pe_do, 1e-12);
}

TEST(Quadrant, SignsAndZeroTieBreak) {
  EXPECT_EQ(classify_quadrant(1.0, 0.5), Quadrant::Balanced);
  EXPECT_EQ(classify_quadrant(-0.2, -0.3), Quadrant::Inverse);
  EXPECT_EQ(classify_quadrant(0.4, 0.0), Quadrant::SkewedPO);
  EXPECT_EQ(classify_quadrant(0.0, 0.4), Quadrant::SkewedDO);
  EXPECT_EQ(classify_quadrant(0.0, 0.0), Quadrant::Inverse);
  EXPECT_EQ(classify_quadrant(-1.0, 2.0), Quadrant::SkewedDO);
}

TEST(Summary, PerfectAnticorrelation) {
  std::vector<PEResult> rs;
  for (double x : {-2.0, -0.5, 0.25, 1.0, 3.0}) {
    PEResult r;
    r.s_pe_po = x;
    r.s_pe_do = -x;
    rs.push_back(r);
  }
  auto s = summarize(rs, false);
  ASSERT_TRUE(s.pearson_r.has_value());
  EXPECT_NEAR(*s.pearson_r, -1.0, 1e-15);
  EXPECT_NEAR(*s.spearman_rho, -1.0, 1e-15);
  double total = 0;
  for (auto [q, share] : s.quadrant_shares) total += share;
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Summary, AllBalancedAndDegenerateVariance) {
  std::vector<PEResult> rs(4);
  for (auto& r : rs) {
    r.s_pe_po = 0.7;
    r.s_pe_do = 0.7;
  }
  auto s = summarize(rs, false);
  EXPECT_EQ(s.quadrant_shares.at(Quadrant::Balanced), 1.0);
  EXPECT_FALSE(s.pearson_r.has_value());
  EXPECT_FALSE(s.spearman_rho.has_value());
}

TEST(Summary, SpearmanMatchesBruteForceOnHandPairs) {
  const std::vector<double> po{0.3, -1.2, 0.3, 2.5, 0.0};
  const std::vector<double> dO{-0.4, 0.9, -0.1, -0.4, 1.7};
  std::vector<PEResult> rs;
  for (std::size_t i = 0; i < po.size(); ++i) {
    PEResult r;
    r.s_pe_po = po[i];
    r.s_pe_do = dO[i];
    rs.push_back(r);
  }
  auto s = summarize(rs, false);
  EXPECT_NEAR(*s.spearman_rho, primelens::testing::brute_spearman(po, dO), 1e-12);
  EXPECT_NEAR(*s.pearson_r, primelens::testing::brute_pearson(po, dO), 1e-12);
  EXPECT_EQ(s.quadrant_shares.at(Quadrant::SkewedPO), 0.6);
  EXPECT_EQ(s.quadrant_shares.at(Quadrant::SkewedDO), 0.4);
}

TEST(Summary, DeltaSoftensTheCorrelation) {
  SofteningScorer soft(4.0, 1.0);
  std::vector<PEResult> rs;
  for (const auto& it : toy_items(Condition::SimNounsVerbs, 150)) rs.push_back(measure_item(it, "s", soft));
  auto full = summarize(rs, false);
  auto delta = summarize(rs, true);
  ASSERT_TRUE(full.pearson_r && delta.pearson_r);
  EXPECT_LT(*full.pearson_r, *delta.pearson_r);
}

TEST(Invariants, ReportFlagsBrokenResults) {
  auto good = with_slots({{Slot::DT1, 0.3}, {Slot::N2, 0.5}}, {{Slot::DT1, -0.3}, {Slot::N3, 0.1}});
  std::tie(good.s_delta_pe_po, good.s_delta_pe_do) = s_delta_pe(good);
  std::vector<PEResult> rs{good};
  EXPECT_TRUE(check_invariants(rs).passed(1e-9));
  rs[0].w_pe_do[Slot::DT1] = -0.2;
  auto rep = check_invariants(rs);
  EXPECT_NEAR(rep.max_antisymmetry_error, 0.1, 1e-12);
  EXPECT_NEAR(rep.max_decomposition_error, 0.1, 1e-12);
  EXPECT_FALSE(rep.passed(1e-9));
}

TEST(Serialization, PeResultRoundTrip) {
  SofteningScorer soft(1.0, 1.0);
  auto it = toy_items(Condition::OverlapDet, 1).front();
  auto r = measure_item(it, "s", soft);
  auto back = pe_result_from_json(pe_result_to_json(r));
  EXPECT_EQ(back.item_id, r.item_id);
  EXPECT_EQ(back.s_pe_po, r.s_pe_po);
  EXPECT_EQ(back.s_delta_pe_do, r.s_delta_pe_do);
  EXPECT_EQ(back.w_pe_do, r.w_pe_do);
  EXPECT_EQ(back.quadrant, r.quadrant);
  EXPECT_EQ(back.alignment_po, r.alignment_po);
}

TEST(Serialization, CsvExports) {
  std::vector<PEResult> rs;
  SofteningScorer soft(1.0, 1.0);
  for (const auto& it : toy_items(Condition::Core, 3)) rs.push_back(measure_item(it, "s", soft));
  std::ostringstream space;
  write_pe_space_csv(space, rs);
  auto lines = text::split(space.str(), '\n');
  EXPECT_EQ(lines[0], "item_id,model_id,condition,s_pe_po,s_pe_do,quadrant");
  EXPECT_EQ(lines.size(), 5u);

  auto bars = slot_bars(rs);
  EXPECT_EQ(bars.size(), 17u);
  for (const auto& b : bars) {
    EXPECT_EQ(b.n, 3u);
    EXPECT_LE(b.ci_low, b.mean);
    EXPECT_GE(b.ci_high, b.mean);
  }
  std::ostringstream bar_csv;
  write_slot_bars_csv(bar_csv, bars);
  EXPECT_TRUE(bar_csv.str().starts_with("model_id,slot,structure,mean_w_pe,ci_low,ci_high\n"));
}
