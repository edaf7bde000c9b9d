#pragma once

// Priming-effect measures.
//
// For a target in structure x, the congruent leg scores the target after
// the prime in x and the incongruent leg after the prime in the other
// structure. The sentence-level effect is the difference of the two total
// logprobs; the per-slot effect is the same difference restricted to one
// word slot, so the slot effects sum to the sentence effect. The divergence
// variant keeps only the slots after the shared [DT1, N1, V, DT2] prefix.

#include <array>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "primelens/align.hpp"
#include "primelens/corpus.hpp"
#include "primelens/error.hpp"
#include "primelens/scoring.hpp"

namespace primelens {

enum class Quadrant { Balanced, SkewedPO, SkewedDO, Inverse };

inline constexpr std::array<Quadrant, 4> kAllQuadrants = {Quadrant::Balanced, Quadrant::SkewedPO,
                                                         Quadrant::SkewedDO, Quadrant::Inverse};

std::string_view to_string(Quadrant q);

using SlotValues = std::map<Slot, double>;

// A scoring leg failed; names the item and which of the four legs.
class LegError : public Error {
 public:
  LegError(std::string item_id, std::string leg, const std::string& cause, bool missing)
      : Error("item " + item_id + " leg " + leg + ": " + cause),
        item_id_(std::move(item_id)),
        leg_(std::move(leg)),
        missing_(missing) {}
  const std::string& item_id() const { return item_id_; }
  const std::string& leg() const { return leg_; }
  // True when the leg is absent from a cache-only backend.
  bool missing() const { return missing_; }

 private:
  std::string item_id_;
  std::string leg_;
  bool missing_;
};

// "target_po|prime_do" and so on.
std::string leg_name(Structure target, Structure prime);

// Score requests for the four legs in a fixed order: (PO|PO), (PO|DO),
// (DO|DO), (DO|PO).
std::array<ScoreRequest, 4> leg_requests(const PrimeTargetItem& item, const std::string& model_id);

struct ItemLegs {
  // Indexed by target structure.
  std::array<ScoredSequence, 2> congruent;
  std::array<ScoredSequence, 2> incongruent;
};

// Exactly four scoring calls. Errors are rethrown as LegError.
ItemLegs score_legs(const PrimeTargetItem& item, const std::string& model_id, Scorer& scorer);

struct PEResult {
  std::string item_id;
  std::string model_id;
  std::string condition;
  double s_pe_po = 0.0;
  double s_pe_do = 0.0;
  double s_delta_pe_po = 0.0;
  double s_delta_pe_do = 0.0;
  SlotValues w_pe_po;
  SlotValues w_pe_do;
  Quadrant quadrant = Quadrant::Inverse;
  SlotAlignment alignment_po;
  SlotAlignment alignment_do;

  double s_pe(Structure s) const { return s == Structure::PO ? s_pe_po : s_pe_do; }
  double s_delta_pe(Structure s) const { return s == Structure::PO ? s_delta_pe_po : s_delta_pe_do; }
  const SlotValues& w_pe(Structure s) const { return s == Structure::PO ? w_pe_po : w_pe_do; }
};

std::pair<double, double> sentence_pe(const ItemLegs& legs);
std::pair<double, double> sentence_pe(const PrimeTargetItem& item, const std::string& model_id,
                                      Scorer& scorer);

// Throws TokenizationMismatch when the congruent and incongruent legs of a
// target were tokenized differently.
std::pair<SlotValues, SlotValues> token_pe(const PrimeTargetItem& item, const ItemLegs& legs);
std::pair<SlotValues, SlotValues> token_pe(const PrimeTargetItem& item, const std::string& model_id,
                                           Scorer& scorer);

// Sums the slot effects after the shared prefix.
std::pair<double, double> s_delta_pe(const PEResult& result);

// Balanced when both are positive, Inverse when neither is, SkewedPO or
// SkewedDO when only one is. Zero counts as not primed.
Quadrant classify_quadrant(double s_pe_po, double s_pe_do);

PEResult measure_item(const PrimeTargetItem& item, const std::string& model_id, const ItemLegs& legs);
PEResult measure_item(const PrimeTargetItem& item, const std::string& model_id, Scorer& scorer);

struct PESummary {
  std::string model_id;
  std::string condition;
  bool use_delta = false;
  double mean_s_pe_po = 0.0;
  double mean_s_pe_do = 0.0;
  std::optional<double> pearson_r;
  std::optional<double> spearman_rho;
  std::map<Quadrant, double> quadrant_shares;
  std::size_t n_items = 0;
};

PESummary summarize(std::span<const PEResult> results, bool use_delta);

struct InvariantReport {
  double max_decomposition_error = 0.0;
  double max_antisymmetry_error = 0.0;
  double max_delta_error = 0.0;
  bool passed(double tolerance) const {
    return max_decomposition_error < tolerance && max_antisymmetry_error < tolerance &&
           max_delta_error < tolerance;
  }
};

InvariantReport check_invariants(std::span<const PEResult> results);

std::string pe_result_to_json(const PEResult& r);
PEResult pe_result_from_json(std::string_view line);
std::string summary_to_json(const PESummary& s);

// Scatter data for PE space.
void write_pe_space_csv(std::ostream& out, std::span<const PEResult> results, bool with_header = true);

struct SlotBar {
  std::string model_id;
  Slot slot;
  Structure structure;
  double mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n = 0;
};

// Mean per-slot effect with a normal-approximation 95% interval.
std::vector<SlotBar> slot_bars(std::span<const PEResult> results);
void write_slot_bars_csv(std::ostream& out, std::span<const SlotBar> bars, bool with_header = true);

}  // namespace primelens
