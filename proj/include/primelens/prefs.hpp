#pragma once

// Per-verb structural preference: mean over a verb's frames of
// log P(PO rendering) - log P(DO rendering), both scored without context.
// Positive values lean towards PO.

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "primelens/corpus.hpp"
#include "primelens/scoring.hpp"

namespace primelens {

struct VerbPreference {
  std::string model_id;
  std::string verb;
  double po_pref = 0.0;  // nats
  std::size_t n_frames = 0;
};

// Scores the PO and DO prime renderings of every frame. Throws
// InvalidArgument for an empty frame set or a frame whose prime verb is
// not `verb`.
VerbPreference po_pref(const std::string& verb, std::span<const PrimeTargetItem> frames,
                       const std::string& model_id, Scorer& scorer);

// One preference per distinct prime verb, sorted by verb.
std::vector<VerbPreference> verb_preferences(std::span<const PrimeTargetItem> frames,
                                             const std::string& model_id, Scorer& scorer);

struct PreferenceOrder {
  std::string source_id;
  std::vector<std::string> ranked_verbs;  // most PO-preferring first
  // Parallel to ranked_verbs; larger means more PO-preferring. Equal keys
  // are ties.
  std::vector<double> keys;
};

PreferenceOrder order_from_preferences(const std::string& source_id,
                                       std::span<const VerbPreference> prefs);

// "verb,rank" rows, rank 1 being the most PO-preferring verb. Tied ranks
// are allowed.
PreferenceOrder load_human_order(const std::filesystem::path& path,
                                 const std::string& source_id = "human");
PreferenceOrder parse_human_order(std::istream& in, const std::string& source_id = "human");

// Spearman correlation with average ranks for ties. Throws InvalidArgument
// listing the symmetric difference when the verb sets differ.
double preference_correlation(const PreferenceOrder& a, const PreferenceOrder& b);

void write_preferences_csv(std::ostream& out, std::span<const VerbPreference> prefs,
                           bool with_header = true);

// {"a|b": rho, ...} over every ordered pair of sources, null where the
// correlation is undefined.
std::string correlation_matrix_json(std::span<const PreferenceOrder> orders);

}  // namespace primelens
