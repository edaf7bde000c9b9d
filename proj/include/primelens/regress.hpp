#pragma once

// Factor table and mixed-model fits explaining the post-prefix priming
// effect of each target structure by lexical, semantic and frequency
// properties of the item, with one random intercept per model.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "primelens/corpus.hpp"
#include "primelens/lmm.hpp"
#include "primelens/metrics.hpp"
#include "primelens/scoring.hpp"

namespace primelens {

inline constexpr std::size_t kFactorCount = 17;

// Column names as written to the rows CSV, in table order.
extern const std::array<std::string_view, kFactorCount> kFactorNames;
// Row labels of the fitted-coefficient table, parallel to kFactorNames.
extern const std::array<std::string_view, kFactorCount> kFactorLabels;

std::string_view factor_label(std::string_view name);

struct RegressionRow {
  std::string item_id;
  std::string model_id;
  std::string condition;
  double response_po = 0.0;
  double response_do = 0.0;
  double sim_n1 = 0.0;
  double sim_n2 = 0.0;
  double sim_n3 = 0.0;
  double sim_v = 0.0;
  double sim_s = 0.0;  // NaN when no sentence vectors were supplied
  double overlap_n1 = 0.0;
  double overlap_n2 = 0.0;
  double overlap_n3 = 0.0;
  double overlap_det = 0.0;
  double overlap_verb = 0.0;
  double overlap_prep = 0.0;
  double surp_prime_po = 0.0;
  double surp_prime_do = 0.0;
  double surp_target_po = 0.0;
  double surp_target_do = 0.0;
  double pref_vp = 0.0;
  double pref_vt = 0.0;

  std::array<double, kFactorCount> factors() const;
  void set_factor(std::size_t index, double value);
};

// How the two target surprisals are obtained. Prime surprisals are always
// unconditioned.
enum class SurprisalMode {
  Unconditioned,
  IncongruentPrime,  // target scored after the prime of the other structure
};

std::string_view to_string(SurprisalMode m);
SurprisalMode surprisal_mode_from_string(std::string_view s);

struct Surprisals {
  double prime_po = 0.0;
  double prime_do = 0.0;
  double target_po = 0.0;
  double target_do = 0.0;
};

// prime_po, prime_do, target_po, target_do.
std::array<ScoreRequest, 4> surprisal_requests(const PrimeTargetItem& item, const std::string& model_id,
                                               SurprisalMode mode);
Surprisals score_surprisals(const PrimeTargetItem& item, const std::string& model_id, Scorer& scorer,
                            SurprisalMode mode);

// model_id -> verb -> PO preference.
using PreferenceTable = std::map<std::string, std::map<std::string, double>>;
// (item_id, model_id) -> surprisals.
using SurprisalTable = std::map<std::pair<std::string, std::string>, Surprisals>;

struct RowRejection {
  std::string item_id;
  std::string model_id;
  std::string reason;
};

struct RowBuild {
  std::vector<RegressionRow> rows;
  std::vector<RowRejection> rejections;
};

// One row per PE result whose item and factor resources all resolve.
// Rows follow the order of `results`. A null `sentence_vectors` leaves
// sim_s undefined; sentence similarity is taken between the PO prime and
// the PO target for both responses.
RowBuild build_rows(std::span<const PrimeTargetItem> items, std::span<const PEResult> results,
                    const EmbeddingTable& embeddings, const EmbeddingTable* sentence_vectors,
                    const PreferenceTable& prefs, const SurprisalTable& surprisals);

// Deterministic draw of n_core Core items and n_other non-Core items (all
// of a class when fewer exist), keeping every model's row for each drawn
// item. Rows keep their input order.
std::vector<RegressionRow> sample_rows(std::span<const RegressionRow> rows, std::size_t n_core,
                                       std::size_t n_other, std::uint64_t seed);

struct ColumnScaling {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
};

struct DroppedColumn {
  std::string name;
  std::string reason;
};

struct ScalingMetadata {
  std::string variance_convention = "sample (n-1)";
  std::vector<ColumnScaling> columns;
  std::vector<DroppedColumn> dropped;

  // Inverse of the standardization for a retained column.
  std::vector<double> restore(std::string_view name, std::span<const double> standardized) const;
};

struct DesignTable {
  std::vector<std::string> names;  // retained factor names
  std::vector<std::vector<double>> columns;
  std::vector<double> response_po;
  std::vector<double> response_do;
  std::vector<std::string> groups;
  std::vector<std::string> item_ids;

  std::size_t rows() const { return groups.size(); }
};

// Centres every factor and scales it to unit sample variance. Constant
// columns and columns with undefined values are dropped and recorded.
// Throws InvalidArgument for fewer than two rows.
std::pair<DesignTable, ScalingMetadata> standardize(std::span<const RegressionRow> rows);

// Coefficients are named by factor label ("sim(n1)", ...).
LmmFit fit_lmm(const DesignTable& table, Structure response, const LmmOptions& options = {});

// Fixed-width coefficient table with a trailing "Group Var" row.
std::string report_fit(const LmmFit& fit);

std::string fit_to_json(const LmmFit& fit);
LmmFit fit_from_json(std::string_view text);
std::string scaling_to_json(const ScalingMetadata& meta);
void write_rows_csv(std::ostream& out, std::span<const RegressionRow> rows);
std::vector<RegressionRow> read_rows_csv(std::istream& in, const std::string& name = "<rows>");

}  // namespace primelens
