#pragma once

// Dative prime/target stimulus generation.
//
// An item pairs a prime sentence with a target sentence, each rendered in
// both the prepositional-object (PO) and double-object (DO) alternation.
// Conditions control which words the prime and target may share and how
// semantically related their content words must be. The generator samples
// candidates that satisfy a condition by construction and then keeps only
// those accepted by check_condition, which works from the rendered strings
// alone.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "primelens/structure.hpp"

namespace primelens {

struct VerbEntry {
  std::string lemma;
  std::string preposition;

  friend bool operator==(const VerbEntry&, const VerbEntry&) = default;
};

struct Lexicon {
  std::vector<std::string> agents;      // animate
  std::vector<std::string> recipients;  // animate
  std::vector<std::string> themes;      // inanimate
  std::vector<VerbEntry> verbs;
  std::vector<std::string> determiners;

  // Throws InvariantError naming the offending lemma.
  void validate() const;
};

Lexicon parse_lexicon(std::istream& in, const std::string& name = "<lexicon>");
Lexicon load_lexicon(const std::filesystem::path& path);

// Free-association strengths keyed by ordered (cue, target) pair.
class AssociationNorms {
 public:
  void set(const std::string& cue, const std::string& target, double strength);
  // 0 for pairs that were never listed.
  double strength(std::string_view cue, std::string_view target) const;
  // Strongest of the two cue/target directions.
  double association(std::string_view a, std::string_view b) const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::pair<std::string, std::string>, double, std::less<>> entries_;
};

AssociationNorms parse_norms(std::istream& in, const std::string& name = "<norms>");
AssociationNorms load_norms(const std::filesystem::path& path);

double cosine(std::span<const double> a, std::span<const double> b);

class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dimension) : dimension_(dimension) {}

  // Throws InvariantError on a dimension mismatch or a zero vector.
  void add(const std::string& key, std::vector<double> vector);
  const std::vector<double>* find(std::string_view key) const;
  // nullopt when either key has no vector.
  std::optional<double> cosine(std::string_view a, std::string_view b) const;

  std::size_t dimension() const { return dimension_; }
  std::size_t size() const { return vectors_.size(); }

 private:
  std::size_t dimension_ = 0;
  std::unordered_map<std::string, std::vector<double>> vectors_;
};

// One key per line followed by tab-separated components. Keys may contain
// spaces, which lets the same format carry sentence embeddings.
EmbeddingTable parse_embeddings(std::istream& in, const std::string& name = "<embeddings>");
EmbeddingTable load_embeddings(const std::filesystem::path& path);

enum class Condition {
  Core,
  SimNouns,
  SimVerbs,
  SimNounsVerbs,
  OverlapNouns,
  OverlapDetPrep,
  OverlapVerb,
  OverlapDet,
  OverlapPrep,
};

inline constexpr std::array<Condition, 9> kAllConditions = {
    Condition::Core,         Condition::SimNouns,       Condition::SimVerbs,
    Condition::SimNounsVerbs, Condition::OverlapNouns,  Condition::OverlapDetPrep,
    Condition::OverlapVerb,  Condition::OverlapDet,     Condition::OverlapPrep};

std::string_view to_string(Condition c);
Condition condition_from_string(std::string_view s);

// Slots whose words must be identical across prime and target.
std::vector<Slot> overlap_slots(Condition c);
// Slots whose prime/target words must be semantically similar.
std::vector<Slot> similarity_slots(Condition c);

struct PrimeTargetItem {
  std::string id;
  Condition condition = Condition::Core;
  SlotWords prime_words;
  SlotWords target_words;
  std::string prime_po;
  std::string prime_do;
  std::string target_po;
  std::string target_do;

  const std::string& prime(Structure s) const { return s == Structure::PO ? prime_po : prime_do; }
  const std::string& target(Structure s) const { return s == Structure::PO ? target_po : target_do; }

  friend bool operator==(const PrimeTargetItem&, const PrimeTargetItem&) = default;
};

// "The girl gave the ball to the boy ." Throws InvalidArgument when a slot
// of the structure's template has no word.
std::string render(const SlotWords& words, Structure structure);

// Inverse of render: splits a rendering on single spaces and assigns words
// to template slots. The DT1 word is returned lower-cased. nullopt when the
// word count does not fit the template.
std::optional<SlotWords> parse_rendering(std::string_view sentence, Structure structure);

PrimeTargetItem make_item(std::string id, Condition condition, SlotWords prime,
                          SlotWords target);

struct GeneratorOptions {
  double cos_threshold = 0.4;
  std::size_t max_attempts = 10000;
};

std::vector<PrimeTargetItem> generate(Condition condition, std::size_t n_items,
                                      const Lexicon& lexicon,
                                      const AssociationNorms& norms,
                                      const EmbeddingTable& embeddings,
                                      std::uint64_t seed,
                                      const GeneratorOptions& options = {});

struct ConditionCheck {
  bool passed = true;
  std::vector<std::string> violations;
};

ConditionCheck check_condition(const PrimeTargetItem& item,
                               const AssociationNorms& norms,
                               const EmbeddingTable& embeddings,
                               double cos_threshold = 0.4);

std::string item_to_json(const PrimeTargetItem& item);
PrimeTargetItem item_from_json(std::string_view line);
void write_corpus(std::ostream& out, std::span<const PrimeTargetItem> items);
std::vector<PrimeTargetItem> read_corpus(const std::filesystem::path& path);

}  // namespace primelens
