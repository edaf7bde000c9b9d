#include "primelens/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "primelens/error.hpp"
#include "primelens/random.hpp"
#include "primelens/text.hpp"

namespace primelens {

// ---------------------------------------------------------------------------
// Lexicon

namespace {

void require_unique(const std::vector<std::string>& words, std::string_view section) {
  std::set<std::string> seen;
  for (const auto& w : words) {
    if (!seen.insert(w).second) {
      throw InvariantError("duplicate lemma '" + w + "' in section #" + std::string(section));
    }
  }
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  return in;
}

}  // namespace

void Lexicon::validate() const {
  auto require_nonempty = [](bool empty, std::string_view section) {
    if (empty) throw InvariantError("lexicon section #" + std::string(section) + " is empty");
  };
  require_nonempty(agents.empty(), "agents");
  require_nonempty(recipients.empty(), "recipients");
  require_nonempty(themes.empty(), "themes");
  require_nonempty(verbs.empty(), "verbs");
  require_nonempty(determiners.empty(), "determiners");

  require_unique(agents, "agents");
  require_unique(recipients, "recipients");
  require_unique(themes, "themes");
  require_unique(determiners, "determiners");
  std::vector<std::string> lemmas;
  for (const auto& v : verbs) {
    if (v.preposition.empty()) throw InvariantError("verb '" + v.lemma + "' has no preposition");
    lemmas.push_back(v.lemma);
  }
  require_unique(lemmas, "verbs");

  std::set<std::string> animate(agents.begin(), agents.end());
  animate.insert(recipients.begin(), recipients.end());
  for (const auto& t : themes) {
    if (animate.count(t)) {
      throw InvariantError("animacy clash: '" + t + "' is listed as animate and inanimate");
    }
  }
}

Lexicon parse_lexicon(std::istream& in, const std::string& name) {
  Lexicon lex;
  enum class Section { None, Agents, Recipients, Themes, Verbs, Determiners };
  Section section = Section::None;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    auto line = text::trim(raw);
    if (line.empty() || line.starts_with("#!")) continue;
    if (line.front() == '#') {
      auto header = line.substr(1);
      if (header == "agents") section = Section::Agents;
      else if (header == "recipients") section = Section::Recipients;
      else if (header == "themes") section = Section::Themes;
      else if (header == "verbs") section = Section::Verbs;
      else if (header == "determiners") section = Section::Determiners;
      else throw ParseError(name, lineno, "unknown section '" + std::string(line) + "'");
      continue;
    }
    auto fields = text::split(line, '\t');
    switch (section) {
      case Section::None:
        throw ParseError(name, lineno, "entry before any section header");
      case Section::Verbs: {
        if (fields.size() != 2 || text::trim(fields[0]).empty() || text::trim(fields[1]).empty()) {
          throw ParseError(name, lineno, "verb rows must be 'lemma<TAB>preposition'");
        }
        lex.verbs.push_back({std::string(text::trim(fields[0])), std::string(text::trim(fields[1]))});
        break;
      }
      default: {
        if (fields.size() != 1 || line.find(' ') != std::string_view::npos) {
          throw ParseError(name, lineno, "expected a single lemma");
        }
        auto& target = section == Section::Agents       ? lex.agents
                       : section == Section::Recipients ? lex.recipients
                       : section == Section::Themes     ? lex.themes
                                                        : lex.determiners;
        target.emplace_back(line);
      }
    }
  }
  lex.validate();
  return lex;
}

Lexicon load_lexicon(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_lexicon(in, path.string());
}

// ---------------------------------------------------------------------------
// Association norms

void AssociationNorms::set(const std::string& cue, const std::string& target, double strength) {
  if (!std::isfinite(strength) || strength < 0.0) {
    throw InvariantError("association strength for (" + cue + ", " + target +
                         ") must be finite and non-negative");
  }
  entries_[{cue, target}] = strength;
}

double AssociationNorms::strength(std::string_view cue, std::string_view target) const {
  auto it = entries_.find(std::pair<std::string, std::string>(cue, target));
  return it == entries_.end() ? 0.0 : it->second;
}

double AssociationNorms::association(std::string_view a, std::string_view b) const {
  return std::max(strength(a, b), strength(b, a));
}

AssociationNorms parse_norms(std::istream& in, const std::string& name) {
  AssociationNorms norms;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    auto line = text::trim(raw);
    if (line.empty()) continue;
    if (lineno == 1 && line == "cue,target,strength") continue;
    auto fields = text::split(line, ',');
    if (fields.size() != 3) throw ParseError(name, lineno, "expected 'cue,target,strength'");
    double s = 0.0;
    try {
      s = text::parse_double(fields[2]);
    } catch (const InvalidArgument& e) {
      throw ParseError(name, lineno, e.what());
    }
    if (s < 0.0 || s > 1.0) throw ParseError(name, lineno, "strength outside [0,1]");
    norms.set(std::string(text::trim(fields[0])), std::string(text::trim(fields[1])), s);
  }
  return norms;
}

AssociationNorms load_norms(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_norms(in, path.string());
}

// ---------------------------------------------------------------------------
// Embeddings

double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

void EmbeddingTable::add(const std::string& key, std::vector<double> vector) {
  if (dimension_ == 0) dimension_ = vector.size();
  if (vector.size() != dimension_) {
    throw InvariantError("embedding for '" + key + "' has dimension " +
                         std::to_string(vector.size()) + ", expected " +
                         std::to_string(dimension_));
  }
  if (std::all_of(vector.begin(), vector.end(), [](double x) { return x == 0.0; })) {
    throw InvariantError("embedding for '" + key + "' is the zero vector");
  }
  vectors_[key] = std::move(vector);
}

const std::vector<double>* EmbeddingTable::find(std::string_view key) const {
  auto it = vectors_.find(std::string(key));
  return it == vectors_.end() ? nullptr : &it->second;
}

std::optional<double> EmbeddingTable::cosine(std::string_view a, std::string_view b) const {
  const auto* va = find(a);
  const auto* vb = find(b);
  if (!va || !vb) return std::nullopt;
  return primelens::cosine(*va, *vb);
}

EmbeddingTable parse_embeddings(std::istream& in, const std::string& name) {
  EmbeddingTable table;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    if (text::trim(raw).empty()) continue;
    auto fields = text::split(raw, '\t');
    if (fields.size() < 2) throw ParseError(name, lineno, "expected 'key<TAB>v1<TAB>...'");
    std::vector<double> v;
    v.reserve(fields.size() - 1);
    try {
      for (std::size_t i = 1; i < fields.size(); ++i) v.push_back(text::parse_double(fields[i]));
      table.add(fields[0], std::move(v));
    } catch (const Error& e) {
      throw ParseError(name, lineno, e.what());
    }
  }
  return table;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_embeddings(in, path.string());
}

// ---------------------------------------------------------------------------
// Conditions and rendering

namespace {
constexpr std::array<std::string_view, 9> kConditionNames = {
    "Core",         "SimNouns",       "SimVerbs",    "SimNounsVerbs", "OverlapNouns",
    "OverlapDetPrep", "OverlapVerb", "OverlapDet", "OverlapPrep"};

bool is_similarity_condition(Condition c) {
  return c == Condition::SimNouns || c == Condition::SimVerbs || c == Condition::SimNounsVerbs;
}
}  // namespace

std::string_view to_string(Condition c) { return kConditionNames[static_cast<std::size_t>(c)]; }

Condition condition_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kConditionNames.size(); ++i) {
    if (kConditionNames[i] == s) return static_cast<Condition>(i);
  }
  throw InvalidArgument("unknown condition '" + std::string(s) + "'");
}

std::vector<Slot> overlap_slots(Condition c) {
  switch (c) {
    case Condition::OverlapNouns: return {Slot::N1, Slot::N2, Slot::N3};
    case Condition::OverlapDetPrep: return {Slot::DT1, Slot::DT2, Slot::DT3, Slot::P};
    case Condition::OverlapVerb: return {Slot::V, Slot::P};
    case Condition::OverlapDet: return {Slot::DT1, Slot::DT2, Slot::DT3};
    case Condition::OverlapPrep: return {Slot::P};
    default: return {};
  }
}

std::vector<Slot> similarity_slots(Condition c) {
  switch (c) {
    case Condition::SimNouns: return {Slot::N1, Slot::N2, Slot::N3};
    case Condition::SimVerbs: return {Slot::V};
    case Condition::SimNounsVerbs: return {Slot::N1, Slot::N2, Slot::N3, Slot::V};
    default: return {};
  }
}

std::string render(const SlotWords& words, Structure structure) {
  std::string out;
  for (Slot slot : slot_template(structure)) {
    std::string word;
    if (slot == Slot::END) {
      word = ".";
    } else {
      auto it = words.find(slot);
      if (it == words.end() || it->second.empty()) {
        throw InvalidArgument("no word for slot " + std::string(to_string(slot)) + " in " +
                              std::string(to_string(structure)) + " rendering");
      }
      word = it->second;
      if (slot == Slot::DT1) {
        word[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(word[0])));
      }
    }
    if (!out.empty()) out.push_back(' ');
    out += word;
  }
  return out;
}

std::optional<SlotWords> parse_rendering(std::string_view sentence, Structure structure) {
  auto words = text::split(sentence, ' ');
  auto tmpl = slot_template(structure);
  if (words.size() != tmpl.size()) return std::nullopt;
  SlotWords out;
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    if (words[i].empty()) return std::nullopt;
    out[tmpl[i]] = tmpl[i] == Slot::DT1 ? text::lower(words[i]) : words[i];
  }
  return out;
}

PrimeTargetItem make_item(std::string id, Condition condition, SlotWords prime, SlotWords target) {
  PrimeTargetItem item;
  item.id = std::move(id);
  item.condition = condition;
  prime.erase(Slot::END);
  target.erase(Slot::END);
  item.prime_po = render(prime, Structure::PO);
  item.prime_do = render(prime, Structure::DO);
  item.target_po = render(target, Structure::PO);
  item.target_do = render(target, Structure::DO);
  item.prime_words = std::move(prime);
  item.target_words = std::move(target);
  return item;
}

// ---------------------------------------------------------------------------
// Checker

namespace {

// Words of both renderings of one sentence, recovered slot by slot. Adds a
// violation if the PO and DO renderings disagree or the stored word map
// does not match what was rendered.
std::optional<SlotWords> recover_words(std::string_view which, const std::string& po,
                                       const std::string& dO, const SlotWords& stored,
                                       std::vector<std::string>& violations) {
  for (const auto* r : {&po, &dO}) {
    if (!r->ends_with(" .")) violations.push_back(std::string(which) + " rendering does not end with ' .'");
  }
  auto from_po = parse_rendering(po, Structure::PO);
  auto from_do = parse_rendering(dO, Structure::DO);
  if (!from_po || !from_do) {
    violations.push_back(std::string(which) + " rendering does not fit its template");
    return std::nullopt;
  }
  for (Slot s : kAllSlots) {
    if (s == Slot::P) continue;  // absent from DO
    if ((*from_po)[s] != (*from_do)[s]) {
      violations.push_back(std::string(which) + " PO and DO renderings disagree at " +
                           std::string(to_string(s)));
    }
  }
  for (Slot s : kAllSlots) {
    if (s == Slot::END) continue;
    auto it = stored.find(s);
    if (it == stored.end() || text::lower(it->second) != text::lower((*from_po)[s])) {
      violations.push_back(std::string(which) + " word map disagrees with rendering at " +
                           std::string(to_string(s)));
    }
  }
  from_po->erase(Slot::END);
  for (auto& [slot, word] : *from_po) word = text::lower(word);
  return from_po;
}

std::set<std::string> word_set(const SlotWords& words, bool content_only) {
  std::set<std::string> out;
  for (const auto& [slot, word] : words) {
    if (content_only && !is_content_slot(slot)) continue;
    out.insert(word);
  }
  return out;
}

std::string single_quoted(std::string_view w) { return "'" + std::string(w) + "'"; }

std::string fmt_double(double x) {
  std::ostringstream os;
  os.precision(4);
  os << x;
  return os.str();
}

}  // namespace

ConditionCheck check_condition(const PrimeTargetItem& item, const AssociationNorms& norms,
                               const EmbeddingTable& embeddings, double cos_threshold) {
  ConditionCheck result;
  auto& v = result.violations;
  auto prime = recover_words("prime", item.prime_po, item.prime_do, item.prime_words, v);
  auto target = recover_words("target", item.target_po, item.target_do, item.target_words, v);
  if (!prime || !target) {
    result.passed = false;
    return result;
  }

  const Condition c = item.condition;
  const auto designated = overlap_slots(c);
  auto is_designated = [&](Slot s) {
    return std::find(designated.begin(), designated.end(), s) != designated.end();
  };

  // Lexical constraints.
  if (is_similarity_condition(c)) {
    auto prime_content = word_set(*prime, true);
    for (const auto& [slot, word] : *target) {
      if (is_content_slot(slot) && prime_content.count(word)) {
        v.push_back("lexical overlap at " + std::string(to_string(slot)) + " (" + single_quoted(word) + ")");
      }
    }
  } else {
    auto prime_all = word_set(*prime, false);
    auto target_all = word_set(*target, false);
    for (Slot s : designated) {
      if ((*prime)[s] != (*target)[s]) {
        v.push_back("missing designated overlap at " + std::string(to_string(s)));
      }
    }
    for (const auto& [slot, word] : *target) {
      if (!is_designated(slot) && prime_all.count(word)) {
        v.push_back("lexical overlap at " + std::string(to_string(slot)) + " (" + single_quoted(word) + ")");
      }
    }
    for (const auto& [slot, word] : *prime) {
      if (!is_designated(slot) && target_all.count(word)) {
        v.push_back("lexical overlap at prime " + std::string(to_string(slot)) + " (" +
                    single_quoted(word) + ")");
      }
    }
  }

  // Semantic constraints.
  if (c == Condition::Core) {
    for (const auto& [ps, pw] : *prime) {
      if (!is_content_slot(ps)) continue;
      for (const auto& [ts, tw] : *target) {
        if (!is_content_slot(ts)) continue;
        const std::string pair = "prime " + std::string(to_string(ps)) + " " + single_quoted(pw) +
                                 " / target " + std::string(to_string(ts)) + " " + single_quoted(tw);
        if (norms.association(pw, tw) > 0.0) v.push_back("association between " + pair);
        auto cos = embeddings.cosine(pw, tw);
        if (!cos) {
          v.push_back("unembedded word in " + pair);
        } else if (*cos >= cos_threshold) {
          v.push_back("similarity " + fmt_double(*cos) + " between " + pair);
        }
      }
    }
  }
  for (Slot s : similarity_slots(c)) {
    const auto& pw = (*prime)[s];
    const auto& tw = (*target)[s];
    if (norms.association(pw, tw) > 0.0) continue;
    auto cos = embeddings.cosine(pw, tw);
    if (!cos) {
      v.push_back("unembedded word at " + std::string(to_string(s)) + " (" + single_quoted(pw) + ", " +
                  single_quoted(tw) + ")");
    } else if (*cos < cos_threshold) {
      v.push_back("no similarity at " + std::string(to_string(s)) + " (cos " + fmt_double(*cos) + ")");
    }
  }

  result.passed = v.empty();
  return result;
}

// ---------------------------------------------------------------------------
// Generator

namespace {

template <typename T>
const T* pick(std::mt19937_64& rng, const std::vector<const T*>& pool) {
  if (pool.empty()) return nullptr;
  return pool[uniform_index(rng, pool.size())];
}

template <typename T>
std::vector<const T*> all_of_pool(const std::vector<T>& v) {
  std::vector<const T*> out;
  for (const auto& x : v) out.push_back(&x);
  return out;
}

class Generator {
 public:
  Generator(Condition c, const Lexicon& lex, const AssociationNorms& norms,
            const EmbeddingTable& emb, const GeneratorOptions& opts)
      : c_(c), lex_(lex), norms_(norms), emb_(emb), opts_(opts) {}

  PrimeTargetItem make(std::uint64_t seed, std::size_t index) {
    auto rng = keyed_rng(seed, index);
    std::string id = std::string(to_string(c_)) + "-" + pad(index);
    std::string last;
    for (std::size_t attempt = 0; attempt < opts_.max_attempts; ++attempt) {
      auto candidate = attempt_item(rng, id);
      if (!candidate) {
        last = "no candidate word satisfies the condition for this prime";
        continue;
      }
      auto check = check_condition(*candidate, norms_, emb_, opts_.cos_threshold);
      if (check.passed) return std::move(*candidate);
      last = check.violations.front();
    }
    throw ExhaustionError(std::string(to_string(c_)) + ": item " + std::to_string(index) +
                          " not satisfiable after " + std::to_string(opts_.max_attempts) +
                          " attempts (last: " + last + ")");
  }

 private:
  static std::string pad(std::size_t i) {
    std::string s = std::to_string(i);
    return std::string(s.size() < 6 ? 6 - s.size() : 0, '0') + s;
  }

  bool similar(const std::string& a, const std::string& b) const {
    if (norms_.association(a, b) > 0.0) return true;
    auto cos = emb_.cosine(a, b);
    return cos && *cos >= opts_.cos_threshold;
  }

  bool designated(Slot s) const {
    auto d = overlap_slots(c_);
    return std::find(d.begin(), d.end(), s) != d.end();
  }

  bool must_be_similar(Slot s) const {
    auto d = similarity_slots(c_);
    return std::find(d.begin(), d.end(), s) != d.end();
  }

  // Candidate target words for a noun slot given the prime sentence.
  std::vector<const std::string*> noun_pool(const std::vector<std::string>& list, Slot slot,
                                            const SlotWords& prime,
                                            const std::set<std::string>& banned) const {
    std::vector<const std::string*> out;
    for (const auto& w : list) {
      if (banned.count(text::lower(w))) continue;
      if (must_be_similar(slot) && !similar(prime.at(slot), w)) continue;
      out.push_back(&w);
    }
    return out;
  }

  std::optional<PrimeTargetItem> attempt_item(std::mt19937_64& rng, const std::string& id) {
    SlotWords prime;
    prime[Slot::N1] = lex_.agents[uniform_index(rng, lex_.agents.size())];
    prime[Slot::N2] = lex_.themes[uniform_index(rng, lex_.themes.size())];
    {
      std::vector<const std::string*> rec;
      for (const auto& r : lex_.recipients)
        if (r != prime[Slot::N1]) rec.push_back(&r);
      const auto* r = pick(rng, rec);
      if (!r) return std::nullopt;
      prime[Slot::N3] = *r;
    }
    const VerbEntry& pverb = lex_.verbs[uniform_index(rng, lex_.verbs.size())];
    prime[Slot::V] = pverb.lemma;
    prime[Slot::P] = pverb.preposition;
    for (Slot s : {Slot::DT1, Slot::DT2, Slot::DT3}) {
      prime[s] = lex_.determiners[uniform_index(rng, lex_.determiners.size())];
    }

    const bool sim_condition = is_similarity_condition(c_);
    std::set<std::string> banned;  // lower-cased words the target may not use
    for (const auto& [slot, word] : prime) {
      if (!sim_condition || is_content_slot(slot)) banned.insert(text::lower(word));
    }

    SlotWords target;
    // Determiners.
    {
      std::vector<const std::string*> dets;
      for (const auto& d : lex_.determiners)
        if (sim_condition || !banned.count(text::lower(d))) dets.push_back(&d);
      for (Slot s : {Slot::DT1, Slot::DT2, Slot::DT3}) {
        if (designated(s)) {
          target[s] = prime[s];
          continue;
        }
        const auto* d = pick(rng, dets);
        if (!d) return std::nullopt;
        target[s] = *d;
      }
    }
    // Verb and preposition.
    {
      const VerbEntry* tverb = nullptr;
      if (designated(Slot::V)) {
        tverb = &pverb;
      } else {
        std::vector<const VerbEntry*> verbs;
        for (const auto& v : lex_.verbs) {
          if (banned.count(text::lower(v.lemma))) continue;
          if (designated(Slot::P)) {
            if (v.preposition != pverb.preposition) continue;
          } else if (!sim_condition && banned.count(text::lower(v.preposition))) {
            continue;
          }
          if (must_be_similar(Slot::V) && !similar(pverb.lemma, v.lemma)) continue;
          verbs.push_back(&v);
        }
        tverb = pick(rng, verbs);
      }
      if (!tverb) return std::nullopt;
      target[Slot::V] = tverb->lemma;
      target[Slot::P] = tverb->preposition;
    }
    // Nouns.
    for (auto [slot, list] : {std::pair{Slot::N1, &lex_.agents}, std::pair{Slot::N2, &lex_.themes},
                              std::pair{Slot::N3, &lex_.recipients}}) {
      if (designated(slot)) {
        target[slot] = prime[slot];
        continue;
      }
      auto local_banned = banned;
      if (slot == Slot::N3) local_banned.insert(text::lower(target[Slot::N1]));
      const auto* w = pick(rng, noun_pool(*list, slot, prime, local_banned));
      if (!w) return std::nullopt;
      target[slot] = *w;
    }
    if (target[Slot::N1] == target[Slot::N3]) return std::nullopt;

    return make_item(id, c_, std::move(prime), std::move(target));
  }

  Condition c_;
  const Lexicon& lex_;
  const AssociationNorms& norms_;
  const EmbeddingTable& emb_;
  GeneratorOptions opts_;
};

}  // namespace

std::vector<PrimeTargetItem> generate(Condition condition, std::size_t n_items,
                                      const Lexicon& lexicon, const AssociationNorms& norms,
                                      const EmbeddingTable& embeddings, std::uint64_t seed,
                                      const GeneratorOptions& options) {
  lexicon.validate();
  if (options.max_attempts == 0) throw InvalidArgument("max_attempts must be positive");
  Generator gen(condition, lexicon, norms, embeddings, options);
  std::vector<PrimeTargetItem> items;
  items.reserve(n_items);
  for (std::size_t i = 0; i < n_items; ++i) items.push_back(gen.make(seed, i));
  return items;
}

// ---------------------------------------------------------------------------
// JSON Lines

namespace {

nlohmann::ordered_json words_to_json(const SlotWords& words) {
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (Slot s : kAllSlots) {
    auto it = words.find(s);
    if (it != words.end()) out[std::string(to_string(s))] = it->second;
  }
  return out;
}

SlotWords words_from_json(const nlohmann::json& j) {
  SlotWords out;
  for (const auto& [key, value] : j.items()) {
    auto slot = slot_from_string(key);
    if (!slot) throw InvalidArgument("unknown slot '" + key + "'");
    out[*slot] = value.get<std::string>();
  }
  return out;
}

}  // namespace

std::string item_to_json(const PrimeTargetItem& item) {
  nlohmann::ordered_json j;
  j["id"] = item.id;
  j["condition"] = std::string(to_string(item.condition));
  j["prime_words"] = words_to_json(item.prime_words);
  j["target_words"] = words_to_json(item.target_words);
  j["prime_po"] = item.prime_po;
  j["prime_do"] = item.prime_do;
  j["target_po"] = item.target_po;
  j["target_do"] = item.target_do;
  return j.dump();
}

PrimeTargetItem item_from_json(std::string_view line) {
  auto j = nlohmann::json::parse(line);
  PrimeTargetItem item;
  item.id = j.at("id").get<std::string>();
  item.condition = condition_from_string(j.at("condition").get<std::string>());
  item.prime_words = words_from_json(j.at("prime_words"));
  item.target_words = words_from_json(j.at("target_words"));
  item.prime_po = j.at("prime_po").get<std::string>();
  item.prime_do = j.at("prime_do").get<std::string>();
  item.target_po = j.at("target_po").get<std::string>();
  item.target_do = j.at("target_do").get<std::string>();
  return item;
}

void write_corpus(std::ostream& out, std::span<const PrimeTargetItem> items) {
  for (const auto& item : items) out << item_to_json(item) << '\n';
}

std::vector<PrimeTargetItem> read_corpus(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<PrimeTargetItem> items;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      items.push_back(item_from_json(line));
    } catch (const std::exception& e) {
      throw ParseError(path.string(), lineno, e.what());
    }
  }
  return items;
}

}  // namespace primelens
