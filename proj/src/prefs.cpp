#include "primelens/prefs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>

#include <json.hpp>

#include "primelens/error.hpp"
#include "primelens/stats.hpp"
#include "primelens/text.hpp"

namespace primelens {

VerbPreference po_pref(const std::string& verb, std::span<const PrimeTargetItem> frames,
                       const std::string& model_id, Scorer& scorer) {
  if (frames.empty()) throw InvalidArgument("no frames for verb '" + verb + "'");
  double sum = 0.0;
  for (const auto& f : frames) {
    auto it = f.prime_words.find(Slot::V);
    if (it == f.prime_words.end() || it->second != verb) {
      throw InvalidArgument("frame " + f.id + " does not contain verb '" + verb + "'");
    }
    const double po = scorer.score({"", f.prime_po, model_id}).total_logprob;
    const double dO = scorer.score({"", f.prime_do, model_id}).total_logprob;
    sum += po - dO;
  }
  return {model_id, verb, sum / static_cast<double>(frames.size()), frames.size()};
}

std::vector<VerbPreference> verb_preferences(std::span<const PrimeTargetItem> frames,
                                             const std::string& model_id, Scorer& scorer) {
  std::map<std::string, std::vector<PrimeTargetItem>> by_verb;
  for (const auto& f : frames) by_verb[f.prime_words.at(Slot::V)].push_back(f);
  std::vector<VerbPreference> out;
  for (const auto& [verb, fs] : by_verb) out.push_back(po_pref(verb, fs, model_id, scorer));
  return out;
}

PreferenceOrder order_from_preferences(const std::string& source_id,
                                       std::span<const VerbPreference> prefs) {
  std::vector<const VerbPreference*> sorted;
  for (const auto& p : prefs) sorted.push_back(&p);
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) {
    if (a->po_pref != b->po_pref) return a->po_pref > b->po_pref;
    return a->verb < b->verb;
  });
  PreferenceOrder order;
  order.source_id = source_id;
  for (const auto* p : sorted) {
    order.ranked_verbs.push_back(p->verb);
    order.keys.push_back(p->po_pref);
  }
  return order;
}

PreferenceOrder parse_human_order(std::istream& in, const std::string& source_id) {
  std::vector<std::pair<double, std::string>> rows;
  std::set<std::string> seen;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    auto line = text::trim(raw);
    if (line.empty()) continue;
    if (lineno == 1 && line == "verb,rank") continue;
    auto fields = text::split(line, ',');
    if (fields.size() != 2) throw ParseError(source_id, lineno, "expected 'verb,rank'");
    std::string verb(text::trim(fields[0]));
    if (!seen.insert(verb).second) throw ParseError(source_id, lineno, "duplicate verb '" + verb + "'");
    try {
      rows.emplace_back(text::parse_double(fields[1]), verb);
    } catch (const InvalidArgument& e) {
      throw ParseError(source_id, lineno, e.what());
    }
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  PreferenceOrder order;
  order.source_id = source_id;
  for (const auto& [rank, verb] : rows) {
    order.ranked_verbs.push_back(verb);
    order.keys.push_back(-rank);
  }
  return order;
}

PreferenceOrder load_human_order(const std::filesystem::path& path, const std::string& source_id) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  return parse_human_order(in, source_id);
}

double preference_correlation(const PreferenceOrder& a, const PreferenceOrder& b) {
  std::map<std::string, double> ka, kb;
  for (std::size_t i = 0; i < a.ranked_verbs.size(); ++i) ka[a.ranked_verbs[i]] = a.keys[i];
  for (std::size_t i = 0; i < b.ranked_verbs.size(); ++i) kb[b.ranked_verbs[i]] = b.keys[i];
  std::vector<std::string> diff;
  for (const auto& [v, k] : ka)
    if (!kb.count(v)) diff.push_back(v);
  for (const auto& [v, k] : kb)
    if (!ka.count(v)) diff.push_back(v);
  if (!diff.empty()) {
    std::string list;
    for (const auto& v : diff) list += (list.empty() ? "" : ", ") + v;
    throw InvalidArgument("preference orders '" + a.source_id + "' and '" + b.source_id +
                          "' cover different verbs: " + list);
  }
  std::vector<double> xa, xb;
  for (const auto& [v, k] : ka) {
    xa.push_back(k);
    xb.push_back(kb.at(v));
  }
  auto rho = stats::spearman(xa, xb);
  return rho ? *rho : std::nan("");
}

void write_preferences_csv(std::ostream& out, std::span<const VerbPreference> prefs, bool with_header) {
  if (with_header) out << "model_id,verb,po_pref,n_frames\n";
  for (const auto& p : prefs) {
    out << p.model_id << ',' << p.verb << ',' << text::format_double(p.po_pref) << ',' << p.n_frames
        << '\n';
  }
}

std::string correlation_matrix_json(std::span<const PreferenceOrder> orders) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& a : orders) {
    for (const auto& b : orders) {
      const std::string key = a.source_id + "|" + b.source_id;
      try {
        double rho = preference_correlation(a, b);
        j[key] = std::isnan(rho) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(rho);
      } catch (const InvalidArgument&) {
        j[key] = nullptr;
      }
    }
  }
  return j.dump(2);
}

}  // namespace primelens
