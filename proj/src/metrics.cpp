#include "primelens/metrics.hpp"

#include <cmath>
#include <ostream>

#include <json.hpp>

#include "primelens/stats.hpp"
#include "primelens/text.hpp"

namespace primelens {

namespace {
constexpr std::array<std::string_view, 4> kQuadrantNames = {"Balanced", "SkewedPO", "SkewedDO",
                                                            "Inverse"};

std::size_t idx(Structure s) { return s == Structure::PO ? 0 : 1; }

Quadrant quadrant_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kQuadrantNames.size(); ++i)
    if (kQuadrantNames[i] == s) return static_cast<Quadrant>(i);
  throw InvalidArgument("unknown quadrant '" + std::string(s) + "'");
}
}  // namespace

std::string_view to_string(Quadrant q) { return kQuadrantNames[static_cast<std::size_t>(q)]; }

std::string leg_name(Structure target, Structure prime) {
  return "target_" + text::lower(to_string(target)) + "|prime_" + text::lower(to_string(prime));
}

std::array<ScoreRequest, 4> leg_requests(const PrimeTargetItem& item, const std::string& model_id) {
  return {ScoreRequest{item.prime_po, item.target_po, model_id},
          ScoreRequest{item.prime_do, item.target_po, model_id},
          ScoreRequest{item.prime_do, item.target_do, model_id},
          ScoreRequest{item.prime_po, item.target_do, model_id}};
}

ItemLegs score_legs(const PrimeTargetItem& item, const std::string& model_id, Scorer& scorer) {
  ItemLegs legs;
  for (Structure target : {Structure::PO, Structure::DO}) {
    for (Structure prime : {target, other(target)}) {
      ScoreRequest req{item.prime(prime), item.target(target), model_id};
      try {
        auto seq = scorer.score(req);
        (prime == target ? legs.congruent : legs.incongruent)[idx(target)] = std::move(seq);
      } catch (const CacheMiss& e) {
        throw LegError(item.id, leg_name(target, prime), e.what(), true);
      } catch (const Error& e) {
        throw LegError(item.id, leg_name(target, prime), e.what(), false);
      }
    }
  }
  return legs;
}

std::pair<double, double> sentence_pe(const ItemLegs& legs) {
  return {legs.congruent[0].total_logprob - legs.incongruent[0].total_logprob,
          legs.congruent[1].total_logprob - legs.incongruent[1].total_logprob};
}

std::pair<double, double> sentence_pe(const PrimeTargetItem& item, const std::string& model_id,
                                      Scorer& scorer) {
  return sentence_pe(score_legs(item, model_id, scorer));
}

namespace {

bool same_tokenization(const ScoredSequence& a, const ScoredSequence& b) {
  if (a.tokens.size() != b.tokens.size()) return false;
  for (std::size_t i = 0; i < a.tokens.size(); ++i) {
    if (a.tokens[i].text != b.tokens[i].text || a.tokens[i].span != b.tokens[i].span) return false;
  }
  return true;
}

struct TargetEffects {
  SlotValues w_pe;
  SlotAlignment alignment;
};

TargetEffects target_effects(const PrimeTargetItem& item, const ItemLegs& legs, Structure target) {
  const auto& cong = legs.congruent[idx(target)];
  const auto& incong = legs.incongruent[idx(target)];
  if (!same_tokenization(cong, incong)) {
    throw TokenizationMismatch("item " + item.id + ": target " + std::string(to_string(target)) +
                               " is tokenized differently under the two primes");
  }
  TargetEffects out;
  out.alignment = align(cong, item.target_words, target);
  for (const auto& range : out.alignment.slot_spans) {
    out.w_pe[range.slot] =
        slot_logprob(cong, out.alignment, range.slot) - slot_logprob(incong, out.alignment, range.slot);
  }
  return out;
}

}  // namespace

std::pair<SlotValues, SlotValues> token_pe(const PrimeTargetItem& item, const ItemLegs& legs) {
  return {target_effects(item, legs, Structure::PO).w_pe,
          target_effects(item, legs, Structure::DO).w_pe};
}

std::pair<SlotValues, SlotValues> token_pe(const PrimeTargetItem& item, const std::string& model_id,
                                           Scorer& scorer) {
  return token_pe(item, score_legs(item, model_id, scorer));
}

std::pair<double, double> s_delta_pe(const PEResult& result) {
  auto post = [](const SlotValues& w) {
    double sum = 0.0;
    for (const auto& [slot, value] : w) {
      if (!is_prefix_slot(slot)) sum += value;
    }
    return sum;
  };
  return {post(result.w_pe_po), post(result.w_pe_do)};
}

Quadrant classify_quadrant(double po, double dO) {
  if (po > 0.0 && dO > 0.0) return Quadrant::Balanced;
  if (po > 0.0) return Quadrant::SkewedPO;
  if (dO > 0.0) return Quadrant::SkewedDO;
  return Quadrant::Inverse;
}

PEResult measure_item(const PrimeTargetItem& item, const std::string& model_id, const ItemLegs& legs) {
  PEResult r;
  r.item_id = item.id;
  r.model_id = model_id;
  r.condition = std::string(to_string(item.condition));
  std::tie(r.s_pe_po, r.s_pe_do) = sentence_pe(legs);
  auto po = target_effects(item, legs, Structure::PO);
  auto dO = target_effects(item, legs, Structure::DO);
  r.w_pe_po = std::move(po.w_pe);
  r.w_pe_do = std::move(dO.w_pe);
  r.alignment_po = std::move(po.alignment);
  r.alignment_do = std::move(dO.alignment);
  std::tie(r.s_delta_pe_po, r.s_delta_pe_do) = s_delta_pe(r);
  r.quadrant = classify_quadrant(r.s_pe_po, r.s_pe_do);
  return r;
}

PEResult measure_item(const PrimeTargetItem& item, const std::string& model_id, Scorer& scorer) {
  return measure_item(item, model_id, score_legs(item, model_id, scorer));
}

PESummary summarize(std::span<const PEResult> results, bool use_delta) {
  PESummary s;
  s.use_delta = use_delta;
  s.n_items = results.size();
  if (!results.empty()) {
    s.model_id = results.front().model_id;
    s.condition = results.front().condition;
  }
  std::vector<double> po, dO;
  for (const auto& r : results) {
    po.push_back(use_delta ? r.s_delta_pe_po : r.s_pe_po);
    dO.push_back(use_delta ? r.s_delta_pe_do : r.s_pe_do);
  }
  s.mean_s_pe_po = stats::mean(po);
  s.mean_s_pe_do = stats::mean(dO);
  s.pearson_r = stats::pearson(po, dO);
  s.spearman_rho = stats::spearman(po, dO);
  if (!results.empty()) {
    std::map<Quadrant, std::size_t> counts;
    for (Quadrant q : kAllQuadrants) counts[q] = 0;
    for (std::size_t i = 0; i < po.size(); ++i) ++counts[classify_quadrant(po[i], dO[i])];
    for (auto [q, c] : counts) {
      s.quadrant_shares[q] = static_cast<double>(c) / static_cast<double>(results.size());
    }
  }
  return s;
}

InvariantReport check_invariants(std::span<const PEResult> results) {
  InvariantReport rep;
  for (const auto& r : results) {
    for (Structure st : {Structure::PO, Structure::DO}) {
      double sum = 0.0, post = 0.0;
      for (const auto& [slot, v] : r.w_pe(st)) {
        sum += v;
        if (!is_prefix_slot(slot)) post += v;
      }
      rep.max_decomposition_error = std::max(rep.max_decomposition_error, std::abs(r.s_pe(st) - sum));
      rep.max_delta_error = std::max(rep.max_delta_error, std::abs(r.s_delta_pe(st) - post));
    }
    for (Slot s : kPrefixSlots) {
      auto a = r.w_pe_po.find(s);
      auto b = r.w_pe_do.find(s);
      if (a == r.w_pe_po.end() || b == r.w_pe_do.end()) continue;
      rep.max_antisymmetry_error = std::max(rep.max_antisymmetry_error, std::abs(a->second + b->second));
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

nlohmann::ordered_json slot_values_json(const SlotValues& w, Structure st) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (Slot s : slot_template(st)) {
    auto it = w.find(s);
    if (it != w.end()) j[std::string(to_string(s))] = it->second;
  }
  return j;
}

SlotValues slot_values_from_json(const nlohmann::json& j) {
  SlotValues w;
  for (const auto& [k, v] : j.items()) {
    auto s = slot_from_string(k);
    if (!s) throw InvalidArgument("unknown slot '" + k + "'");
    w[*s] = v.get<double>();
  }
  return w;
}

nlohmann::ordered_json alignment_json(const SlotAlignment& a) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : a.slot_spans) {
    arr.push_back({std::string(to_string(r.slot)), r.begin, r.end});
  }
  return arr;
}

SlotAlignment alignment_from_json(const nlohmann::json& j) {
  SlotAlignment a;
  for (const auto& e : j) {
    auto s = slot_from_string(e.at(0).get<std::string>());
    if (!s) throw InvalidArgument("unknown slot in alignment");
    a.slot_spans.push_back({*s, e.at(1).get<std::size_t>(), e.at(2).get<std::size_t>()});
    a.n_tokens = std::max(a.n_tokens, a.slot_spans.back().end);
  }
  return a;
}

nlohmann::ordered_json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

std::string pe_result_to_json(const PEResult& r) {
  nlohmann::ordered_json j;
  j["item_id"] = r.item_id;
  j["model_id"] = r.model_id;
  j["condition"] = r.condition;
  j["s_pe_po"] = r.s_pe_po;
  j["s_pe_do"] = r.s_pe_do;
  j["s_delta_pe_po"] = r.s_delta_pe_po;
  j["s_delta_pe_do"] = r.s_delta_pe_do;
  j["w_pe_po"] = slot_values_json(r.w_pe_po, Structure::PO);
  j["w_pe_do"] = slot_values_json(r.w_pe_do, Structure::DO);
  j["quadrant"] = std::string(to_string(r.quadrant));
  j["aggregation"] = "slot-aggregated";
  j["alignment_po"] = alignment_json(r.alignment_po);
  j["alignment_do"] = alignment_json(r.alignment_do);
  return j.dump();
}

PEResult pe_result_from_json(std::string_view line) {
  auto j = nlohmann::json::parse(line);
  PEResult r;
  r.item_id = j.at("item_id").get<std::string>();
  r.model_id = j.at("model_id").get<std::string>();
  r.condition = j.at("condition").get<std::string>();
  r.s_pe_po = j.at("s_pe_po").get<double>();
  r.s_pe_do = j.at("s_pe_do").get<double>();
  r.s_delta_pe_po = j.at("s_delta_pe_po").get<double>();
  r.s_delta_pe_do = j.at("s_delta_pe_do").get<double>();
  r.w_pe_po = slot_values_from_json(j.at("w_pe_po"));
  r.w_pe_do = slot_values_from_json(j.at("w_pe_do"));
  r.quadrant = quadrant_from_string(j.at("quadrant").get<std::string>());
  r.alignment_po = alignment_from_json(j.at("alignment_po"));
  r.alignment_do = alignment_from_json(j.at("alignment_do"));
  return r;
}

std::string summary_to_json(const PESummary& s) {
  nlohmann::ordered_json j;
  j["model_id"] = s.model_id;
  j["condition"] = s.condition;
  j["variant"] = s.use_delta ? "s_delta_pe" : "s_pe";
  j["n_items"] = s.n_items;
  j["mean_s_pe_po"] = s.mean_s_pe_po;
  j["mean_s_pe_do"] = s.mean_s_pe_do;
  j["pearson_r"] = optional_json(s.pearson_r);
  j["spearman_rho"] = optional_json(s.spearman_rho);
  nlohmann::ordered_json shares = nlohmann::ordered_json::object();
  for (Quadrant q : kAllQuadrants) {
    auto it = s.quadrant_shares.find(q);
    shares[std::string(to_string(q))] = it == s.quadrant_shares.end() ? 0.0 : it->second;
  }
  j["quadrant_shares"] = std::move(shares);
  return j.dump(2);
}

void write_pe_space_csv(std::ostream& out, std::span<const PEResult> results, bool with_header) {
  if (with_header) out << "item_id,model_id,condition,s_pe_po,s_pe_do,quadrant\n";
  for (const auto& r : results) {
    out << r.item_id << ',' << r.model_id << ',' << r.condition << ',' << text::format_double(r.s_pe_po)
        << ',' << text::format_double(r.s_pe_do) << ',' << to_string(r.quadrant) << '\n';
  }
}

std::vector<SlotBar> slot_bars(std::span<const PEResult> results) {
  // model -> structure -> slot -> values, in first-seen model order.
  std::vector<std::string> models;
  std::map<std::string, std::array<std::map<Slot, std::vector<double>>, 2>> values;
  for (const auto& r : results) {
    if (!values.count(r.model_id)) models.push_back(r.model_id);
    auto& per = values[r.model_id];
    for (Structure st : {Structure::PO, Structure::DO}) {
      for (const auto& [slot, v] : r.w_pe(st)) per[idx(st)][slot].push_back(v);
    }
  }
  std::vector<SlotBar> bars;
  for (const auto& m : models) {
    for (Structure st : {Structure::PO, Structure::DO}) {
      for (Slot slot : slot_template(st)) {
        auto it = values[m][idx(st)].find(slot);
        if (it == values[m][idx(st)].end()) continue;
        const auto& xs = it->second;
        SlotBar b{m, slot, st};
        b.n = xs.size();
        b.mean = stats::mean(xs);
        const double half =
            xs.size() > 1 ? stats::kZ975 * std::sqrt(stats::sample_variance(xs) / static_cast<double>(xs.size()))
                          : 0.0;
        b.ci_low = b.mean - half;
        b.ci_high = b.mean + half;
        bars.push_back(b);
      }
    }
  }
  return bars;
}

void write_slot_bars_csv(std::ostream& out, std::span<const SlotBar> bars, bool with_header) {
  if (with_header) out << "model_id,slot,structure,mean_w_pe,ci_low,ci_high\n";
  for (const auto& b : bars) {
    out << b.model_id << ',' << to_string(b.slot) << ',' << to_string(b.structure) << ','
        << text::format_double(b.mean) << ',' << text::format_double(b.ci_low) << ','
        << text::format_double(b.ci_high) << '\n';
  }
}

}  // namespace primelens
