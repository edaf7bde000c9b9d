#include "primelens/regress.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <unordered_map>

#include <fmt/format.h>
#include <json.hpp>

#include "primelens/error.hpp"
#include "primelens/random.hpp"
#include "primelens/stats.hpp"
#include "primelens/text.hpp"

namespace primelens {

const std::array<std::string_view, kFactorCount> kFactorNames = {
    "sim_n1",        "sim_n2",        "sim_n3",         "sim_v",          "sim_s",
    "overlap_n1",    "overlap_n2",    "overlap_n3",     "overlap_det",    "overlap_verb",
    "overlap_prep",  "surp_prime_po", "surp_prime_do",  "surp_target_po", "surp_target_do",
    "pref_vp",       "pref_vt"};

const std::array<std::string_view, kFactorCount> kFactorLabels = {
    "sim(n1)",       "sim(n2)",       "sim(n3)",        "sim(v)",         "sim(s)",
    "N1 overlaps",   "N2 overlaps",   "N3 overlaps",    "Det overlaps",   "V overlaps",
    "Prep overlaps", "-P(prime_po)",  "-P(prime_do)",   "-P(target_po)",  "-P(target_do)",
    "PO-pref(v^p)",  "PO-pref(v^t)"};

std::string_view factor_label(std::string_view name) {
  for (std::size_t i = 0; i < kFactorCount; ++i)
    if (kFactorNames[i] == name) return kFactorLabels[i];
  throw InvalidArgument("unknown factor '" + std::string(name) + "'");
}

std::array<double, kFactorCount> RegressionRow::factors() const {
  return {sim_n1,        sim_n2,        sim_n3,         sim_v,          sim_s,
          overlap_n1,    overlap_n2,    overlap_n3,     overlap_det,    overlap_verb,
          overlap_prep,  surp_prime_po, surp_prime_do,  surp_target_po, surp_target_do,
          pref_vp,       pref_vt};
}

void RegressionRow::set_factor(std::size_t index, double value) {
  std::array<double*, kFactorCount> fields = {
      &sim_n1,       &sim_n2,        &sim_n3,        &sim_v,          &sim_s,
      &overlap_n1,   &overlap_n2,    &overlap_n3,    &overlap_det,    &overlap_verb,
      &overlap_prep, &surp_prime_po, &surp_prime_do, &surp_target_po, &surp_target_do,
      &pref_vp,      &pref_vt};
  if (index >= kFactorCount) throw InvalidArgument("factor index out of range");
  *fields[index] = value;
}

std::string_view to_string(SurprisalMode m) {
  return m == SurprisalMode::Unconditioned ? "unconditioned" : "incongruent_prime";
}

SurprisalMode surprisal_mode_from_string(std::string_view s) {
  if (s == "unconditioned") return SurprisalMode::Unconditioned;
  if (s == "incongruent_prime") return SurprisalMode::IncongruentPrime;
  throw InvalidArgument("unknown surprisal mode '" + std::string(s) + "'");
}

std::array<ScoreRequest, 4> surprisal_requests(const PrimeTargetItem& item, const std::string& model_id,
                                               SurprisalMode mode) {
  const bool cond = mode == SurprisalMode::IncongruentPrime;
  return {ScoreRequest{"", item.prime_po, model_id}, ScoreRequest{"", item.prime_do, model_id},
          ScoreRequest{cond ? item.prime_do : "", item.target_po, model_id},
          ScoreRequest{cond ? item.prime_po : "", item.target_do, model_id}};
}

Surprisals score_surprisals(const PrimeTargetItem& item, const std::string& model_id, Scorer& scorer,
                            SurprisalMode mode) {
  auto req = surprisal_requests(item, model_id, mode);
  Surprisals s;
  s.prime_po = -scorer.score(req[0]).total_logprob;
  s.prime_do = -scorer.score(req[1]).total_logprob;
  s.target_po = -scorer.score(req[2]).total_logprob;
  s.target_do = -scorer.score(req[3]).total_logprob;
  return s;
}

namespace {

double flag(bool b) { return b ? 1.0 : 0.0; }

const std::string& word(const SlotWords& w, Slot s) { return w.at(s); }

}  // namespace

RowBuild build_rows(std::span<const PrimeTargetItem> items, std::span<const PEResult> results,
                    const EmbeddingTable& embeddings, const EmbeddingTable* sentence_vectors,
                    const PreferenceTable& prefs, const SurprisalTable& surprisals) {
  std::unordered_map<std::string, const PrimeTargetItem*> by_id;
  for (const auto& it : items) by_id.emplace(it.id, &it);

  RowBuild out;
  for (const auto& r : results) {
    auto reject = [&](std::string reason) {
      out.rejections.push_back({r.item_id, r.model_id, std::move(reason)});
    };
    auto found = by_id.find(r.item_id);
    if (found == by_id.end()) {
      reject("no corpus item");
      continue;
    }
    const PrimeTargetItem& item = *found->second;
    const auto& pw = item.prime_words;
    const auto& tw = item.target_words;

    RegressionRow row;
    row.item_id = r.item_id;
    row.model_id = r.model_id;
    row.condition = std::string(to_string(item.condition));
    row.response_po = r.s_delta_pe_po;
    row.response_do = r.s_delta_pe_do;

    std::string problem;
    auto sim = [&](Slot s) {
      const auto& a = word(pw, s);
      const auto& b = word(tw, s);
      auto c = embeddings.cosine(a, b);
      if (!c) {
        if (problem.empty())
          problem = "missing embedding for '" + (embeddings.find(a) ? b : a) + "'";
        return 0.0;
      }
      return *c;
    };
    row.sim_n1 = sim(Slot::N1);
    row.sim_n2 = sim(Slot::N2);
    row.sim_n3 = sim(Slot::N3);
    row.sim_v = sim(Slot::V);
    row.sim_s = std::numeric_limits<double>::quiet_NaN();
    if (sentence_vectors) {
      auto c = sentence_vectors->cosine(item.prime_po, item.target_po);
      if (c) {
        row.sim_s = *c;
      } else if (problem.empty()) {
        problem = "missing sentence vector for '" +
                  (sentence_vectors->find(item.prime_po) ? item.target_po : item.prime_po) + "'";
      }
    }

    row.overlap_n1 = flag(word(pw, Slot::N1) == word(tw, Slot::N1));
    row.overlap_n2 = flag(word(pw, Slot::N2) == word(tw, Slot::N2));
    row.overlap_n3 = flag(word(pw, Slot::N3) == word(tw, Slot::N3));
    row.overlap_det = flag(word(pw, Slot::DT1) == word(tw, Slot::DT1) ||
                           word(pw, Slot::DT2) == word(tw, Slot::DT2) ||
                           word(pw, Slot::DT3) == word(tw, Slot::DT3));
    row.overlap_verb = flag(word(pw, Slot::V) == word(tw, Slot::V));
    row.overlap_prep = flag(word(pw, Slot::P) == word(tw, Slot::P));

    auto s = surprisals.find({r.item_id, r.model_id});
    if (s == surprisals.end()) {
      if (problem.empty()) problem = "missing surprisals";
    } else {
      row.surp_prime_po = s->second.prime_po;
      row.surp_prime_do = s->second.prime_do;
      row.surp_target_po = s->second.target_po;
      row.surp_target_do = s->second.target_do;
      if (problem.empty() && (row.surp_prime_po < 0 || row.surp_prime_do < 0 ||
                              row.surp_target_po < 0 || row.surp_target_do < 0)) {
        problem = "negative surprisal";
      }
    }

    auto pref = [&](const std::string& verb) {
      auto m = prefs.find(r.model_id);
      if (m != prefs.end()) {
        auto v = m->second.find(verb);
        if (v != m->second.end()) return v->second;
      }
      if (problem.empty()) problem = "missing preference for verb '" + verb + "'";
      return 0.0;
    };
    row.pref_vp = pref(word(pw, Slot::V));
    row.pref_vt = pref(word(tw, Slot::V));

    if (!problem.empty()) {
      reject(problem);
      continue;
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

std::vector<RegressionRow> sample_rows(std::span<const RegressionRow> rows, std::size_t n_core,
                                       std::size_t n_other, std::uint64_t seed) {
  std::vector<std::string> core, other;
  std::set<std::string> seen;
  for (const auto& r : rows) {
    if (!seen.insert(r.item_id).second) continue;
    (r.condition == "Core" ? core : other).push_back(r.item_id);
  }
  std::set<std::string> chosen;
  auto draw = [&](std::vector<std::string>& pool, std::size_t k, std::uint64_t stream) {
    auto rng = keyed_rng(seed, stream);
    k = std::min(k, pool.size());
    for (std::size_t i = 0; i < k; ++i) {
      std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
      chosen.insert(pool[i]);
    }
  };
  draw(core, n_core, 0);
  draw(other, n_other, 1);
  std::vector<RegressionRow> out;
  for (const auto& r : rows)
    if (chosen.count(r.item_id)) out.push_back(r);
  return out;
}

std::vector<double> ScalingMetadata::restore(std::string_view name, std::span<const double> standardized) const {
  for (const auto& c : columns) {
    if (c.name != name) continue;
    std::vector<double> out;
    out.reserve(standardized.size());
    for (double z : standardized) out.push_back(z * c.sd + c.mean);
    return out;
  }
  throw InvalidArgument("column '" + std::string(name) + "' was not retained");
}

std::pair<DesignTable, ScalingMetadata> standardize(std::span<const RegressionRow> rows) {
  if (rows.size() < 2) throw InvalidArgument("standardization needs at least two rows");
  DesignTable table;
  ScalingMetadata meta;
  for (const auto& r : rows) {
    table.response_po.push_back(r.response_po);
    table.response_do.push_back(r.response_do);
    table.groups.push_back(r.model_id);
    table.item_ids.push_back(r.item_id);
  }
  for (std::size_t j = 0; j < kFactorCount; ++j) {
    std::vector<double> x;
    x.reserve(rows.size());
    for (const auto& r : rows) x.push_back(r.factors()[j]);
    const std::string name(kFactorNames[j]);
    if (!std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); })) {
      meta.dropped.push_back({name, "undefined values"});
      continue;
    }
    if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x.front(); })) {
      meta.dropped.push_back({name, "constant"});
      continue;
    }
    const double m = stats::mean(x);
    const double sd = std::sqrt(stats::sample_variance(x));
    for (double& v : x) v = (v - m) / sd;
    table.names.push_back(name);
    table.columns.push_back(std::move(x));
    meta.columns.push_back({name, m, sd});
  }
  return {std::move(table), std::move(meta)};
}

LmmFit fit_lmm(const DesignTable& table, Structure response, const LmmOptions& options) {
  std::vector<std::string> labels;
  for (const auto& n : table.names) labels.emplace_back(factor_label(n));
  const auto& y = response == Structure::PO ? table.response_po : table.response_do;
  return fit_random_intercept(table.columns, labels, y, table.groups,
                              response == Structure::PO ? "sdpe_po" : "sdpe_do", options);
}

namespace {

std::string rstrip(std::string s) {
  while (!s.empty() && s.back() == ' ') s.pop_back();
  return s;
}

std::string num(double x, int precision) {
  if (std::isnan(x)) return "";
  return fmt::format("{:.{}f}", x, precision);
}

}  // namespace

std::string report_fit(const LmmFit& fit) {
  std::size_t name_w = std::string_view("Group Var").size();
  for (const auto& c : fit.coefficients) name_w = std::max(name_w, c.name.size());
  const std::size_t width = name_w + 10 + 10 + 9 + 8 + 9 + 9;
  const std::string heavy(width, '=');
  const std::string light(width, '-');

  std::string out;
  auto line = [&](const std::string& s) { out += rstrip(s) + "\n"; };
  auto pair = [&](std::string_view k1, const std::string& v1, std::string_view k2, const std::string& v2) {
    line(fmt::format("{:<20}{:<14}{:<22}{}", k1, v1, k2, v2));
  };

  line("Mixed Linear Model Regression Results");
  line(heavy);
  pair("Model:", "MixedLM", "Dependent Variable:", fit.dependent_variable);
  pair("No. Observations:", std::to_string(fit.n_obs), "Method:", "REML");
  pair("No. Groups:", std::to_string(fit.n_groups), "Scale:", num(fit.sigma2_residual, 4));
  pair("Min. group size:", std::to_string(fit.min_group_size), "Log-Likelihood:",
       num(fit.loglik_reml, 4));
  pair("Max. group size:", std::to_string(fit.max_group_size), "Converged:",
       fit.converged ? "Yes" : "No");
  pair("Mean group size:", num(fit.mean_group_size, 1), "R2 (marginal):", num(fit.r2_marginal, 4));
  line(light);
  line(fmt::format("{:<{}}{:>10}{:>10}{:>9}{:>8}{:>9}{:>9}", "", name_w, "Coef.", "Std.Err.", "z",
                   "P>|z|", "[0.025", "0.975]"));
  line(light);
  for (const auto& c : fit.coefficients) {
    const double lo = c.beta - stats::kZ975 * c.std_err;
    const double hi = c.beta + stats::kZ975 * c.std_err;
    line(fmt::format("{:<{}}{:>10}{:>10}{:>9}{:>8}{:>9}{:>9}", c.name, name_w, num(c.beta, 3),
                     num(c.std_err, 3), num(c.z, 3), num(c.p, 3), num(lo, 3), num(hi, 3)));
  }
  line(fmt::format("{:<{}}{:>10}{:>10}", "Group Var", name_w, num(fit.sigma2_group, 3),
                   num(fit.sigma2_group_se, 3)));
  line(heavy);
  return out;
}

namespace {

nlohmann::ordered_json number(double x) {
  if (!std::isfinite(x)) return nullptr;
  return x;
}

double number_from(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

std::string fit_to_json(const LmmFit& fit) {
  nlohmann::ordered_json j;
  j["dependent_variable"] = fit.dependent_variable;
  j["method"] = "REML";
  j["r2_definition"] = "marginal: var(fixed) / (var(fixed) + group var + residual var)";
  j["p_value"] = "two-sided normal";
  auto coefs = nlohmann::ordered_json::array();
  for (const auto& c : fit.coefficients) {
    coefs.push_back({{"name", c.name},
                     {"beta", number(c.beta)},
                     {"std_err", number(c.std_err)},
                     {"z", number(c.z)},
                     {"p", number(c.p)}});
  }
  j["coefficients"] = std::move(coefs);
  j["sigma2_residual"] = number(fit.sigma2_residual);
  j["sigma2_group"] = number(fit.sigma2_group);
  j["sigma2_group_se"] = number(fit.sigma2_group_se);
  j["variance_ratio"] = number(fit.variance_ratio);
  j["loglik_reml"] = number(fit.loglik_reml);
  j["r2_marginal"] = number(fit.r2_marginal);
  j["converged"] = fit.converged;
  j["n_obs"] = fit.n_obs;
  j["n_groups"] = fit.n_groups;
  j["min_group_size"] = fit.min_group_size;
  j["max_group_size"] = fit.max_group_size;
  j["mean_group_size"] = fit.mean_group_size;
  return j.dump(2);
}

LmmFit fit_from_json(std::string_view text) {
  LmmFit fit;
  try {
    auto j = nlohmann::json::parse(text);
    fit.dependent_variable = j.at("dependent_variable").get<std::string>();
    for (const auto& c : j.at("coefficients")) {
      Coefficient k;
      k.name = c.at("name").get<std::string>();
      k.beta = number_from(c.at("beta"));
      k.std_err = number_from(c.at("std_err"));
      k.z = number_from(c.at("z"));
      k.p = number_from(c.at("p"));
      fit.coefficients.push_back(std::move(k));
    }
    fit.sigma2_residual = number_from(j.at("sigma2_residual"));
    fit.sigma2_group = number_from(j.at("sigma2_group"));
    fit.sigma2_group_se = number_from(j.at("sigma2_group_se"));
    fit.variance_ratio = number_from(j.at("variance_ratio"));
    fit.loglik_reml = number_from(j.at("loglik_reml"));
    fit.r2_marginal = number_from(j.at("r2_marginal"));
    fit.converged = j.at("converged").get<bool>();
    fit.n_obs = j.at("n_obs").get<std::size_t>();
    fit.n_groups = j.at("n_groups").get<std::size_t>();
    fit.min_group_size = j.at("min_group_size").get<std::size_t>();
    fit.max_group_size = j.at("max_group_size").get<std::size_t>();
    fit.mean_group_size = number_from(j.at("mean_group_size"));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed fit JSON: ") + e.what());
  }
  return fit;
}

std::string scaling_to_json(const ScalingMetadata& meta) {
  nlohmann::ordered_json j;
  j["variance_convention"] = meta.variance_convention;
  j["responses_standardized"] = false;
  auto cols = nlohmann::ordered_json::array();
  for (const auto& c : meta.columns) cols.push_back({{"name", c.name}, {"mean", c.mean}, {"sd", c.sd}});
  j["columns"] = std::move(cols);
  auto dropped = nlohmann::ordered_json::array();
  for (const auto& d : meta.dropped) dropped.push_back({{"name", d.name}, {"reason", d.reason}});
  j["dropped"] = std::move(dropped);
  return j.dump(2);
}

namespace {

std::string csv_number(double x) { return std::isnan(x) ? std::string() : text::format_double(x); }

}  // namespace

void write_rows_csv(std::ostream& out, std::span<const RegressionRow> rows) {
  out << "item_id,model_id,condition,response_po,response_do";
  for (auto n : kFactorNames) out << ',' << n;
  out << '\n';
  for (const auto& r : rows) {
    out << r.item_id << ',' << r.model_id << ',' << r.condition << ',' << csv_number(r.response_po)
        << ',' << csv_number(r.response_do);
    for (double v : r.factors()) out << ',' << csv_number(v);
    out << '\n';
  }
}

std::vector<RegressionRow> read_rows_csv(std::istream& in, const std::string& name) {
  std::vector<RegressionRow> rows;
  std::string raw;
  std::size_t lineno = 0;
  constexpr std::size_t kFields = 5 + kFactorCount;
  while (std::getline(in, raw)) {
    ++lineno;
    if (lineno == 1) {
      if (text::split(raw, ',').size() != kFields || raw.rfind("item_id,", 0) != 0)
        throw ParseError(name, lineno, "unexpected header");
      continue;
    }
    if (text::trim(raw).empty()) continue;
    auto f = text::split(raw, ',');
    if (f.size() != kFields) throw ParseError(name, lineno, "expected " + std::to_string(kFields) + " fields");
    auto value = [&](const std::string& s) {
      if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
      try {
        return text::parse_double(s);
      } catch (const InvalidArgument& e) {
        throw ParseError(name, lineno, e.what());
      }
    };
    RegressionRow r;
    r.item_id = f[0];
    r.model_id = f[1];
    r.condition = f[2];
    r.response_po = value(f[3]);
    r.response_do = value(f[4]);
    for (std::size_t j = 0; j < kFactorCount; ++j) r.set_factor(j, value(f[5 + j]));
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace primelens
