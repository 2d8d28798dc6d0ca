#include "fairmargin/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

#include <nlohmann/json.hpp>

#include "fairmargin/error.hpp"
#include "fairmargin/parallel.hpp"
#include "fairmargin/textio.hpp"

namespace fairmargin {

namespace {

using IndexPair = std::pair<std::size_t, std::size_t>;

// Picks k of the items without replacement (partial Fisher-Yates) and returns
// them in their original order.
std::vector<IndexPair> choose(std::vector<IndexPair> items, std::size_t k, Rng& rng) {
  if (k >= items.size()) return items;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(items.size() - i));
    std::swap(items[i], items[j]);
  }
  items.resize(k);
  std::sort(items.begin(), items.end());
  return items;
}

void split_scores(std::span<const ScoredPair> scored, std::vector<double>& genuine,
                  std::vector<double>& impostor) {
  for (const auto& s : scored) (s.pair.genuine ? genuine : impostor).push_back(s.score);
}

void require_two_sided(std::size_t genuine, std::size_t impostor) {
  if (genuine == 0 || impostor == 0) {
    throw Error(ErrorCode::kOneSidedInput, "need at least one genuine and one impostor score");
  }
}

double score_one(const VerificationPair& p, const EmbeddingTable& embeddings) {
  const auto a = embeddings.find(p.id_a);
  if (a == embeddings.end()) throw Error(ErrorCode::kUnknownId, "unknown id '" + p.id_a + "'");
  const auto b = embeddings.find(p.id_b);
  if (b == embeddings.end()) throw Error(ErrorCode::kUnknownId, "unknown id '" + p.id_b + "'");
  return cosine(a->second, b->second);
}

GroupMetrics metrics_for(std::span<const ScoredPair> scored) {
  std::vector<double> genuine, impostor;
  split_scores(scored, genuine, impostor);
  GroupMetrics m;
  m.genuine_pairs = genuine.size();
  m.impostor_pairs = impostor.size();
  const EerResult e = compute_eer(genuine, impostor);
  m.eer = e.eer;
  m.threshold = e.threshold;
  m.auc = compute_auc(genuine, impostor);
  return m;
}

}  // namespace

std::vector<VerificationPair> make_pairs(std::span<const std::string> ids,
                                         std::span<const ClassId> classes,
                                         std::size_t per_class_genuine,
                                         std::size_t impostor_count, Rng& rng) {
  if (ids.size() != classes.size()) {
    throw Error(ErrorCode::kShapeMismatch, "ids and classes differ in length");
  }
  const std::size_t n = ids.size();
  std::map<ClassId, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < n; ++i) members[classes[i]].push_back(i);

  std::vector<VerificationPair> out;
  if (per_class_genuine > 0) {
    bool any = false;
    for (const auto& [cls, idx] : members) {
      if (idx.size() < 2) continue;
      any = true;
      std::vector<IndexPair> candidates;
      for (std::size_t a = 0; a < idx.size(); ++a) {
        for (std::size_t b = a + 1; b < idx.size(); ++b) candidates.emplace_back(idx[a], idx[b]);
      }
      for (const auto& [i, j] : choose(std::move(candidates), per_class_genuine, rng)) {
        out.push_back({ids[i], ids[j], true});
      }
    }
    if (!any) throw Error(ErrorCode::kNotEnoughSamples, "no class has two samples");
  }

  if (impostor_count > 0) {
    std::size_t same_class = 0;
    for (const auto& [cls, idx] : members) same_class += idx.size() * (idx.size() - 1) / 2;
    const std::size_t total = n * (n - (n > 0 ? 1 : 0)) / 2 - same_class;
    if (total == 0) throw Error(ErrorCode::kNotEnoughSamples, "fewer than two classes");

    std::vector<IndexPair> chosen;
    if (impostor_count * 2 > total) {
      std::vector<IndexPair> candidates;
      candidates.reserve(total);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
          if (classes[i] != classes[j]) candidates.emplace_back(i, j);
        }
      }
      chosen = choose(std::move(candidates), impostor_count, rng);
    } else {
      std::set<IndexPair> seen;
      while (seen.size() < impostor_count) {
        const auto i = static_cast<std::size_t>(rng.below(n));
        const auto j = static_cast<std::size_t>(rng.below(n));
        if (classes[i] == classes[j]) continue;
        seen.insert(std::minmax(i, j));
      }
      chosen.assign(seen.begin(), seen.end());
    }
    for (const auto& [i, j] : chosen) out.push_back({ids[i], ids[j], false});
  }
  return out;
}

std::string pairs_to_text(const std::vector<VerificationPair>& pairs) {
  std::string out = "id_a,id_b,genuine\n";
  for (const auto& p : pairs) {
    out += p.id_a + ',' + p.id_b + ',' + (p.genuine ? "1" : "0") + '\n';
  }
  return out;
}

std::vector<VerificationPair> pairs_from_text(std::string_view text) {
  textio::LineReader reader(text);
  std::string_view line;
  if (!reader.next(line) || line != "id_a,id_b,genuine") {
    throw Error(ErrorCode::kSchemaMismatch, "pairs header must be id_a,id_b,genuine");
  }
  std::vector<VerificationPair> out;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const auto f = textio::split(line, ',');
    if (f.size() != 3 || f[0].empty() || f[1].empty() || (f[2] != "0" && f[2] != "1")) {
      throw Error(ErrorCode::kParseError,
                  "line " + std::to_string(reader.line_number()) + ": malformed pair");
    }
    out.push_back({std::string(f[0]), std::string(f[1]), f[2] == "1"});
  }
  return out;
}

void save_pairs(const std::vector<VerificationPair>& pairs, const std::string& path) {
  textio::write_file(path, pairs_to_text(pairs));
}

std::vector<VerificationPair> load_pairs(const std::string& path) {
  return pairs_from_text(textio::read_file(path));
}

EmbeddingTable make_table(const std::vector<EmbeddingRecord>& records) {
  EmbeddingTable table;
  for (const auto& r : records) table.emplace(r.id, r.embedding);
  return table;
}

std::vector<ScoredPair> score_pairs(const std::vector<VerificationPair>& pairs,
                                    const EmbeddingTable& embeddings) {
  std::vector<ScoredPair> out(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) {
    out[i] = {pairs[i], score_one(pairs[i], embeddings)};
  });
  return out;
}

std::vector<ScoredPair> score_pairs_serial(const std::vector<VerificationPair>& pairs,
                                           const EmbeddingTable& embeddings) {
  std::vector<ScoredPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back({p, score_one(p, embeddings)});
  return out;
}

EerResult compute_eer(std::span<const ScoredPair> scored) {
  std::vector<double> genuine, impostor;
  split_scores(scored, genuine, impostor);
  return compute_eer(genuine, impostor);
}

EerResult compute_eer(std::span<const double> genuine_in, std::span<const double> impostor_in) {
  require_two_sided(genuine_in.size(), impostor_in.size());
  std::vector<double> genuine(genuine_in.begin(), genuine_in.end());
  std::vector<double> impostor(impostor_in.begin(), impostor_in.end());
  std::sort(genuine.begin(), genuine.end());
  std::sort(impostor.begin(), impostor.end());

  std::vector<double> thresholds(genuine);
  thresholds.insert(thresholds.end(), impostor.begin(), impostor.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  const auto ng = static_cast<double>(genuine.size());
  const auto ni = static_cast<double>(impostor.size());
  // One operating point per threshold, plus the reject-everything point
  // (FAR 0, FRR 1) above the top score.
  const std::size_t points = thresholds.size() + 1;
  std::vector<double> far(points), frr(points);
  std::size_t g = 0, i = 0;
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    const double t = thresholds[k];
    while (g < genuine.size() && genuine[g] < t) ++g;
    while (i < impostor.size() && impostor[i] < t) ++i;
    frr[k] = static_cast<double>(g) / ng;
    far[k] = static_cast<double>(impostor.size() - i) / ni;
  }
  far[points - 1] = 0.0;
  frr[points - 1] = 1.0;
  auto threshold_at = [&](std::size_t k) {
    return thresholds[std::min(k, thresholds.size() - 1)];
  };

  // FAR - FRR is non-increasing, starts at 1 and ends at -1.
  for (std::size_t k = 0; k < points; ++k) {
    const double diff = far[k] - frr[k];
    if (diff == 0.0) return {far[k], threshold_at(k)};
    if (diff < 0.0) {
      const double prev = far[k - 1] - frr[k - 1];
      const double alpha = prev / (prev - diff);
      return {far[k - 1] + alpha * (far[k] - far[k - 1]),
              threshold_at(k - 1) + alpha * (threshold_at(k) - threshold_at(k - 1))};
    }
  }
  return {far.back(), threshold_at(points - 1)};  // unreachable
}

double compute_auc(std::span<const ScoredPair> scored) {
  std::vector<double> genuine, impostor;
  split_scores(scored, genuine, impostor);
  return compute_auc(genuine, impostor);
}

double compute_auc(std::span<const double> genuine, std::span<const double> impostor) {
  require_two_sided(genuine.size(), impostor.size());
  std::vector<std::pair<double, bool>> all;
  all.reserve(genuine.size() + impostor.size());
  for (double s : genuine) all.emplace_back(s, true);
  for (double s : impostor) all.emplace_back(s, false);
  std::sort(all.begin(), all.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  // Sum of 1-based average ranks of the genuine scores.
  double genuine_rank_sum = 0.0;
  for (std::size_t start = 0; start < all.size();) {
    std::size_t end = start;
    std::size_t genuine_in_run = 0;
    while (end < all.size() && all[end].first == all[start].first) {
      genuine_in_run += all[end].second ? 1 : 0;
      ++end;
    }
    const double avg_rank = 0.5 * static_cast<double>(start + 1 + end);
    genuine_rank_sum += avg_rank * static_cast<double>(genuine_in_run);
    start = end;
  }
  const auto ng = static_cast<double>(genuine.size());
  const auto ni = static_cast<double>(impostor.size());
  return (genuine_rank_sum - ng * (ng + 1.0) / 2.0) / (ng * ni);
}

double gini(std::span<const double> errs) {
  if (errs.empty()) return 0.0;
  const auto n = static_cast<double>(errs.size());
  const double mean = std::accumulate(errs.begin(), errs.end(), 0.0) / n;
  if (mean == 0.0) return 0.0;
  double total = 0.0;
  for (double a : errs) {
    for (double b : errs) total += std::abs(a - b);
  }
  return total / (2.0 * n * n * mean);
}

SerResult ser(std::span<const double> errs) {
  if (errs.empty()) return {};
  const auto [lo, hi] = std::minmax_element(errs.begin(), errs.end());
  SerResult r;
  double denom = *lo;
  if (denom < kSerFloor) {
    denom = kSerFloor;
    r.floored = true;
  }
  r.value = *hi / denom;
  return r;
}

double population_std(std::span<const double> values) {
  if (values.empty()) return 0.0;
  const auto n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / n);
}

namespace detail {

GroupingResult binarize(std::span<const std::string> ids,
                        std::span<const Attributes* const> attributes,
                        const std::vector<std::string>& attribute_names) {
  GroupingResult out;
  for (const auto& name : attribute_names) {
    std::vector<double> raw(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto it = attributes[i]->find(name);
      if (it == attributes[i]->end()) {
        throw Error(ErrorCode::kUnknownAttribute,
                    "sample '" + ids[i] + "' has no attribute '" + name + "'");
      }
      raw[i] = it->second;
    }
    auto& members = out.groups[name];
    if (raw.empty()) {
      out.flags.push_back("empty_group:" + name);
      continue;
    }
    const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
    if (*hi == *lo) {
      out.flags.push_back("constant_attribute:" + name);
      continue;
    }
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const double scaled = 2.0 * (raw[i] - *lo) / (*hi - *lo) - 1.0;
      if (scaled > 0.5) members.insert(ids[i]);
    }
    if (members.empty()) out.flags.push_back("empty_group:" + name);
  }
  return out;
}

}  // namespace detail

EvalReport evaluate(const EmbeddingTable& embeddings,
                    const std::vector<VerificationPair>& pairs,
                    const Grouping& grouping) {
  EvalReport report;
  const std::vector<ScoredPair> scored = score_pairs(pairs, embeddings);
  report.overall = metrics_for(scored);

  for (const auto& [name, members] : grouping) {
    std::vector<ScoredPair> subset;
    std::size_t genuine = 0;
    for (const auto& s : scored) {
      if (members.contains(s.pair.id_a) && members.contains(s.pair.id_b)) {
        genuine += s.pair.genuine ? 1 : 0;
        subset.push_back(s);
      }
    }
    if (genuine == 0 || genuine == subset.size()) {
      report.flags.push_back("unscored_group:" + name);
      continue;
    }
    report.per_group.emplace(name, metrics_for(subset));
  }

  std::vector<double> eers;
  for (const auto& [name, m] : report.per_group) eers.push_back(m.eer);
  if (!eers.empty()) {
    const double mean =
        std::accumulate(eers.begin(), eers.end(), 0.0) / static_cast<double>(eers.size());
    for (const auto& [name, m] : report.per_group) report.heatmap[name] = m.eer - mean;
  }
  if (eers.size() >= 2) {
    const SerResult s = ser(eers);
    report.fairness = FairnessMetrics{population_std(eers), gini(eers), s.value, s.floored};
    if (s.floored) report.flags.push_back("ser_floor_applied");
  } else {
    report.flags.push_back("too_few_groups");
  }
  return report;
}

std::string report_to_json(const EvalReport& report) {
  using nlohmann::ordered_json;
  auto metrics = [](const GroupMetrics& m) {
    ordered_json j;
    j["eer"] = m.eer;
    j["eer_threshold"] = m.threshold;
    j["auc"] = m.auc;
    j["genuine_pairs"] = m.genuine_pairs;
    j["impostor_pairs"] = m.impostor_pairs;
    return j;
  };
  ordered_json doc;
  doc["format"] = "fairmargin-eval-report v1";
  doc["overall"] = metrics(report.overall);
  ordered_json groups = ordered_json::object();
  for (const auto& [name, m] : report.per_group) groups[name] = metrics(m);
  doc["per_group"] = groups;
  if (report.fairness) {
    ordered_json f;
    f["std"] = report.fairness->std;
    f["gini"] = report.fairness->gini;
    f["ser"] = report.fairness->ser;
    f["ser_floored"] = report.fairness->ser_floored;
    doc["fairness"] = f;
  } else {
    doc["fairness"] = nullptr;
  }
  ordered_json heat = ordered_json::object();
  for (const auto& [name, dev] : report.heatmap) heat[name] = dev;
  doc["heatmap"] = heat;
  doc["flags"] = report.flags;
  return doc.dump(2) + "\n";
}

std::string report_to_csv(const EvalReport& report) {
  using textio::format_double;
  std::string out = "group,eer,auc,genuine_pairs,impostor_pairs,std,gini,ser\n";
  for (const auto& [name, m] : report.per_group) {
    out += name + ',' + format_double(m.eer) + ',' + format_double(m.auc) + ',' +
           std::to_string(m.genuine_pairs) + ',' + std::to_string(m.impostor_pairs) + ",,,\n";
  }
  const auto& o = report.overall;
  out += "overall," + format_double(o.eer) + ',' + format_double(o.auc) + ',' +
         std::to_string(o.genuine_pairs) + ',' + std::to_string(o.impostor_pairs) + ',';
  if (report.fairness) {
    out += format_double(report.fairness->std) + ',' + format_double(report.fairness->gini) +
           ',' + format_double(report.fairness->ser);
  } else {
    out += ",,";
  }
  out += '\n';
  return out;
}

std::string heatmap_to_csv(const EvalReport& report) {
  std::string out = "group,eer_deviation\n";
  for (const auto& [name, dev] : report.heatmap) {
    out += name + ',' + textio::format_double(dev) + '\n';
  }
  return out;
}

}  // namespace fairmargin
