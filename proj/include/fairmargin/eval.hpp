#pragma once

// Verification scoring and the fairness metric suite.

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fairmargin/core.hpp"
#include "fairmargin/data.hpp"

namespace fairmargin {

struct VerificationPair {
  std::string id_a;
  std::string id_b;
  bool genuine = false;

  bool operator==(const VerificationPair&) const = default;
};

struct ScoredPair {
  VerificationPair pair;
  double score = 0.0;
};

/// Genuine pairs: for every class with at least two samples, up to
/// per_class_genuine distinct within-class pairs. Impostor pairs: up to
/// impostor_count distinct cross-class pairs. Both are drawn without
/// replacement; when fewer pairs exist than requested, all of them are used.
/// Throws NotEnoughSamples when a requested kind of pair cannot be formed at all.
std::vector<VerificationPair> make_pairs(std::span<const std::string> ids,
                                         std::span<const ClassId> classes,
                                         std::size_t per_class_genuine,
                                         std::size_t impostor_count, Rng& rng);

template <class Record>
std::vector<VerificationPair> make_pairs(const std::vector<Record>& records,
                                         std::size_t per_class_genuine,
                                         std::size_t impostor_count, Rng& rng) {
  std::vector<std::string> ids;
  std::vector<ClassId> classes;
  for (const auto& r : records) {
    ids.push_back(r.id);
    classes.push_back(r.class_id);
  }
  return make_pairs(ids, classes, per_class_genuine, impostor_count, rng);
}

/// `id_a,id_b,genuine` with genuine in {0,1}.
std::string pairs_to_text(const std::vector<VerificationPair>& pairs);
std::vector<VerificationPair> pairs_from_text(std::string_view text);
void save_pairs(const std::vector<VerificationPair>& pairs, const std::string& path);
std::vector<VerificationPair> load_pairs(const std::string& path);

using EmbeddingTable = std::map<std::string, Vector, std::less<>>;

EmbeddingTable make_table(const std::vector<EmbeddingRecord>& records);

/// Cosine of the two embeddings (clamped). Throws UnknownId.
std::vector<ScoredPair> score_pairs(const std::vector<VerificationPair>& pairs,
                                    const EmbeddingTable& embeddings);
std::vector<ScoredPair> score_pairs_serial(const std::vector<VerificationPair>& pairs,
                                           const EmbeddingTable& embeddings);

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

/// Threshold sweep over the sorted distinct scores plus one point above the
/// maximum. FAR(t) = share of impostors with score >= t, FRR(t) = share of
/// genuines with score < t. The EER is read at the sign change of FAR - FRR,
/// interpolating linearly between the two neighbouring thresholds; exact
/// crossings win, lowest threshold first. Throws OneSidedInput.
EerResult compute_eer(std::span<const ScoredPair> scored);
EerResult compute_eer(std::span<const double> genuine, std::span<const double> impostor);

/// P(genuine > impostor) + 0.5 P(tie), via average ranks. Throws OneSidedInput.
double compute_auc(std::span<const ScoredPair> scored);
double compute_auc(std::span<const double> genuine, std::span<const double> impostor);

/// sum_i sum_j |e_i - e_j| / (2 n^2 mean(e)); 0 when the mean is 0.
double gini(std::span<const double> errs);

inline constexpr double kSerFloor = 1e-12;

struct SerResult {
  double value = 1.0;
  /// The minimum was below kSerFloor and the floor was used instead.
  bool floored = false;
};

/// max / min.
SerResult ser(std::span<const double> errs);

/// Population standard deviation.
double population_std(std::span<const double> values);

/// Group name -> member sample ids.
using Grouping = std::map<std::string, std::set<std::string, std::less<>>, std::less<>>;

struct GroupingResult {
  Grouping groups;
  std::vector<std::string> flags;
};

/// Min-max scales each named attribute over the records to [-1, 1]; a record
/// belongs to the attribute's group iff its scaled value exceeds 0.5. A
/// constant attribute yields an empty group and a flag. Throws
/// UnknownAttribute when a record lacks the attribute.
template <class Record>
GroupingResult binarize_attributes(const std::vector<Record>& records,
                                   const std::vector<std::string>& attribute_names);

struct GroupMetrics {
  double eer = 0.0;
  double threshold = 0.0;
  double auc = 0.0;
  std::size_t genuine_pairs = 0;
  std::size_t impostor_pairs = 0;
};

struct FairnessMetrics {
  double std = 0.0;
  double gini = 0.0;
  double ser = 1.0;
  bool ser_floored = false;
};

struct EvalReport {
  std::map<std::string, GroupMetrics, std::less<>> per_group;
  GroupMetrics overall;
  /// Present iff at least two groups could be scored.
  std::optional<FairnessMetrics> fairness;
  /// Group EER minus the mean of group EERs.
  std::map<std::string, double, std::less<>> heatmap;
  std::vector<std::string> flags;
};

/// A pair belongs to a group iff both of its samples do. Groups without at
/// least one genuine and one impostor pair are skipped with a flag.
EvalReport evaluate(const EmbeddingTable& embeddings,
                    const std::vector<VerificationPair>& pairs,
                    const Grouping& grouping);

/// Stable-key JSON document.
std::string report_to_json(const EvalReport& report);
/// One row per group plus an `overall` summary row.
std::string report_to_csv(const EvalReport& report);
/// `group,eer_deviation`.
std::string heatmap_to_csv(const EvalReport& report);

// -- template definitions ---------------------------------------------------

namespace detail {
GroupingResult binarize(std::span<const std::string> ids,
                        std::span<const Attributes* const> attributes,
                        const std::vector<std::string>& attribute_names);
}  // namespace detail

template <class Record>
GroupingResult binarize_attributes(const std::vector<Record>& records,
                                   const std::vector<std::string>& attribute_names) {
  std::vector<std::string> ids;
  std::vector<const Attributes*> attrs;
  for (const auto& r : records) {
    ids.push_back(r.id);
    attrs.push_back(&r.attributes);
  }
  return detail::binarize(ids, attrs, attribute_names);
}

}  // namespace fairmargin
