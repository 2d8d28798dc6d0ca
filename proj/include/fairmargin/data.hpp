#pragma once

// Labeled samples, the biased synthetic generator, the dataset and embedding
// CSV formats, and stratified splitting.
//
// Dataset CSV:    id,class,attr:<name>...,x0,...,x{d-1}
// Embedding CSV:  id,class,attr:<name>...,e0,...,e{d-1}
//
// Attribute columns are written in sorted name order; an empty cell means the
// sample does not carry that attribute. Any attr: column is accepted on load.

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "fairmargin/core.hpp"
#include "fairmargin/loss.hpp"

namespace fairmargin {

using Attributes = std::map<std::string, double, std::less<>>;

/// Attribute name used by the synthetic generator for group membership.
std::string group_attribute(std::string_view group_name);

struct LabeledSample {
  std::string id;
  ClassId class_id = 0;
  Attributes attributes;
  Vector input;

  bool operator==(const LabeledSample&) const = default;
};

struct GroupSpec {
  std::string name;
  std::size_t class_count = 0;
  double noise_sigma = 0.1;
  std::size_t samples_per_class = 0;
};

struct SyntheticSpec {
  std::vector<GroupSpec> groups;
  std::size_t input_dim = 16;
  /// Minimum pairwise angle between class prototypes, in radians.
  double prototype_separation = 0.5;
  std::uint64_t seed = 0;
};

void validate(const SyntheticSpec& spec);

/// Class ids are assigned group by group. Each class gets a unit prototype
/// (placed by rejection so every pair is at least prototype_separation apart)
/// and its samples are prototype + N(0, sigma^2 I) with the group's sigma.
/// Every sample carries group:<name> = 1 for its group and -1 for the others.
std::vector<LabeledSample> generate(const SyntheticSpec& spec);

struct DatasetSplit {
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> val;
};

/// Stratified per class: round(ratio * n) samples go to train, clamped so
/// both sides keep at least one. Input order is preserved within each side.
/// Throws ClassTooSmall when a class has fewer than two samples.
DatasetSplit split(const std::vector<LabeledSample>& samples, double ratio,
                   std::uint64_t seed);

/// Highest class id + 1.
std::size_t class_count(const std::vector<LabeledSample>& samples);

std::string dataset_to_text(const std::vector<LabeledSample>& samples);
std::vector<LabeledSample> dataset_from_text(std::string_view text);
void save_dataset(const std::vector<LabeledSample>& samples, const std::string& path);
std::vector<LabeledSample> load_dataset(const std::string& path);

struct EmbeddingRecord {
  std::string id;
  ClassId class_id = 0;
  Attributes attributes;
  Vector embedding;

  bool operator==(const EmbeddingRecord&) const = default;
};

std::string embeddings_to_text(const std::vector<EmbeddingRecord>& records);
/// Rows whose norm differs from 1 by more than 1e-12 are normalized; unit rows
/// are kept bit-for-bit. A zero row is a ParseError.
std::vector<EmbeddingRecord> embeddings_from_text(std::string_view text);
void save_embeddings(const std::vector<EmbeddingRecord>& records, const std::string& path);
std::vector<EmbeddingRecord> load_embeddings(const std::string& path);

}  // namespace fairmargin
