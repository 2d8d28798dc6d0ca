#pragma once

// Class favoritism: how far each class's mean softmax confidence sits above
// or below the unweighted mean over classes, and the margin coefficient that
// follows from it. Recomputed once per epoch.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "fairmargin/core.hpp"
#include "fairmargin/loss.hpp"

namespace fairmargin {

struct FairnessParams {
  /// Steepness of d_c as a function of f_c. 0 disables the mechanism.
  double gamma = 10.0;
  /// Damping applied on the favored side (f_c >= 0), in [0, 1].
  double harmony = 1.0;
};

void validate(const FairnessParams& params);

/// Streaming per-class sums of the true-class confidence.
struct ConfidenceAccumulator {
  Vector sum_conf;
  std::vector<std::size_t> count;

  ConfidenceAccumulator() = default;
  explicit ConfidenceAccumulator(std::size_t class_count)
      : sum_conf(class_count, 0.0), count(class_count, 0) {}

  std::size_t class_count() const noexcept { return count.size(); }

  /// sum_conf[label] += probs[label]; count[label] += 1.
  void add(ClassId label, std::span<const double> probs);
  void merge(const ConfidenceAccumulator& other);

  bool operator==(const ConfidenceAccumulator&) const = default;
};

ConfidenceAccumulator accumulate(ConfidenceAccumulator acc, ClassId label,
                                 std::span<const double> probs);

struct FavoritismState {
  Vector mean_conf;
  double grand_mean = 0.0;
  Vector favoritism;
  Vector margin_coeff;
  int epoch = 0;

  /// Before anything has been measured: zero confidences and d_c = 1, so the
  /// first epoch trains as plain ArcFace.
  static FavoritismState initial(std::size_t class_count);

  std::size_t class_count() const noexcept { return margin_coeff.size(); }
  bool operator==(const FavoritismState&) const = default;
};

/// Fills mean_conf, grand_mean and favoritism. margin_coeff is left empty.
/// Throws EmptyClass naming the first class with no samples.
FavoritismState finalize_favoritism(const ConfidenceAccumulator& acc);

/// d_c = 2 / (1 + exp(gamma * f_c))            for f_c < 0
///       2 / (1 + exp(gamma * harmony * f_c))  for f_c >= 0
double margin_coefficient(double favoritism, const FairnessParams& params);

/// End-of-epoch update: finalize, map margin_coefficient, advance the epoch.
FavoritismState update_state(const FavoritismState& state,
                             const ConfidenceAccumulator& acc,
                             const FairnessParams& params);

/// Versioned text table: a header, epoch and grand mean lines, then one
/// `class,mean_conf,favoritism,margin_coeff` row per class.
std::string favoritism_to_text(const FavoritismState& state);
FavoritismState favoritism_from_text(std::string_view text);

void save_favoritism(const FavoritismState& state, const std::string& path);
FavoritismState load_favoritism(const std::string& path);

/// Per-epoch history as one flat table:
/// `epoch,class,mean_conf,grand_mean,favoritism,margin_coeff`.
std::string favoritism_history_to_text(const std::vector<FavoritismState>& history);
std::vector<FavoritismState> favoritism_history_from_text(std::string_view text);

}  // namespace fairmargin
