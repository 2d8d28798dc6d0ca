#pragma once

// Finite-difference verification of the analytical gradients.
//
// The reference side re-evaluates each objective forward-only in 113-bit
// binary floating point (angles through acos/cos instead of the angle
// addition identity used by the analytical path) and takes central
// differences there, so round-off in the oracle stays far below the
// tolerances even at scale 64.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace fairmargin {

struct GradCheckOptions {
  std::size_t configurations = 100;
  std::uint64_t seed = 0;
  double step = 1e-6;
  double loss_tolerance = 1e-5;
  double encoder_tolerance = 1e-5;
  double end_to_end_tolerance = 1e-4;
  /// Coordinates where both gradients are at most this large are skipped.
  double min_grad = 1e-8;
  /// Test hook: analytical gradients are multiplied by (1 + corrupt) before
  /// comparison. Any non-zero value should make the check fail.
  double corrupt = 0.0;
};

struct GradCheckSection {
  std::string name;
  double tolerance = 0.0;
  std::size_t cases = 0;
  std::size_t coordinates = 0;
  std::size_t skipped = 0;
  double worst_rel_error = 0.0;

  bool passed() const { return worst_rel_error < tolerance && coordinates > 0; }
};

struct GradCheckReport {
  /// loss:softmax, loss:arcface, loss:fair, encoder, end-to-end.
  std::vector<GradCheckSection> sections;
  double seconds = 0.0;

  bool passed() const;
  /// Worst error of sections whose name starts with `prefix`.
  double worst(const std::string& prefix) const;
};

/// Relative error used throughout: |a - b| / max(|a|, |b|), 0 when both are 0.
double relative_error(double a, double b);

GradCheckReport run_grad_check(const GradCheckOptions& options);

/// Human-readable summary with one line per section and a final verdict.
std::string format_grad_check(const GradCheckReport& report);

}  // namespace fairmargin
