#pragma once

// Softmax cross-entropy, additive angular margin (ArcFace) and the per-class
// scaled angular margin, with analytical gradients with respect to the
// embedding and the classifier weights.

#include <cstddef>
#include <span>
#include <vector>

#include "fairmargin/core.hpp"

namespace fairmargin {

using ClassId = int;

/// |C| unit-norm class prototypes in R^d, one per row. There are no bias terms.
class ClassifierHead {
 public:
  ClassifierHead() = default;
  /// Takes ownership of the rows and normalizes each one.
  explicit ClassifierHead(Matrix weights);

  /// Rows drawn from an isotropic Gaussian, then normalized.
  static ClassifierHead random(std::size_t class_count, std::size_t dim, Rng& rng);

  std::size_t class_count() const noexcept { return weights_.rows(); }
  std::size_t dim() const noexcept { return weights_.cols(); }

  const Matrix& weights() const noexcept { return weights_; }
  Matrix& mutable_weights() noexcept { return weights_; }
  std::span<const double> column(std::size_t c) const { return weights_.row(c); }

  /// Rescales every prototype to unit norm.
  void renormalize();

  bool operator==(const ClassifierHead&) const = default;

 private:
  Matrix weights_;
};

struct MarginParams {
  double scale = 64.0;
  double margin = 0.3;
};

/// Throws ConfigInvalid unless scale > 0 and 0 <= margin < pi/2.
void validate(const MarginParams& mp);

struct LossGrad {
  double loss = 0.0;
  Vector d_embedding;
  Matrix d_weights;
};

struct BatchLossGrad {
  double loss = 0.0;
  /// d(mean loss)/d(x_i), one entry per sample.
  std::vector<Vector> d_embeddings;
  Matrix d_weights;
};

/// Clamped cosines between x and every prototype.
Vector cosines(std::span<const double> x, const ClassifierHead& head);

/// Margin-free logits s*cos(theta_j); the inference-mode scores.
Vector cosine_logits(std::span<const double> x, const ClassifierHead& head,
                     double scale);

/// -log softmax(s*cos theta)_label.
LossGrad softmax_ce_loss(std::span<const double> x, ClassId label,
                         const ClassifierHead& head, double scale);

/// Target logit s*cos(theta_label + m).
LossGrad arcface_loss(std::span<const double> x, ClassId label,
                      const ClassifierHead& head, const MarginParams& mp);

/// ArcFace with the target margin scaled by the class coefficient d_c.
/// d_c is a constant here: no gradient is produced for it. Throws
/// MarginOverflow when d_c * m >= pi/2.
LossGrad fair_margin_loss(std::span<const double> x, ClassId label,
                          const ClassifierHead& head, const MarginParams& mp,
                          double d_c);

/// Mean of fair_margin_loss over a batch, looking up d[label] per sample.
/// Per-sample terms may be evaluated in parallel; the reduction runs in sample
/// order so the result does not depend on the worker count.
BatchLossGrad batch_loss(std::span<const Vector> xs, std::span<const ClassId> labels,
                         const ClassifierHead& head, const MarginParams& mp,
                         std::span<const double> d);

/// Sequential reference for batch_loss.
BatchLossGrad batch_loss_serial(std::span<const Vector> xs,
                                std::span<const ClassId> labels,
                                const ClassifierHead& head, const MarginParams& mp,
                                std::span<const double> d);

}  // namespace fairmargin
