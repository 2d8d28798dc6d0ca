#pragma once

// Data-parallel kernels over samples. Each kernel has a *_serial twin that
// runs the same per-sample code in a plain loop; the parallel version fans
// the per-sample work out with OpenMP and reduces in sample order, so both
// produce identical bits. The serial versions are kept for tests and the
// benchmark.

#include <cstddef>
#include <span>
#include <vector>

#include "fairmargin/favoritism.hpp"
#include "fairmargin/model.hpp"

namespace fairmargin {

struct BatchGradient {
  double loss = 0.0;  // mean over the batch
  ModelGrads grads;   // gradient of the mean loss
};

/// Mean fair-margin loss of the samples at `batch` and its gradient with
/// respect to every encoder and head parameter. `d` holds one margin
/// coefficient per class.
BatchGradient model_batch_gradient(const Model& model, std::span<const Vector> inputs,
                                   std::span<const ClassId> labels,
                                   std::span<const std::size_t> batch,
                                   const MarginParams& mp, std::span<const double> d);
BatchGradient model_batch_gradient_serial(const Model& model,
                                          std::span<const Vector> inputs,
                                          std::span<const ClassId> labels,
                                          std::span<const std::size_t> batch,
                                          const MarginParams& mp,
                                          std::span<const double> d);

std::vector<Vector> embed_all(const EncoderParams& encoder, std::span<const Vector> inputs);
std::vector<Vector> embed_all_serial(const EncoderParams& encoder,
                                     std::span<const Vector> inputs);

/// Margin-free softmax confidence of each sample's own class.
Vector true_class_confidences(const Model& model, std::span<const Vector> inputs,
                              std::span<const ClassId> labels, double scale);
Vector true_class_confidences_serial(const Model& model, std::span<const Vector> inputs,
                                     std::span<const ClassId> labels, double scale);

/// Confidences accumulated per class, in sample order.
ConfidenceAccumulator accumulate_confidences(const Model& model,
                                             std::span<const Vector> inputs,
                                             std::span<const ClassId> labels,
                                             double scale);

/// Top-1 accuracy of argmax_j cos(theta_j); ties go to the lowest class id.
double classification_accuracy(const Model& model, std::span<const Vector> inputs,
                               std::span<const ClassId> labels);

}  // namespace fairmargin
