#include "fairmargin/loss.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "fairmargin/error.hpp"
#include "fairmargin/parallel.hpp"

namespace fairmargin {

namespace {

// The target angle is held below pi - 1e-3.
const double kTargetCosineFloor = std::cos(std::numbers::pi - 1e-3);

void check_label(ClassId label, const ClassifierHead& head) {
  if (label < 0 || static_cast<std::size_t>(label) >= head.class_count()) {
    throw Error(ErrorCode::kLabelOutOfRange,
                "label " + std::to_string(label) + " with " +
                    std::to_string(head.class_count()) + " classes");
  }
}

// Cross-entropy of logits {s*cos theta_j} with the target replaced by
// s*cos(theta_y + margin). margin == 0 reproduces plain softmax exactly.
LossGrad angular_margin_loss(std::span<const double> x, ClassId label,
                             const ClassifierHead& head, double scale,
                             double margin) {
  check_label(label, head);
  if (x.size() != head.dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "embedding dim " + std::to_string(x.size()) + " vs head dim " +
                    std::to_string(head.dim()));
  }
  const std::size_t classes = head.class_count();
  const auto y = static_cast<std::size_t>(label);

  Vector cos(classes);
  std::vector<bool> active(classes, true);
  for (std::size_t j = 0; j < classes; ++j) {
    const double raw = dot(x, head.column(j));
    cos[j] = std::clamp(raw, -1.0 + kCosineEpsilon, 1.0 - kCosineEpsilon);
    active[j] = cos[j] == raw;
  }
  if (cos[y] < kTargetCosineFloor) {
    cos[y] = kTargetCosineFloor;
    active[y] = false;
  }

  const double cos_m = std::cos(margin);
  const double sin_m = std::sin(margin);
  const double sin_t = std::sqrt(1.0 - cos[y] * cos[y]);

  Vector logits(classes);
  for (std::size_t j = 0; j < classes; ++j) logits[j] = scale * cos[j];
  logits[y] = scale * (cos[y] * cos_m - sin_t * sin_m);

  LossGrad out;
  out.loss = log_sum_exp(logits) - logits[y];

  const Vector probs = softmax(logits);
  Vector g(classes);
  for (std::size_t j = 0; j < classes; ++j) g[j] = scale * probs[j];
  g[y] = scale * (probs[y] - 1.0) * (cos_m + cos[y] * sin_m / sin_t);
  for (std::size_t j = 0; j < classes; ++j) {
    if (!active[j]) g[j] = 0.0;
  }

  out.d_embedding.assign(x.size(), 0.0);
  out.d_weights = Matrix(classes, x.size());
  for (std::size_t j = 0; j < classes; ++j) {
    const auto w = head.column(j);
    auto dw = out.d_weights.row(j);
    for (std::size_t k = 0; k < x.size(); ++k) {
      out.d_embedding[k] += g[j] * w[k];
      dw[k] = g[j] * x[k];
    }
  }
  return out;
}

}  // namespace

ClassifierHead::ClassifierHead(Matrix weights) : weights_(std::move(weights)) {
  renormalize();
}

ClassifierHead ClassifierHead::random(std::size_t class_count, std::size_t dim,
                                      Rng& rng) {
  Matrix w(class_count, dim);
  for (double& v : w.flat()) v = rng.normal();
  return ClassifierHead(std::move(w));
}

void ClassifierHead::renormalize() {
  for (std::size_t c = 0; c < weights_.rows(); ++c) {
    l2_normalize_inplace(weights_.row(c));
  }
}

void validate(const MarginParams& mp) {
  if (!(mp.scale > 0.0) || !std::isfinite(mp.scale)) {
    throw Error(ErrorCode::kConfigInvalid, "scale must be positive");
  }
  if (!(mp.margin >= 0.0) || !(mp.margin < std::numbers::pi / 2)) {
    throw Error(ErrorCode::kConfigInvalid, "margin must lie in [0, pi/2)");
  }
}

Vector cosines(std::span<const double> x, const ClassifierHead& head) {
  Vector out(head.class_count());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = cosine(x, head.column(j));
  return out;
}

Vector cosine_logits(std::span<const double> x, const ClassifierHead& head,
                     double scale) {
  Vector out = cosines(x, head);
  for (double& z : out) z *= scale;
  return out;
}

LossGrad softmax_ce_loss(std::span<const double> x, ClassId label,
                         const ClassifierHead& head, double scale) {
  return angular_margin_loss(x, label, head, scale, 0.0);
}

LossGrad arcface_loss(std::span<const double> x, ClassId label,
                      const ClassifierHead& head, const MarginParams& mp) {
  validate(mp);
  return angular_margin_loss(x, label, head, mp.scale, mp.margin);
}

LossGrad fair_margin_loss(std::span<const double> x, ClassId label,
                          const ClassifierHead& head, const MarginParams& mp,
                          double d_c) {
  validate(mp);
  if (!std::isfinite(d_c) || d_c < 0.0) {
    throw Error(ErrorCode::kConfigInvalid,
                "margin coefficient must be finite and non-negative");
  }
  const double effective = d_c * mp.margin;
  if (effective >= std::numbers::pi / 2) {
    throw Error(ErrorCode::kMarginOverflow,
                "d_c * m = " + std::to_string(effective) + " >= pi/2");
  }
  return angular_margin_loss(x, label, head, mp.scale, effective);
}

namespace {

void check_batch(std::span<const Vector> xs, std::span<const ClassId> labels,
                 const ClassifierHead& head, std::span<const double> d) {
  if (xs.empty()) throw Error(ErrorCode::kEmptyBatch, "batch has no samples");
  if (xs.size() != labels.size()) {
    throw Error(ErrorCode::kShapeMismatch, "embeddings and labels differ in length");
  }
  if (d.size() != head.class_count()) {
    throw Error(ErrorCode::kShapeMismatch,
                "margin coefficient vector does not match class count");
  }
  for (ClassId label : labels) check_label(label, head);
}

BatchLossGrad reduce(std::vector<LossGrad>& terms, const ClassifierHead& head) {
  const double inv = 1.0 / static_cast<double>(terms.size());
  BatchLossGrad out;
  out.d_weights = Matrix(head.class_count(), head.dim());
  out.d_embeddings.reserve(terms.size());
  auto dw = out.d_weights.flat();
  for (auto& term : terms) {
    out.loss += term.loss;
    const auto tw = term.d_weights.flat();
    for (std::size_t k = 0; k < dw.size(); ++k) dw[k] += tw[k];
    for (double& v : term.d_embedding) v *= inv;
    out.d_embeddings.push_back(std::move(term.d_embedding));
  }
  out.loss *= inv;
  for (double& v : dw) v *= inv;
  return out;
}

}  // namespace

BatchLossGrad batch_loss(std::span<const Vector> xs, std::span<const ClassId> labels,
                         const ClassifierHead& head, const MarginParams& mp,
                         std::span<const double> d) {
  check_batch(xs, labels, head, d);
  validate(mp);
  std::vector<LossGrad> terms(xs.size());
  parallel_for(xs.size(), [&](std::size_t i) {
    const ClassId y = labels[i];
    terms[i] = fair_margin_loss(xs[i], y, head, mp, d[static_cast<std::size_t>(y)]);
  });
  return reduce(terms, head);
}

BatchLossGrad batch_loss_serial(std::span<const Vector> xs,
                                std::span<const ClassId> labels,
                                const ClassifierHead& head, const MarginParams& mp,
                                std::span<const double> d) {
  check_batch(xs, labels, head, d);
  validate(mp);
  std::vector<LossGrad> terms;
  terms.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const ClassId y = labels[i];
    terms.push_back(fair_margin_loss(xs[i], y, head, mp, d[static_cast<std::size_t>(y)]));
  }
  return reduce(terms, head);
}

}  // namespace fairmargin
