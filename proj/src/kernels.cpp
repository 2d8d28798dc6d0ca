#include "fairmargin/kernels.hpp"

#include <algorithm>

#include "fairmargin/error.hpp"
#include "fairmargin/parallel.hpp"

namespace fairmargin {

namespace {

struct SampleGradient {
  double loss = 0.0;
  EncoderGrads encoder;
  Matrix head;
};

SampleGradient sample_gradient(const Model& model, std::span<const double> input,
                               ClassId label, const MarginParams& mp, double d_c) {
  const EncoderForward fwd = forward(model.encoder, input);
  LossGrad lg = fair_margin_loss(fwd.embedding, label, model.head, mp, d_c);
  return {lg.loss, backward(model.encoder, fwd.tape, lg.d_embedding), std::move(lg.d_weights)};
}

void check_inputs(const Model& model, std::span<const Vector> inputs,
                  std::span<const ClassId> labels, std::span<const std::size_t> batch,
                  std::span<const double> d) {
  if (batch.empty()) throw Error(ErrorCode::kEmptyBatch, "batch has no samples");
  if (inputs.size() != labels.size()) {
    throw Error(ErrorCode::kShapeMismatch, "inputs and labels differ in length");
  }
  if (d.size() != model.head.class_count()) {
    throw Error(ErrorCode::kShapeMismatch, "margin coefficients do not match class count");
  }
  for (std::size_t i : batch) {
    if (i >= inputs.size()) throw Error(ErrorCode::kShapeMismatch, "batch index out of range");
  }
}

void add_into(std::span<double> acc, std::span<const double> term) {
  for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += term[k];
}

void scale_by(std::span<double> v, double s) {
  for (double& x : v) x *= s;
}

BatchGradient reduce(const Model& model, std::vector<SampleGradient>& terms) {
  BatchGradient out;
  out.grads = zeros_like(model);
  for (const auto& t : terms) {
    out.loss += t.loss;
    for (std::size_t l = 0; l < out.grads.encoder.size(); ++l) {
      add_into(out.grads.encoder[l].weights.flat(), t.encoder.layers[l].weights.flat());
      add_into(out.grads.encoder[l].bias, t.encoder.layers[l].bias);
    }
    add_into(out.grads.head.flat(), t.head.flat());
  }
  const double inv = 1.0 / static_cast<double>(terms.size());
  out.loss *= inv;
  for (auto& layer : out.grads.encoder) {
    scale_by(layer.weights.flat(), inv);
    scale_by(layer.bias, inv);
  }
  scale_by(out.grads.head.flat(), inv);
  return out;
}

double own_confidence(const Model& model, std::span<const double> input, ClassId label,
                      double scale) {
  const Vector probs = softmax(cosine_logits(embed(model.encoder, input), model.head, scale));
  if (label < 0 || static_cast<std::size_t>(label) >= probs.size()) {
    throw Error(ErrorCode::kLabelOutOfRange, "label " + std::to_string(label));
  }
  return probs[static_cast<std::size_t>(label)];
}

}  // namespace

BatchGradient model_batch_gradient(const Model& model, std::span<const Vector> inputs,
                                   std::span<const ClassId> labels,
                                   std::span<const std::size_t> batch,
                                   const MarginParams& mp, std::span<const double> d) {
  check_inputs(model, inputs, labels, batch, d);
  std::vector<SampleGradient> terms(batch.size());
  parallel_for(batch.size(), [&](std::size_t b) {
    const std::size_t i = batch[b];
    const ClassId y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= d.size()) {
      throw Error(ErrorCode::kLabelOutOfRange, "label " + std::to_string(y));
    }
    terms[b] = sample_gradient(model, inputs[i], y, mp, d[static_cast<std::size_t>(y)]);
  });
  return reduce(model, terms);
}

BatchGradient model_batch_gradient_serial(const Model& model,
                                          std::span<const Vector> inputs,
                                          std::span<const ClassId> labels,
                                          std::span<const std::size_t> batch,
                                          const MarginParams& mp,
                                          std::span<const double> d) {
  check_inputs(model, inputs, labels, batch, d);
  std::vector<SampleGradient> terms;
  terms.reserve(batch.size());
  for (std::size_t i : batch) {
    const ClassId y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= d.size()) {
      throw Error(ErrorCode::kLabelOutOfRange, "label " + std::to_string(y));
    }
    terms.push_back(sample_gradient(model, inputs[i], y, mp, d[static_cast<std::size_t>(y)]));
  }
  return reduce(model, terms);
}

std::vector<Vector> embed_all(const EncoderParams& encoder, std::span<const Vector> inputs) {
  std::vector<Vector> out(inputs.size());
  parallel_for(inputs.size(), [&](std::size_t i) { out[i] = embed(encoder, inputs[i]); });
  return out;
}

std::vector<Vector> embed_all_serial(const EncoderParams& encoder,
                                     std::span<const Vector> inputs) {
  std::vector<Vector> out;
  out.reserve(inputs.size());
  for (const auto& x : inputs) out.push_back(embed(encoder, x));
  return out;
}

Vector true_class_confidences(const Model& model, std::span<const Vector> inputs,
                              std::span<const ClassId> labels, double scale) {
  if (inputs.size() != labels.size()) {
    throw Error(ErrorCode::kShapeMismatch, "inputs and labels differ in length");
  }
  Vector out(inputs.size());
  parallel_for(inputs.size(), [&](std::size_t i) {
    out[i] = own_confidence(model, inputs[i], labels[i], scale);
  });
  return out;
}

Vector true_class_confidences_serial(const Model& model, std::span<const Vector> inputs,
                                     std::span<const ClassId> labels, double scale) {
  if (inputs.size() != labels.size()) {
    throw Error(ErrorCode::kShapeMismatch, "inputs and labels differ in length");
  }
  Vector out(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    out[i] = own_confidence(model, inputs[i], labels[i], scale);
  }
  return out;
}

ConfidenceAccumulator accumulate_confidences(const Model& model,
                                             std::span<const Vector> inputs,
                                             std::span<const ClassId> labels,
                                             double scale) {
  const Vector conf = true_class_confidences(model, inputs, labels, scale);
  ConfidenceAccumulator acc(model.head.class_count());
  for (std::size_t i = 0; i < conf.size(); ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    acc.sum_conf[c] += conf[i];
    acc.count[c] += 1;
  }
  return acc;
}

double classification_accuracy(const Model& model, std::span<const Vector> inputs,
                               std::span<const ClassId> labels) {
  if (inputs.empty()) return 0.0;
  std::vector<char> correct(inputs.size(), 0);
  parallel_for(inputs.size(), [&](std::size_t i) {
    const Vector cos = cosines(embed(model.encoder, inputs[i]), model.head);
    const auto best = std::max_element(cos.begin(), cos.end()) - cos.begin();
    correct[i] = best == labels[i] ? 1 : 0;
  });
  std::size_t hits = 0;
  for (char c : correct) hits += static_cast<std::size_t>(c);
  return static_cast<double>(hits) / static_cast<double>(inputs.size());
}

}  // namespace fairmargin
