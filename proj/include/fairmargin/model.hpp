#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "fairmargin/encoder.hpp"
#include "fairmargin/favoritism.hpp"
#include "fairmargin/loss.hpp"

namespace fairmargin {

/// Encoder followed by the cosine classifier head.
struct Model {
  EncoderParams encoder;
  ClassifierHead head;

  bool operator==(const Model&) const = default;
};

/// Gradients (or optimizer velocity) shaped like a Model.
struct ModelGrads {
  std::vector<DenseLayer> encoder;
  Matrix head;

  bool operator==(const ModelGrads&) const = default;
};

ModelGrads zeros_like(const Model& model);

/// Everything needed to resume or evaluate a run.
struct Checkpoint {
  Model model;
  FavoritismState favoritism;

  bool operator==(const Checkpoint&) const = default;
};

std::string head_to_text(const ClassifierHead& head);
/// Rows are taken verbatim; no renormalization on load.
ClassifierHead head_from_text(std::string_view text);

/// Sections [encoder], [head], [favoritism] under a versioned header.
std::string checkpoint_to_text(const Checkpoint& ckpt);
Checkpoint checkpoint_from_text(std::string_view text);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace fairmargin
