#pragma once

// Small fully connected encoder: hidden layers with tanh or relu, a linear
// output layer, then L2 normalization. Stands in for a convolutional backbone.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "fairmargin/core.hpp"

namespace fairmargin {

enum class Activation { kTanh, kRelu };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view text);

struct EncoderSpec {
  /// input dim, hidden widths..., embedding dim. At least two entries.
  std::vector<std::size_t> layer_widths;
  /// One per hidden layer (layer_widths.size() - 2 entries).
  std::vector<Activation> activations;

  std::size_t layer_count() const noexcept {
    return layer_widths.empty() ? 0 : layer_widths.size() - 1;
  }
  std::size_t input_dim() const { return layer_widths.front(); }
  std::size_t embedding_dim() const { return layer_widths.back(); }

  bool operator==(const EncoderSpec&) const = default;
};

/// Throws ConfigInvalid.
void validate(const EncoderSpec& spec);

/// Hidden layers use the same activation.
EncoderSpec make_encoder_spec(std::size_t input_dim,
                              const std::vector<std::size_t>& hidden,
                              std::size_t embedding_dim, Activation activation);

struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;     // out

  bool operator==(const DenseLayer&) const = default;
};

struct EncoderParams {
  EncoderSpec spec;
  std::vector<DenseLayer> layers;

  std::size_t parameter_count() const;
  bool operator==(const EncoderParams&) const = default;
};

/// Glorot-uniform weights in [-a, a], a = sqrt(6 / (fan_in + fan_out));
/// zero biases.
EncoderParams init_params(const EncoderSpec& spec, Rng& rng);

/// Activations retained by forward for the backward pass.
struct EncoderTape {
  std::vector<Vector> layer_inputs;   // input to each layer
  std::vector<Vector> pre_activation; // affine output of each layer
  double output_norm = 0.0;           // ||last affine output||
  Vector embedding;                   // normalized output
};

struct EncoderForward {
  Vector embedding;
  EncoderTape tape;
};

/// Throws DimensionMismatch, or ZeroVector when the output is numerically zero.
EncoderForward forward(const EncoderParams& params, std::span<const double> input);

/// Forward without keeping the tape.
Vector embed(const EncoderParams& params, std::span<const double> input);

/// Gradients shaped like the parameters, plus the input gradient.
struct EncoderGrads {
  std::vector<DenseLayer> layers;
  Vector d_input;
};

/// Zero gradients shaped like params.
EncoderGrads zero_grads(const EncoderParams& params);

/// Reverse-mode pass through the normalization, the linear output layer and
/// every hidden layer. Throws TapeMismatch if the tape was not produced by a
/// network of this shape.
EncoderGrads backward(const EncoderParams& params, const EncoderTape& tape,
                      std::span<const double> upstream);

/// Versioned text form carrying the spec. Round-trips bit-exactly.
std::string encoder_to_text(const EncoderParams& params);
EncoderParams encoder_from_text(std::string_view text);

}  // namespace fairmargin
