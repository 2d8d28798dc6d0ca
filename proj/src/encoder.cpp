#include "fairmargin/encoder.hpp"

#include <cmath>
#include <string>

#include "fairmargin/error.hpp"
#include "fairmargin/textio.hpp"

namespace fairmargin {

namespace {

constexpr std::string_view kEncoderHeader = "fairmargin-encoder v1";

double activate(Activation a, double z) {
  return a == Activation::kTanh ? std::tanh(z) : (z > 0.0 ? z : 0.0);
}

// Derivative in terms of the pre-activation.
double activate_grad(Activation a, double z) {
  if (a == Activation::kTanh) {
    const double t = std::tanh(z);
    return 1.0 - t * t;
  }
  return z > 0.0 ? 1.0 : 0.0;
}

[[noreturn]] void parse_fail(std::size_t line, const std::string& what) {
  throw Error(ErrorCode::kParseError, "line " + std::to_string(line) + ": " + what);
}

}  // namespace

std::string_view to_string(Activation a) {
  return a == Activation::kTanh ? "tanh" : "relu";
}

Activation parse_activation(std::string_view text) {
  if (text == "tanh") return Activation::kTanh;
  if (text == "relu") return Activation::kRelu;
  throw Error(ErrorCode::kConfigInvalid, "unknown activation '" + std::string(text) + "'");
}

void validate(const EncoderSpec& spec) {
  if (spec.layer_widths.size() < 2) {
    throw Error(ErrorCode::kConfigInvalid, "encoder needs at least one layer");
  }
  for (std::size_t w : spec.layer_widths) {
    if (w == 0) throw Error(ErrorCode::kConfigInvalid, "layer widths must be >= 1");
  }
  if (spec.activations.size() != spec.layer_widths.size() - 2) {
    throw Error(ErrorCode::kConfigInvalid,
                "expected one activation per hidden layer");
  }
}

EncoderSpec make_encoder_spec(std::size_t input_dim,
                              const std::vector<std::size_t>& hidden,
                              std::size_t embedding_dim, Activation activation) {
  EncoderSpec spec;
  spec.layer_widths.push_back(input_dim);
  spec.layer_widths.insert(spec.layer_widths.end(), hidden.begin(), hidden.end());
  spec.layer_widths.push_back(embedding_dim);
  spec.activations.assign(hidden.size(), activation);
  validate(spec);
  return spec;
}

std::size_t EncoderParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.weights.size() + layer.bias.size();
  return n;
}

EncoderParams init_params(const EncoderSpec& spec, Rng& rng) {
  validate(spec);
  EncoderParams params;
  params.spec = spec;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const std::size_t fan_in = spec.layer_widths[l];
    const std::size_t fan_out = spec.layer_widths[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    DenseLayer layer{Matrix(fan_out, fan_in), Vector(fan_out, 0.0)};
    for (double& w : layer.weights.flat()) w = rng.uniform(-bound, bound);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

EncoderForward forward(const EncoderParams& params, std::span<const double> input) {
  if (input.size() != params.spec.input_dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "encoder input dim " + std::to_string(input.size()) + ", expected " +
                    std::to_string(params.spec.input_dim()));
  }
  EncoderForward out;
  auto& tape = out.tape;
  const std::size_t layers = params.layers.size();
  tape.layer_inputs.reserve(layers);
  tape.pre_activation.reserve(layers);

  Vector current(input.begin(), input.end());
  for (std::size_t l = 0; l < layers; ++l) {
    const auto& layer = params.layers[l];
    Vector z(layer.bias);
    for (std::size_t r = 0; r < z.size(); ++r) z[r] += dot(layer.weights.row(r), current);
    tape.layer_inputs.push_back(std::move(current));
    current = z;
    if (l + 1 < layers) {
      const Activation act = params.spec.activations[l];
      for (double& v : current) v = activate(act, v);
    }
    tape.pre_activation.push_back(std::move(z));
  }
  tape.output_norm = l2_normalize_inplace(current);
  tape.embedding = current;
  out.embedding = std::move(current);
  return out;
}

Vector embed(const EncoderParams& params, std::span<const double> input) {
  return forward(params, input).embedding;
}

EncoderGrads zero_grads(const EncoderParams& params) {
  EncoderGrads g;
  for (const auto& layer : params.layers) {
    g.layers.push_back({Matrix(layer.weights.rows(), layer.weights.cols()),
                        Vector(layer.bias.size(), 0.0)});
  }
  g.d_input.assign(params.spec.input_dim(), 0.0);
  return g;
}

EncoderGrads backward(const EncoderParams& params, const EncoderTape& tape,
                      std::span<const double> upstream) {
  const std::size_t layers = params.layers.size();
  bool shapes_ok = tape.layer_inputs.size() == layers &&
                   tape.pre_activation.size() == layers &&
                   tape.embedding.size() == params.spec.embedding_dim();
  for (std::size_t l = 0; shapes_ok && l < layers; ++l) {
    shapes_ok = tape.layer_inputs[l].size() == params.layers[l].weights.cols() &&
                tape.pre_activation[l].size() == params.layers[l].weights.rows();
  }
  if (!shapes_ok) throw Error(ErrorCode::kTapeMismatch, "tape does not match encoder shape");
  if (upstream.size() != tape.embedding.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "upstream gradient has wrong length");
  }

  EncoderGrads g = zero_grads(params);

  // Normalization Jacobian: (I - e e^T) / ||r||.
  const double along = dot(upstream, tape.embedding);
  Vector delta(upstream.size());
  for (std::size_t k = 0; k < delta.size(); ++k) {
    delta[k] = (upstream[k] - tape.embedding[k] * along) / tape.output_norm;
  }

  for (std::size_t l = layers; l-- > 0;) {
    const auto& layer = params.layers[l];
    const auto& in = tape.layer_inputs[l];
    auto& gl = g.layers[l];
    Vector d_in(in.size(), 0.0);
    for (std::size_t r = 0; r < delta.size(); ++r) {
      gl.bias[r] = delta[r];
      auto dw = gl.weights.row(r);
      const auto w = layer.weights.row(r);
      for (std::size_t c = 0; c < in.size(); ++c) {
        dw[c] = delta[r] * in[c];
        d_in[c] += delta[r] * w[c];
      }
    }
    if (l == 0) {
      g.d_input = std::move(d_in);
    } else {
      const Activation act = params.spec.activations[l - 1];
      const auto& pre = tape.pre_activation[l - 1];
      for (std::size_t c = 0; c < d_in.size(); ++c) d_in[c] *= activate_grad(act, pre[c]);
      delta = std::move(d_in);
    }
  }
  return g;
}

std::string encoder_to_text(const EncoderParams& params) {
  std::string out;
  out += kEncoderHeader;
  out += "\nwidths";
  for (std::size_t w : params.spec.layer_widths) out += ',' + std::to_string(w);
  out += "\nactivations";
  for (Activation a : params.spec.activations) {
    out += ',';
    out += to_string(a);
  }
  out += '\n';
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    out += "weights," + std::to_string(l);
    for (double v : params.layers[l].weights.flat()) out += ',' + textio::format_double(v);
    out += "\nbias," + std::to_string(l);
    for (double v : params.layers[l].bias) out += ',' + textio::format_double(v);
    out += '\n';
  }
  return out;
}

EncoderParams encoder_from_text(std::string_view text) {
  textio::LineReader reader(text);
  std::string_view line;
  if (!reader.next(line) || line != kEncoderHeader) parse_fail(1, "unexpected encoder header");

  EncoderParams params;
  if (!reader.next(line)) parse_fail(2, "missing widths");
  auto fields = textio::split(line, ',');
  if (fields.front() != "widths") parse_fail(reader.line_number(), "expected widths");
  for (std::size_t i = 1; i < fields.size(); ++i) {
    const auto w = textio::parse_int(fields[i], "width");
    if (w <= 0) parse_fail(reader.line_number(), "width must be positive");
    params.spec.layer_widths.push_back(static_cast<std::size_t>(w));
  }
  if (!reader.next(line)) parse_fail(3, "missing activations");
  fields = textio::split(line, ',');
  if (fields.front() != "activations") parse_fail(reader.line_number(), "expected activations");
  for (std::size_t i = 1; i < fields.size(); ++i) {
    params.spec.activations.push_back(parse_activation(fields[i]));
  }
  try {
    validate(params.spec);
  } catch (const Error& e) {
    throw Error(ErrorCode::kSchemaMismatch, e.what());
  }

  for (std::size_t l = 0; l < params.spec.layer_count(); ++l) {
    const std::size_t in = params.spec.layer_widths[l];
    const std::size_t out = params.spec.layer_widths[l + 1];
    DenseLayer layer{Matrix(out, in), Vector(out)};

    if (!reader.next(line)) parse_fail(reader.line_number() + 1, "missing weights");
    fields = textio::split(line, ',');
    if (fields.size() != 2 + out * in || fields[0] != "weights" ||
        textio::parse_int(fields[1], "layer") != static_cast<long long>(l)) {
      parse_fail(reader.line_number(), "malformed weights for layer " + std::to_string(l));
    }
    auto flat = layer.weights.flat();
    for (std::size_t k = 0; k < flat.size(); ++k) flat[k] = textio::parse_double(fields[k + 2], "weight");

    if (!reader.next(line)) parse_fail(reader.line_number() + 1, "missing bias");
    fields = textio::split(line, ',');
    if (fields.size() != 2 + out || fields[0] != "bias" ||
        textio::parse_int(fields[1], "layer") != static_cast<long long>(l)) {
      parse_fail(reader.line_number(), "malformed bias for layer " + std::to_string(l));
    }
    for (std::size_t k = 0; k < out; ++k) layer.bias[k] = textio::parse_double(fields[k + 2], "bias");
    params.layers.push_back(std::move(layer));
  }
  return params;
}

}  // namespace fairmargin
