#include "fairmargin/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <span>

#include <boost/multiprecision/float128.hpp>

#include "fairmargin/encoder.hpp"
#include "fairmargin/error.hpp"
#include "fairmargin/kernels.hpp"
#include "fairmargin/loss.hpp"
#include "fairmargin/textio.hpp"

namespace fairmargin {

namespace {

using Quad = boost::multiprecision::float128;
using QuadVec = std::vector<Quad>;

// ---- quad-precision forward reference --------------------------------------

Quad ref_dot(const Quad* a, const Quad* b, std::size_t n) {
  Quad acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

// -log softmax of {s cos theta_j} with the target angle shifted by `margin`.
Quad ref_margin_loss(const Quad* x, const Quad* head, std::size_t classes, std::size_t dim,
                     std::size_t label, Quad scale, Quad margin) {
  const Quad lo = Quad(-1.0 + kCosineEpsilon);
  const Quad hi = Quad(1.0 - kCosineEpsilon);
  QuadVec logits(classes);
  for (std::size_t j = 0; j < classes; ++j) {
    Quad c = ref_dot(x, head + j * dim, dim);
    c = c < lo ? lo : (c > hi ? hi : c);
    if (j == label) {
      Quad theta = acos(c);
      const Quad cap = Quad(std::numbers::pi - 1e-3);
      if (theta > cap) theta = cap;
      logits[j] = scale * cos(theta + margin);
    } else {
      logits[j] = scale * c;
    }
  }
  Quad top = logits[0];
  for (const Quad& z : logits) top = z > top ? z : top;
  Quad sum = 0;
  for (const Quad& z : logits) sum += exp(z - top);
  return top + log(sum) - logits[label];
}

// Encoder parameters flattened layer by layer: weights (row-major) then bias.
struct EncoderLayout {
  EncoderSpec spec;

  std::size_t size() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < spec.layer_widths.size(); ++l) {
      n += spec.layer_widths[l + 1] * (spec.layer_widths[l] + 1);
    }
    return n;
  }
};

QuadVec flatten(const EncoderParams& p) {
  QuadVec out;
  for (const auto& layer : p.layers) {
    for (double w : layer.weights.flat()) out.emplace_back(w);
    for (double b : layer.bias) out.emplace_back(b);
  }
  return out;
}

std::vector<double> flatten(const EncoderGrads& g) {
  std::vector<double> out;
  for (const auto& layer : g.layers) {
    out.insert(out.end(), layer.weights.flat().begin(), layer.weights.flat().end());
    out.insert(out.end(), layer.bias.begin(), layer.bias.end());
  }
  return out;
}

// Normalized embedding; `pattern` collects relu on/off bits when given.
QuadVec ref_encoder(const EncoderLayout& layout, const Quad* params, const Quad* input,
                    std::vector<char>* pattern) {
  const auto& widths = layout.spec.layer_widths;
  QuadVec current(input, input + widths.front());
  const std::size_t layers = widths.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = widths[l];
    const std::size_t out = widths[l + 1];
    const Quad* w = params;
    const Quad* b = params + out * in;
    QuadVec next(out);
    for (std::size_t r = 0; r < out; ++r) next[r] = ref_dot(w + r * in, current.data(), in) + b[r];
    params += out * (in + 1);
    if (l + 1 < layers) {
      const Activation act = layout.spec.activations[l];
      for (Quad& v : next) {
        if (act == Activation::kTanh) {
          v = tanh(v);
        } else {
          if (pattern) pattern->push_back(v > 0 ? 1 : 0);
          v = v > 0 ? v : Quad(0);
        }
      }
    }
    current = std::move(next);
  }
  Quad norm = sqrt(ref_dot(current.data(), current.data(), current.size()));
  for (Quad& v : current) v /= norm;
  return current;
}

// ---- comparison ------------------------------------------------------------

struct Comparison {
  GradCheckSection& section;
  double corrupt;
  double min_grad;

  void check(double analytic, const Quad& numeric_q) {
    analytic *= 1.0 + corrupt;
    const double numeric = static_cast<double>(numeric_q);
    if (std::max(std::abs(analytic), std::abs(numeric)) <= min_grad) {
      ++section.skipped;
      return;
    }
    ++section.coordinates;
    section.worst_rel_error = std::max(section.worst_rel_error, relative_error(analytic, numeric));
  }
};

// Central difference of f along coordinate k of theta, in quad precision.
// Returns false (skip) when `pattern_of` reports a relu switch inside the stencil.
bool central_difference(QuadVec& theta, std::size_t k, Quad h,
                        const std::function<Quad(const QuadVec&, std::vector<char>*)>& f,
                        bool track_pattern, Quad& out) {
  const Quad saved = theta[k];
  std::vector<char> base, plus_pat, minus_pat;
  if (track_pattern) f(theta, &base);
  theta[k] = saved + h;
  const Quad plus = f(theta, track_pattern ? &plus_pat : nullptr);
  theta[k] = saved - h;
  const Quad minus = f(theta, track_pattern ? &minus_pat : nullptr);
  theta[k] = saved;
  if (track_pattern && (plus_pat != base || minus_pat != base)) return false;
  out = (plus - minus) / (2 * h);
  return true;
}

// ---- random problem instances ------------------------------------------------

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

Vector random_unit(Rng& rng, std::size_t dim) {
  Vector v(dim);
  for (double& x : v) x = rng.normal();
  l2_normalize_inplace(v);
  return v;
}

struct Instance {
  std::size_t input_dim, dim, classes, batch;
  double scale, margin;
  Activation activation;
  std::vector<std::size_t> hidden;
};

Instance random_instance(Rng& rng, std::size_t index) {
  Instance in;
  in.input_dim = pick(rng, 1, 8);
  in.dim = pick(rng, 2, 8);
  in.classes = pick(rng, 2, 6);
  in.batch = pick(rng, 1, 4);
  in.scale = rng.uniform(1.0, 64.0);
  in.margin = rng.uniform(0.0, 0.5);
  in.activation = index % 4 == 3 ? Activation::kRelu : Activation::kTanh;
  const std::size_t depth = pick(rng, 0, 2);
  for (std::size_t l = 0; l < depth; ++l) in.hidden.push_back(pick(rng, 2, 8));
  return in;
}

void check_losses(const Instance& inst, Rng& rng, const GradCheckOptions& opt,
                  GradCheckSection* sections) {
  const ClassifierHead head = ClassifierHead::random(inst.classes, inst.dim, rng);
  const Vector x = random_unit(rng, inst.dim);
  const auto label = static_cast<ClassId>(rng.below(inst.classes));
  const double d_c = rng.uniform(0.1, 1.9);
  const MarginParams mp{inst.scale, inst.margin};

  const LossGrad analytic[3] = {
      softmax_ce_loss(x, label, head, inst.scale),
      arcface_loss(x, label, head, mp),
      fair_margin_loss(x, label, head, mp, d_c),
  };
  const double margins[3] = {0.0, inst.margin, d_c * inst.margin};

  // theta = [x, head rows]
  QuadVec theta;
  for (double v : x) theta.emplace_back(v);
  for (double v : head.weights().flat()) theta.emplace_back(v);
  const Quad h(opt.step);

  for (int variant = 0; variant < 3; ++variant) {
    GradCheckSection& section = sections[variant];
    ++section.cases;
    Comparison cmp{section, opt.corrupt, opt.min_grad};
    const auto f = [&](const QuadVec& t, std::vector<char>*) {
      return ref_margin_loss(t.data(), t.data() + inst.dim, inst.classes, inst.dim,
                             static_cast<std::size_t>(label), Quad(inst.scale),
                             Quad(margins[variant]));
    };
    const auto& a = analytic[variant];
    for (std::size_t k = 0; k < theta.size(); ++k) {
      Quad numeric;
      central_difference(theta, k, h, f, false, numeric);
      const double an = k < inst.dim ? a.d_embedding[k] : a.d_weights.flat()[k - inst.dim];
      cmp.check(an, numeric);
    }
  }
}

void check_encoder(const Instance& inst, Rng& rng, const GradCheckOptions& opt,
                   GradCheckSection& section) {
  const EncoderSpec spec = make_encoder_spec(inst.input_dim, inst.hidden, inst.dim, inst.activation);
  EncoderParams params = init_params(spec, rng);
  for (auto& layer : params.layers) {
    for (double& b : layer.bias) b = rng.uniform(-0.5, 0.5);
  }
  Vector input(inst.input_dim);
  for (double& v : input) v = rng.uniform(-1.0, 1.0);
  Vector upstream(inst.dim);
  for (double& v : upstream) v = rng.normal();

  EncoderForward fwd;
  try {
    fwd = forward(params, input);
  } catch (const Error&) {
    return;  // degenerate draw (numerically zero embedding)
  }
  const EncoderGrads g = backward(params, fwd.tape, upstream);
  std::vector<double> analytic = flatten(g);
  analytic.insert(analytic.end(), g.d_input.begin(), g.d_input.end());

  const EncoderLayout layout{spec};
  QuadVec theta = flatten(params);
  const std::size_t n_params = theta.size();
  for (double v : input) theta.emplace_back(v);

  const bool relu = inst.activation == Activation::kRelu && !inst.hidden.empty();
  const auto f = [&](const QuadVec& t, std::vector<char>* pattern) {
    const QuadVec e = ref_encoder(layout, t.data(), t.data() + n_params, pattern);
    Quad acc = 0;
    for (std::size_t k = 0; k < e.size(); ++k) acc += Quad(upstream[k]) * e[k];
    return acc;
  };

  ++section.cases;
  Comparison cmp{section, opt.corrupt, opt.min_grad};
  const Quad h(opt.step);
  for (std::size_t k = 0; k < theta.size(); ++k) {
    Quad numeric;
    if (!central_difference(theta, k, h, f, relu, numeric)) {
      ++section.skipped;
      continue;
    }
    cmp.check(analytic[k], numeric);
  }
}

void check_end_to_end(const Instance& inst, Rng& rng, const GradCheckOptions& opt,
                      GradCheckSection& section) {
  Model model;
  const EncoderSpec spec = make_encoder_spec(inst.input_dim, inst.hidden, inst.dim, inst.activation);
  model.encoder = init_params(spec, rng);
  for (auto& layer : model.encoder.layers) {
    for (double& b : layer.bias) b = rng.uniform(-0.5, 0.5);
  }
  model.head = ClassifierHead::random(inst.classes, inst.dim, rng);

  std::vector<Vector> inputs(inst.batch);
  std::vector<ClassId> labels(inst.batch);
  for (std::size_t i = 0; i < inst.batch; ++i) {
    inputs[i].resize(inst.input_dim);
    for (double& v : inputs[i]) v = rng.uniform(-1.0, 1.0);
    labels[i] = static_cast<ClassId>(rng.below(inst.classes));
  }
  Vector d(inst.classes);
  for (double& v : d) v = rng.uniform(0.1, 1.9);
  std::vector<std::size_t> batch(inst.batch);
  for (std::size_t i = 0; i < inst.batch; ++i) batch[i] = i;
  const MarginParams mp{inst.scale, inst.margin};

  BatchGradient bg;
  try {
    bg = model_batch_gradient(model, inputs, labels, batch, mp, d);
  } catch (const Error&) {
    return;
  }
  std::vector<double> analytic;
  for (const auto& layer : bg.grads.encoder) {
    analytic.insert(analytic.end(), layer.weights.flat().begin(), layer.weights.flat().end());
    analytic.insert(analytic.end(), layer.bias.begin(), layer.bias.end());
  }
  analytic.insert(analytic.end(), bg.grads.head.flat().begin(), bg.grads.head.flat().end());

  const EncoderLayout layout{spec};
  QuadVec theta = flatten(model.encoder);
  const std::size_t n_encoder = theta.size();
  for (double v : model.head.weights().flat()) theta.emplace_back(v);

  std::vector<QuadVec> q_inputs;
  for (const auto& in : inputs) q_inputs.emplace_back(in.begin(), in.end());

  const bool relu = inst.activation == Activation::kRelu && !inst.hidden.empty();
  const auto f = [&](const QuadVec& t, std::vector<char>* pattern) {
    Quad total = 0;
    for (std::size_t i = 0; i < inst.batch; ++i) {
      const QuadVec e = ref_encoder(layout, t.data(), q_inputs[i].data(), pattern);
      const auto y = static_cast<std::size_t>(labels[i]);
      total += ref_margin_loss(e.data(), t.data() + n_encoder, inst.classes, inst.dim, y,
                               Quad(inst.scale), Quad(d[y] * inst.margin));
    }
    return total / Quad(static_cast<double>(inst.batch));
  };

  ++section.cases;
  Comparison cmp{section, opt.corrupt, opt.min_grad};
  const Quad h(opt.step);
  for (std::size_t k = 0; k < theta.size(); ++k) {
    Quad numeric;
    if (!central_difference(theta, k, h, f, relu, numeric)) {
      ++section.skipped;
      continue;
    }
    cmp.check(analytic[k], numeric);
  }
}

}  // namespace

double relative_error(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

bool GradCheckReport::passed() const {
  if (sections.empty()) return false;
  return std::all_of(sections.begin(), sections.end(),
                     [](const GradCheckSection& s) { return s.passed(); });
}

double GradCheckReport::worst(const std::string& prefix) const {
  double w = 0.0;
  for (const auto& s : sections) {
    if (s.name.starts_with(prefix)) w = std::max(w, s.worst_rel_error);
  }
  return w;
}

GradCheckReport run_grad_check(const GradCheckOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  GradCheckReport report;
  report.sections = {
      {"loss:softmax", options.loss_tolerance},
      {"loss:arcface", options.loss_tolerance},
      {"loss:fair", options.loss_tolerance},
      {"encoder", options.encoder_tolerance},
      {"end-to-end", options.end_to_end_tolerance},
  };
  const Rng root(options.seed);
  for (std::size_t i = 0; i < options.configurations; ++i) {
    Rng rng = root.split(i);
    const Instance inst = random_instance(rng, i);
    check_losses(inst, rng, options, report.sections.data());
    check_encoder(inst, rng, options, report.sections[3]);
    check_end_to_end(inst, rng, options, report.sections[4]);
  }
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

std::string format_grad_check(const GradCheckReport& report) {
  std::string out = "worst relative error: loss=" + textio::format_double(report.worst("loss")) +
                    " encoder=" + textio::format_double(report.worst("encoder")) +
                    " end-to-end=" + textio::format_double(report.worst("end-to-end")) + "\n";
  auto line = [&](const std::string& name, double worst, double tol, bool ok,
                  const std::string& extra) {
    out += name + ": worst_rel_error=" + textio::format_double(worst) +
           " tolerance=" + textio::format_double(tol) + extra + (ok ? " PASS\n" : " FAIL\n");
  };
  for (const auto& s : report.sections) {
    line(s.name, s.worst_rel_error, s.tolerance, s.passed(),
         " cases=" + std::to_string(s.cases) + " coordinates=" + std::to_string(s.coordinates) +
             " skipped=" + std::to_string(s.skipped));
  }
  out += std::string("grad-check: ") + (report.passed() ? "PASS" : "FAIL") + "\n";
  return out;
}

}  // namespace fairmargin
