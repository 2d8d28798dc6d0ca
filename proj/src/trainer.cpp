#include "fairmargin/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "fairmargin/error.hpp"
#include "fairmargin/kernels.hpp"
#include "fairmargin/textio.hpp"

namespace fairmargin {

namespace {

constexpr std::uint64_t kSplitStream = 1;
constexpr std::uint64_t kInitStream = 2;
constexpr std::uint64_t kShuffleStream = 3;

void check_classes(const std::vector<LabeledSample>& samples, std::size_t classes,
                   std::string_view where) {
  std::vector<std::size_t> counts(classes, 0);
  for (const auto& s : samples) {
    if (s.class_id < 0) throw Error(ErrorCode::kLabelOutOfRange, "negative class id");
    counts[static_cast<std::size_t>(s.class_id)] += 1;
  }
  for (std::size_t c = 0; c < classes; ++c) {
    if (counts[c] == 0) {
      throw Error(ErrorCode::kEmptyClass,
                  "class " + std::to_string(c) + " has no samples in " + std::string(where));
    }
  }
}

struct Columns {
  std::vector<Vector> inputs;
  std::vector<ClassId> labels;
};

Columns columns(const std::vector<LabeledSample>& samples) {
  Columns c;
  c.inputs.reserve(samples.size());
  c.labels.reserve(samples.size());
  for (const auto& s : samples) {
    c.inputs.push_back(s.input);
    c.labels.push_back(s.class_id);
  }
  return c;
}

}  // namespace

std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::kSoftmax: return "softmax";
    case LossKind::kArcFace: return "arcface";
    case LossKind::kFair: return "fair";
  }
  return "fair";
}

std::string_view to_string(FavoritismSource s) {
  return s == FavoritismSource::kTrain ? "train" : "val";
}

LossKind parse_loss_kind(std::string_view text) {
  if (text == "softmax") return LossKind::kSoftmax;
  if (text == "arcface") return LossKind::kArcFace;
  if (text == "fair") return LossKind::kFair;
  throw Error(ErrorCode::kConfigInvalid, "unknown loss '" + std::string(text) + "'");
}

FavoritismSource parse_favoritism_source(std::string_view text) {
  if (text == "train") return FavoritismSource::kTrain;
  if (text == "val") return FavoritismSource::kVal;
  throw Error(ErrorCode::kConfigInvalid,
              "unknown favoritism source '" + std::string(text) + "'");
}

void validate(const TrainConfig& cfg) {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kConfigInvalid, what); };
  if (cfg.batch_size < 1) fail("batch_size must be >= 1");
  if (cfg.epochs < 0) fail("epochs must be >= 0");
  if (!(cfg.lr_end > 0.0) || !(cfg.lr_start >= cfg.lr_end)) fail("need lr_start >= lr_end > 0");
  if (!(cfg.weight_decay >= 0.0)) fail("weight_decay must be >= 0");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) fail("momentum must lie in [0, 1)");
  if (!(cfg.split_ratio > 0.0 && cfg.split_ratio < 1.0)) fail("split_ratio must lie in (0, 1)");
  if (cfg.early_stop_patience < 0) fail("early_stop_patience must be >= 0");
  if (cfg.embedding_dim == 0) fail("embedding_dim must be >= 1");
  for (std::size_t w : cfg.hidden_widths) {
    if (w == 0) fail("hidden widths must be >= 1");
  }
  validate(cfg.margin_params);
  validate(cfg.fairness_params);
  // Largest possible coefficient is 2.
  if (cfg.loss == LossKind::kFair && cfg.fairness_params.gamma > 0.0 &&
      2.0 * cfg.margin_params.margin >= 3.14159265358979 / 2) {
    fail("margin too large: 2 * m must stay below pi/2 for the fair loss");
  }
}

MarginParams effective_margin(const TrainConfig& cfg) {
  MarginParams mp = cfg.margin_params;
  if (cfg.loss == LossKind::kSoftmax) mp.margin = 0.0;
  return mp;
}

FairnessParams effective_fairness(const TrainConfig& cfg) {
  FairnessParams fp = cfg.fairness_params;
  if (cfg.loss != LossKind::kFair) fp.gamma = 0.0;
  return fp;
}

std::string train_log_to_text(std::span<const TrainLogRecord> log, bool include_wall_time) {
  using textio::format_double;
  std::string out =
      "epoch,mean_train_loss,val_accuracy,d_min,d_max,d_mean,f_min,f_max,wall_time\n";
  for (const auto& r : log) {
    out += std::to_string(r.epoch) + ',' + format_double(r.mean_train_loss) + ',' +
           format_double(r.val_accuracy) + ',' + format_double(r.d_min) + ',' +
           format_double(r.d_max) + ',' + format_double(r.d_mean) + ',' +
           format_double(r.f_min) + ',' + format_double(r.f_max) + ',';
    if (include_wall_time) out += format_double(r.wall_time);
    out += '\n';
  }
  return out;
}

void sgd_step(std::span<double> params, std::span<const double> grads,
              std::span<double> velocity, double lr, double momentum, double weight_decay) {
  if (params.size() != grads.size() || params.size() != velocity.size()) {
    throw Error(ErrorCode::kShapeMismatch, "parameter, gradient and velocity sizes differ");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    velocity[k] = momentum * velocity[k] + grads[k] + weight_decay * params[k];
    params[k] -= lr * velocity[k];
  }
}

void sgd_step(Model& model, const ModelGrads& grads, ModelGrads& velocity, double lr,
              double momentum, double weight_decay) {
  auto& layers = model.encoder.layers;
  if (grads.encoder.size() != layers.size() || velocity.encoder.size() != layers.size()) {
    throw Error(ErrorCode::kShapeMismatch, "gradient layer count differs from model");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    sgd_step(layers[l].weights.flat(), grads.encoder[l].weights.flat(),
             velocity.encoder[l].weights.flat(), lr, momentum, weight_decay);
    sgd_step(layers[l].bias, grads.encoder[l].bias, velocity.encoder[l].bias, lr, momentum,
             0.0);
  }
  sgd_step(model.head.mutable_weights().flat(), grads.head.flat(), velocity.head.flat(), lr,
           momentum, weight_decay);
  model.head.renormalize();
}

double lr_at(std::size_t step, std::size_t total_steps, const TrainConfig& cfg) {
  const double t = total_steps == 0 ? 0.0
                                    : static_cast<double>(std::min(step, total_steps)) /
                                          static_cast<double>(total_steps);
  return (1.0 - t) * cfg.lr_start + t * cfg.lr_end;
}

Model init_model(const TrainConfig& cfg, std::size_t input_dim, std::size_t class_count) {
  Rng rng = Rng(cfg.seed).split(kInitStream);
  Model model;
  model.encoder = init_params(
      make_encoder_spec(input_dim, cfg.hidden_widths, cfg.embedding_dim, cfg.activation), rng);
  model.head = ClassifierHead::random(class_count, cfg.embedding_dim, rng);
  return model;
}

void imprint_head(Model& model, std::span<const Vector> inputs, std::span<const ClassId> labels) {
  if (inputs.size() != labels.size()) {
    throw Error(ErrorCode::kShapeMismatch, "inputs and labels differ in length");
  }
  const std::vector<Vector> emb = embed_all(model.encoder, inputs);
  Matrix& w = model.head.mutable_weights();
  Matrix sums(w.rows(), w.cols());
  for (std::size_t i = 0; i < emb.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= w.rows()) {
      throw Error(ErrorCode::kLabelOutOfRange, "label " + std::to_string(labels[i]));
    }
    auto row = sums.row(static_cast<std::size_t>(labels[i]));
    for (std::size_t k = 0; k < row.size(); ++k) row[k] += emb[i][k];
  }
  for (std::size_t c = 0; c < w.rows(); ++c) {
    auto row = sums.row(c);
    if (l2_norm(row) < kZeroNormThreshold) continue;
    l2_normalize_inplace(row);
    std::copy(row.begin(), row.end(), w.row(c).begin());
  }
}

std::uint64_t split_seed(const TrainConfig& cfg) {
  return Rng(cfg.seed).split(kSplitStream).next_u64();
}

TrainResult train(const std::vector<LabeledSample>& dataset, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  validate(cfg);
  if (dataset.empty()) throw Error(ErrorCode::kEmptyClass, "dataset is empty");
  const std::size_t classes = class_count(dataset);
  check_classes(dataset, classes, "dataset");
  const std::size_t input_dim = dataset.front().input.size();
  for (const auto& s : dataset) {
    if (s.input.size() != input_dim) {
      throw Error(ErrorCode::kDimensionMismatch, "samples differ in input dimension");
    }
  }

  const DatasetSplit parts = split(dataset, cfg.split_ratio, split_seed(cfg));
  check_classes(parts.train, classes, "train split");
  check_classes(parts.val, classes, "val split");
  const Columns train_set = columns(parts.train);
  const Columns val_set = columns(parts.val);
  const Columns& source =
      cfg.favoritism_source == FavoritismSource::kTrain ? train_set : val_set;

  const MarginParams mp = effective_margin(cfg);
  const FairnessParams fp = effective_fairness(cfg);

  TrainResult result;
  result.model = init_model(cfg, input_dim, classes);
  imprint_head(result.model, train_set.inputs, train_set.labels);
  ModelGrads velocity = zeros_like(result.model);
  FavoritismState state = FavoritismState::initial(classes);
  result.history.push_back(state);

  Rng shuffle_rng = Rng(cfg.seed).split(kShuffleStream);
  const std::size_t n_train = train_set.inputs.size();
  const std::size_t batches_per_epoch = (n_train + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = batches_per_epoch * static_cast<std::size_t>(cfg.epochs);
  std::size_t step = 0;
  double best_accuracy = -1.0;
  int epochs_since_best = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const std::vector<std::size_t> order = shuffle_rng.permutation(n_train);

    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < n_train; begin += cfg.batch_size) {
      const std::size_t end = std::min(begin + cfg.batch_size, n_train);
      const std::span<const std::size_t> batch(order.data() + begin, end - begin);
      const BatchGradient bg = model_batch_gradient(result.model, train_set.inputs,
                                                    train_set.labels, batch, mp,
                                                    state.margin_coeff);
      sgd_step(result.model, bg.grads, velocity, lr_at(step, total_steps, cfg), cfg.momentum,
               cfg.weight_decay);
      ++step;
      loss_sum += bg.loss * static_cast<double>(batch.size());
    }

    const ConfidenceAccumulator acc =
        accumulate_confidences(result.model, source.inputs, source.labels, mp.scale);
    state = update_state(state, acc, fp);
    result.history.push_back(state);

    TrainLogRecord rec;
    rec.epoch = epoch;
    rec.mean_train_loss = loss_sum / static_cast<double>(n_train);
    rec.val_accuracy = classification_accuracy(result.model, val_set.inputs, val_set.labels);
    const auto [d_lo, d_hi] =
        std::minmax_element(state.margin_coeff.begin(), state.margin_coeff.end());
    const auto [f_lo, f_hi] = std::minmax_element(state.favoritism.begin(), state.favoritism.end());
    rec.d_min = *d_lo;
    rec.d_max = *d_hi;
    double d_sum = 0.0;
    for (double d : state.margin_coeff) d_sum += d;
    rec.d_mean = d_sum / static_cast<double>(classes);
    rec.f_min = *f_lo;
    rec.f_max = *f_hi;
    rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec, result.model, state);

    if (rec.val_accuracy > best_accuracy) {
      best_accuracy = rec.val_accuracy;
      epochs_since_best = 0;
    } else if (cfg.early_stop_patience > 0 && ++epochs_since_best >= cfg.early_stop_patience) {
      result.early_stopped = true;
      break;
    }
  }
  return result;
}

}  // namespace fairmargin
