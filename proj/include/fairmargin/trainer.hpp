#pragma once

// Epoch loop: seeded shuffling, mini-batch SGD on the fair margin loss with
// the current per-class margin coefficients, then an inference pass that
// refreshes the favoritism state used by the next epoch.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fairmargin/data.hpp"
#include "fairmargin/encoder.hpp"
#include "fairmargin/favoritism.hpp"
#include "fairmargin/model.hpp"

namespace fairmargin {

enum class LossKind { kSoftmax, kArcFace, kFair };
enum class FavoritismSource { kTrain, kVal };

std::string_view to_string(LossKind k);
std::string_view to_string(FavoritismSource s);
LossKind parse_loss_kind(std::string_view text);
FavoritismSource parse_favoritism_source(std::string_view text);

struct TrainConfig {
  std::size_t batch_size = 256;
  int epochs = 30;
  double lr_start = 1e-1;
  double lr_end = 1e-4;
  double weight_decay = 5e-5;
  double momentum = 0.9;
  MarginParams margin_params;
  FairnessParams fairness_params;
  LossKind loss = LossKind::kFair;
  FavoritismSource favoritism_source = FavoritismSource::kVal;
  double split_ratio = 0.9;
  std::uint64_t seed = 0;
  /// 0 disables early stopping.
  int early_stop_patience = 5;

  std::vector<std::size_t> hidden_widths = {64};
  std::size_t embedding_dim = 16;
  Activation activation = Activation::kTanh;
};

/// Throws ConfigInvalid.
void validate(const TrainConfig& cfg);

/// Margin and fairness parameters actually used for cfg.loss: arcface forces
/// gamma = 0, softmax additionally forces m = 0.
MarginParams effective_margin(const TrainConfig& cfg);
FairnessParams effective_fairness(const TrainConfig& cfg);

struct TrainLogRecord {
  int epoch = 0;
  double mean_train_loss = 0.0;
  double val_accuracy = 0.0;
  double d_min = 0.0;
  double d_max = 0.0;
  double d_mean = 0.0;
  double f_min = 0.0;
  double f_max = 0.0;
  double wall_time = 0.0;  // seconds spent in the epoch

  bool operator==(const TrainLogRecord&) const = default;
};

/// CSV with a fixed column order. The wall_time cell is left empty unless
/// include_wall_time is set, so default logs are reproducible byte for byte.
std::string train_log_to_text(std::span<const TrainLogRecord> log, bool include_wall_time);

/// v <- momentum * v + grad + weight_decay * param; param <- param - lr * v.
void sgd_step(std::span<double> params, std::span<const double> grads,
              std::span<double> velocity, double lr, double momentum, double weight_decay);

/// Applies sgd_step to every block of the model. Weight decay touches encoder
/// weights and head rows but not biases. Head rows are renormalized afterwards.
void sgd_step(Model& model, const ModelGrads& grads, ModelGrads& velocity, double lr,
              double momentum, double weight_decay);

/// lr_start + (lr_end - lr_start) * step / total_steps.
double lr_at(std::size_t step, std::size_t total_steps, const TrainConfig& cfg);

/// Model with Glorot encoder and random unit head, drawn from the config seed.
Model init_model(const TrainConfig& cfg, std::size_t input_dim, std::size_t class_count);

/// Sets each head row to the normalized mean embedding of that class's
/// samples under the current encoder. Rows of classes with no samples, or
/// whose mean embedding vanishes, are left as they are.
void imprint_head(Model& model, std::span<const Vector> inputs, std::span<const ClassId> labels);

struct TrainResult {
  Model model;
  /// One state per epoch, starting with the epoch-0 state (all d_c = 1).
  std::vector<FavoritismState> history;
  std::vector<TrainLogRecord> log;
  bool early_stopped = false;
};

/// Called after every completed epoch with the updated model and state.
using EpochCallback =
    std::function<void(const TrainLogRecord&, const Model&, const FavoritismState&)>;

TrainResult train(const std::vector<LabeledSample>& dataset, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Seed used for the stratified train/val split inside train().
std::uint64_t split_seed(const TrainConfig& cfg);

}  // namespace fairmargin
