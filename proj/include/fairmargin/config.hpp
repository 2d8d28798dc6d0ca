#pragma once

// Flat `key = value` run configuration shared by every CLI command.
// Blank lines and lines starting with '#' are ignored; unknown or repeated
// keys are rejected.
//
//   seed                      all randomness derives from this
//   groups                    name:classes:sigma:samples_per_class[,...]
//   input_dim, prototype_separation
//   batch_size, epochs, lr_start, lr_end, weight_decay, momentum
//   scale, margin, gamma, harmony, loss, favoritism_source
//   split_ratio, early_stop_patience
//   hidden_widths (comma list, may be empty), embedding_dim, activation
//   checkpoint_interval (epochs, 0 = final only), log_wall_time
//   genuine_pairs_per_class, impostor_pairs, eval_attributes (comma list)
//   gradcheck_configurations, gradcheck_step

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "fairmargin/data.hpp"
#include "fairmargin/gradcheck.hpp"
#include "fairmargin/trainer.hpp"

namespace fairmargin {

struct EvalOptions {
  std::size_t genuine_pairs_per_class = 20;
  std::size_t impostor_pairs = 2000;
  /// Empty: every attribute found in the data.
  std::vector<std::string> attributes;
};

struct RunConfig {
  std::uint64_t seed = 0;
  SyntheticSpec synthetic;
  TrainConfig train;
  int checkpoint_interval = 0;
  bool log_wall_time = false;
  EvalOptions eval;
  GradCheckOptions grad_check;

  /// Pushes `seed` into every sub-config.
  void set_seed(std::uint64_t s);
};

/// Throws ConfigInvalid naming the offending key or line.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::string& path);

}  // namespace fairmargin
