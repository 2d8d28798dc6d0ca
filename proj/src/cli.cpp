#include "fairmargin/cli.hpp"

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>

#include "fairmargin/config.hpp"
#include "fairmargin/error.hpp"
#include "fairmargin/eval.hpp"
#include "fairmargin/kernels.hpp"
#include "fairmargin/parallel.hpp"
#include "fairmargin/textio.hpp"

namespace fairmargin::cli {

namespace {

constexpr std::uint64_t kPairStream = 7;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfigInvalid:
    case ErrorCode::kSpecInvalid:
    case ErrorCode::kPrototypePlacementFailed:
    case ErrorCode::kMarginOverflow:
      return kConfigError;
    case ErrorCode::kIoError:
      return kIoError;
    case ErrorCode::kTooFewGroups:
    case ErrorCode::kOneSidedInput:
      return kEvalPrecondition;
    default:
      return kDataError;
  }
}

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int workers = 0;
};

void add_common(CLI::App* cmd, Common& c, bool config_required) {
  auto* opt = cmd->add_option("--config", c.config_path, "flat key=value run config");
  if (config_required) opt->required();
  cmd->add_option("--seed", c.seed, "overrides the config seed");
  cmd->add_option("--workers", c.workers, "parallel workers (output is identical for any value)");
}

RunConfig load_config(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_run_config(c.config_path);
  if (c.seed) cfg.set_seed(*c.seed);
  set_worker_count(c.workers);
  return cfg;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot create '" + dir + "': " + ec.message());
}

std::string join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

std::vector<EmbeddingRecord> embed_dataset(const Model& model,
                                           const std::vector<LabeledSample>& samples) {
  std::vector<Vector> inputs;
  inputs.reserve(samples.size());
  for (const auto& s : samples) inputs.push_back(s.input);
  std::vector<Vector> emb = embed_all(model.encoder, inputs);
  std::vector<EmbeddingRecord> records;
  records.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    records.push_back({samples[i].id, samples[i].class_id, samples[i].attributes, std::move(emb[i])});
  }
  return records;
}

// ---- gen-data ---------------------------------------------------------------

struct GenDataArgs {
  Common common;
  std::string out_path;
};

int cmd_gen_data(const GenDataArgs& a, std::ostream& out) {
  const RunConfig cfg = load_config(a.common);
  const auto samples = generate(cfg.synthetic);
  save_dataset(samples, a.out_path);
  std::size_t class_offset = 0;
  for (const auto& g : cfg.synthetic.groups) {
    out << "group " << g.name << ": classes=" << g.class_count
        << " samples=" << g.class_count * g.samples_per_class << " sigma="
        << textio::format_double(g.noise_sigma) << " class_ids=" << class_offset << ".."
        << class_offset + g.class_count - 1 << "\n";
    class_offset += g.class_count;
  }
  out << "wrote " << samples.size() << " samples to " << a.out_path << "\n";
  return kOk;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::string data_path;
  std::string out_dir;
  std::optional<std::string> loss;
  std::optional<double> gamma;
  std::optional<double> harmony;
  std::optional<std::string> favoritism_source;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig cfg = load_config(a.common);
  if (a.loss) cfg.train.loss = parse_loss_kind(*a.loss);
  if (a.gamma) cfg.train.fairness_params.gamma = *a.gamma;
  if (a.harmony) cfg.train.fairness_params.harmony = *a.harmony;
  if (a.favoritism_source) cfg.train.favoritism_source = parse_favoritism_source(*a.favoritism_source);
  validate(cfg.train);

  const auto samples = load_dataset(a.data_path);
  ensure_dir(a.out_dir);

  const int interval = cfg.checkpoint_interval;
  const auto on_epoch = [&](const TrainLogRecord& rec, const Model& model,
                            const FavoritismState& state) {
    out << "epoch " << rec.epoch << " loss=" << textio::format_double(rec.mean_train_loss)
        << " val_accuracy=" << textio::format_double(rec.val_accuracy)
        << " d=[" << textio::format_double(rec.d_min) << ", " << textio::format_double(rec.d_max)
        << "]\n";
    if (interval > 0 && rec.epoch % interval == 0) {
      save_checkpoint({model, state}, join(a.out_dir, "checkpoint_epoch_" + std::to_string(rec.epoch) + ".txt"));
    }
  };
  const TrainResult result = train(samples, cfg.train, on_epoch);

  save_checkpoint({result.model, result.history.back()}, join(a.out_dir, "checkpoint.txt"));
  textio::write_file(join(a.out_dir, "favoritism.csv"), favoritism_history_to_text(result.history));
  textio::write_file(join(a.out_dir, "train_log.csv"),
                     train_log_to_text(result.log, cfg.log_wall_time));

  const double final_accuracy = result.log.empty() ? 0.0 : result.log.back().val_accuracy;
  out << "final val_accuracy=" << textio::format_double(final_accuracy)
      << " epochs=" << result.log.size() << (result.early_stopped ? " (early stop)" : "") << "\n";
  return kOk;
}

// ---- export-embeddings --------------------------------------------------------

struct ExportArgs {
  Common common;
  std::string checkpoint_path;
  std::string data_path;
  std::string out_path;
};

int cmd_export(const ExportArgs& a, std::ostream& out) {
  load_config(a.common);
  const Checkpoint ckpt = load_checkpoint(a.checkpoint_path);
  const auto samples = load_dataset(a.data_path);
  const auto records = embed_dataset(ckpt.model, samples);
  save_embeddings(records, a.out_path);
  out << "wrote " << records.size() << " embeddings to " << a.out_path << "\n";
  return kOk;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::string checkpoint_path;
  std::string embeddings_path;
  std::string data_path;
  std::string pairs_path;
  std::vector<std::string> attributes;
  bool fairness = false;
  std::string out_dir;
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = load_config(a.common);

  std::vector<EmbeddingRecord> records;
  if (!a.embeddings_path.empty()) {
    records = load_embeddings(a.embeddings_path);
  } else {
    if (a.data_path.empty()) {
      throw Error(ErrorCode::kConfigInvalid, "--checkpoint needs --data");
    }
    const Checkpoint ckpt = load_checkpoint(a.checkpoint_path);
    records = embed_dataset(ckpt.model, load_dataset(a.data_path));
  }

  std::vector<VerificationPair> pairs;
  if (!a.pairs_path.empty()) {
    pairs = load_pairs(a.pairs_path);
  } else {
    Rng rng = Rng(cfg.seed).split(kPairStream);
    pairs = make_pairs(records, cfg.eval.genuine_pairs_per_class, cfg.eval.impostor_pairs, rng);
  }

  std::vector<std::string> attributes = a.attributes.empty() ? cfg.eval.attributes : a.attributes;
  if (attributes.empty()) {
    std::set<std::string> names;
    for (const auto& r : records) {
      for (const auto& [name, _] : r.attributes) names.insert(name);
    }
    attributes.assign(names.begin(), names.end());
  }
  if (attributes.empty()) {
    throw Error(ErrorCode::kTooFewGroups, "no attributes to group by");
  }
  const GroupingResult grouping = binarize_attributes(records, attributes);
  EvalReport report = evaluate(make_table(records), pairs, grouping.groups);
  report.flags.insert(report.flags.begin(), grouping.flags.begin(), grouping.flags.end());

  ensure_dir(a.out_dir);
  textio::write_file(join(a.out_dir, "report.json"), report_to_json(report));
  textio::write_file(join(a.out_dir, "report.csv"), report_to_csv(report));
  textio::write_file(join(a.out_dir, "heatmap.csv"), heatmap_to_csv(report));
  if (a.pairs_path.empty()) textio::write_file(join(a.out_dir, "pairs.csv"), pairs_to_text(pairs));

  out << "overall eer=" << textio::format_double(report.overall.eer)
      << " auc=" << textio::format_double(report.overall.auc) << "\n";
  for (const auto& [name, m] : report.per_group) {
    out << "group " << name << " eer=" << textio::format_double(m.eer)
        << " auc=" << textio::format_double(m.auc) << "\n";
  }
  if (report.fairness) {
    out << "std=" << textio::format_double(report.fairness->std)
        << " gini=" << textio::format_double(report.fairness->gini)
        << " ser=" << textio::format_double(report.fairness->ser)
        << (report.fairness->ser_floored ? " (ser floored)" : "") << "\n";
  } else if (a.fairness) {
    err << "error: fairness metrics need at least two scored groups, got "
        << report.per_group.size() << "\n";
    return kEvalPrecondition;
  }
  return kOk;
}

// ---- grad-check ---------------------------------------------------------------

struct GradCheckArgs {
  Common common;
  double corrupt = 0.0;
};

int cmd_grad_check(const GradCheckArgs& a, std::ostream& out) {
  RunConfig cfg = load_config(a.common);
  cfg.grad_check.corrupt = a.corrupt;
  const GradCheckReport report = run_grad_check(cfg.grad_check);
  out << format_grad_check(report);
  return report.passed() ? kOk : kCheckFailed;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"fairmargin: fair angular-margin metric learning toolkit"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic biased dataset");
  add_common(gen_cmd, gen.common, true);
  gen_cmd->add_option("--out", gen.out_path, "dataset CSV to write")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train encoder and head");
  add_common(train_cmd, tr.common, true);
  train_cmd->add_option("--data", tr.data_path, "dataset CSV")->required();
  train_cmd->add_option("--out-dir", tr.out_dir, "output directory")->required();
  train_cmd->add_option("--loss", tr.loss, "softmax | arcface | fair")
      ->check(CLI::IsMember({"softmax", "arcface", "fair"}));
  train_cmd->add_option("--gamma", tr.gamma, "gradient coefficient");
  train_cmd->add_option("--harmony", tr.harmony, "harmony coefficient");
  train_cmd->add_option("--favoritism-source", tr.favoritism_source, "train | val")
      ->check(CLI::IsMember({"train", "val"}));

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "verification and fairness report");
  add_common(eval_cmd, ev.common, false);
  auto* ckpt_opt = eval_cmd->add_option("--checkpoint", ev.checkpoint_path, "trained checkpoint");
  auto* emb_opt = eval_cmd->add_option("--embeddings", ev.embeddings_path, "embedding CSV");
  ckpt_opt->excludes(emb_opt);
  eval_cmd->add_option("--data", ev.data_path, "dataset CSV (with --checkpoint)");
  eval_cmd->add_option("--pairs", ev.pairs_path, "pairs CSV; generated from the seed if absent");
  eval_cmd->add_option("--attributes", ev.attributes, "attributes to group by")->delimiter(',');
  eval_cmd->add_flag("--fairness", ev.fairness, "fail unless fairness metrics can be computed");
  eval_cmd->add_option("--out-dir", ev.out_dir, "output directory")->required();

  GradCheckArgs gc;
  auto* gc_cmd = app.add_subcommand("grad-check", "finite-difference gradient verification");
  add_common(gc_cmd, gc.common, false);
  gc_cmd->add_option("--corrupt", gc.corrupt, "test hook: scale analytical gradients by 1+x")
      ->group("");

  ExportArgs ex;
  auto* ex_cmd = app.add_subcommand("export-embeddings", "embed a dataset with a checkpoint");
  add_common(ex_cmd, ex.common, false);
  ex_cmd->add_option("--checkpoint", ex.checkpoint_path, "trained checkpoint")->required();
  ex_cmd->add_option("--data", ex.data_path, "dataset CSV")->required();
  ex_cmd->add_option("--out", ex.out_path, "embedding CSV to write")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen, out);
    if (*train_cmd) return cmd_train(tr, out);
    if (*eval_cmd) {
      if (ev.checkpoint_path.empty() == ev.embeddings_path.empty()) {
        err << "error: eval needs exactly one of --checkpoint or --embeddings\n";
        return kConfigError;
      }
      return cmd_eval(ev, out, err);
    }
    if (*gc_cmd) return cmd_grad_check(gc, out);
    if (*ex_cmd) return cmd_export(ex, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kIoError;
  }
  return kConfigError;
}

}  // namespace fairmargin::cli
