// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include "fairmargin/eval.hpp"
#include "fairmargin/kernels.hpp"
#include "fairmargin/parallel.hpp"
#include "fairmargin/trainer.hpp"

namespace {

using namespace fairmargin;

struct Workload {
  Model model;
  std::vector<Vector> inputs;
  std::vector<ClassId> labels;
  std::vector<std::size_t> batch;
  Vector d;
};

const Workload& workload() {
  static const Workload w = [] {
    TrainConfig cfg;
    cfg.hidden_widths = {64};
    cfg.embedding_dim = 16;
    Workload out{init_model(cfg, 16, 20), {}, {}, {}, Vector(20, 1.0)};
    Rng rng(1);
    for (int i = 0; i < 1024; ++i) {
      Vector x(16);
      for (double& v : x) v = rng.normal();
      out.inputs.push_back(std::move(x));
      out.labels.push_back(static_cast<ClassId>(rng.below(20)));
    }
    out.batch = rng.permutation(out.inputs.size());
    out.batch.resize(256);
    return out;
  }();
  return w;
}

void BM_BatchGradientSerial(benchmark::State& state) {
  const Workload& w = workload();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        model_batch_gradient_serial(w.model, w.inputs, w.labels, w.batch, {}, w.d));
  }
}
BENCHMARK(BM_BatchGradientSerial)->Unit(benchmark::kMillisecond);

void BM_BatchGradientParallel(benchmark::State& state) {
  const Workload& w = workload();
  set_worker_count(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(model_batch_gradient(w.model, w.inputs, w.labels, w.batch, {}, w.d));
  }
}
BENCHMARK(BM_BatchGradientParallel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_EmbedAllSerial(benchmark::State& state) {
  const Workload& w = workload();
  for (auto _ : state) benchmark::DoNotOptimize(embed_all_serial(w.model.encoder, w.inputs));
}
BENCHMARK(BM_EmbedAllSerial)->Unit(benchmark::kMillisecond);

void BM_EmbedAllParallel(benchmark::State& state) {
  const Workload& w = workload();
  set_worker_count(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(embed_all(w.model.encoder, w.inputs));
}
BENCHMARK(BM_EmbedAllParallel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_ConfidencesSerial(benchmark::State& state) {
  const Workload& w = workload();
  for (auto _ : state) {
    benchmark::DoNotOptimize(true_class_confidences_serial(w.model, w.inputs, w.labels, 64.0));
  }
}
BENCHMARK(BM_ConfidencesSerial)->Unit(benchmark::kMillisecond);

void BM_ConfidencesParallel(benchmark::State& state) {
  const Workload& w = workload();
  set_worker_count(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(true_class_confidences(w.model, w.inputs, w.labels, 64.0));
  }
}
BENCHMARK(BM_ConfidencesParallel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

struct PairWorkload {
  EmbeddingTable table;
  std::vector<VerificationPair> pairs;
};

const PairWorkload& pair_workload() {
  static const PairWorkload w = [] {
    PairWorkload out;
    Rng rng(2);
    for (int i = 0; i < 2000; ++i) {
      Vector v(16);
      for (double& x : v) x = rng.normal();
      out.table["s" + std::to_string(i)] = l2_normalize(v);
    }
    for (int i = 0; i < 20000; ++i) {
      out.pairs.push_back({"s" + std::to_string(rng.below(2000)),
                           "s" + std::to_string(rng.below(2000)), i % 2 == 0});
    }
    return out;
  }();
  return w;
}

void BM_ScorePairsSerial(benchmark::State& state) {
  const PairWorkload& w = pair_workload();
  for (auto _ : state) benchmark::DoNotOptimize(score_pairs_serial(w.pairs, w.table));
}
BENCHMARK(BM_ScorePairsSerial)->Unit(benchmark::kMillisecond);

void BM_ScorePairsParallel(benchmark::State& state) {
  const PairWorkload& w = pair_workload();
  set_worker_count(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(score_pairs(w.pairs, w.table));
}
BENCHMARK(BM_ScorePairsParallel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
