#include <gtest/gtest.h>

#include "fairmargin/kernels.hpp"
#include "fairmargin/parallel.hpp"
#include "fairmargin/trainer.hpp"
#include "test_util.hpp"

namespace fairmargin {
namespace {

struct Fixture {
  Model model;
  std::vector<Vector> inputs;
  std::vector<ClassId> labels;
  std::vector<std::size_t> batch;
  Vector d;
};

Fixture make_fixture(std::uint64_t seed, std::size_t n) {
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.hidden_widths = {12, 9};
  cfg.embedding_dim = 6;
  Fixture f{init_model(cfg, 7, 5), {}, {}, {}, {}};
  Rng rng(seed + 100);
  for (std::size_t i = 0; i < n; ++i) {
    Vector x(7);
    for (double& v : x) v = rng.normal();
    f.inputs.push_back(std::move(x));
    f.labels.push_back(static_cast<ClassId>(rng.below(5)));
  }
  f.batch = rng.permutation(n);
  f.batch.resize(n / 2);
  f.d = {0.4, 0.9, 1.0, 1.3, 1.8};
  return f;
}

class WorkerCounts : public ::testing::TestWithParam<int> {
 protected:
  void SetUp() override {
    saved_ = worker_count();
    set_worker_count(GetParam());
  }
  void TearDown() override { set_worker_count(saved_); }

 private:
  int saved_ = 1;
};

TEST_P(WorkerCounts, BatchGradientMatchesSerialBitForBit) {
  const Fixture f = make_fixture(1, 150);
  const BatchGradient ref =
      model_batch_gradient_serial(f.model, f.inputs, f.labels, f.batch, {}, f.d);
  const BatchGradient par = model_batch_gradient(f.model, f.inputs, f.labels, f.batch, {}, f.d);
  EXPECT_EQ(par.loss, ref.loss);
  EXPECT_EQ(par.grads, ref.grads);
}

TEST_P(WorkerCounts, EmbedAllMatchesSerial) {
  const Fixture f = make_fixture(2, 80);
  EXPECT_EQ(embed_all(f.model.encoder, f.inputs), embed_all_serial(f.model.encoder, f.inputs));
}

TEST_P(WorkerCounts, ConfidencesMatchSerial) {
  const Fixture f = make_fixture(3, 80);
  EXPECT_EQ(true_class_confidences(f.model, f.inputs, f.labels, 64.0),
            true_class_confidences_serial(f.model, f.inputs, f.labels, 64.0));
}

INSTANTIATE_TEST_SUITE_P(Kernels, WorkerCounts, ::testing::Values(1, 2, 4, 7));

TEST(BatchGradient, SingletonMatchesManualComposition) {
  const Fixture f = make_fixture(4, 10);
  const std::vector<std::size_t> one{3};
  const BatchGradient bg = model_batch_gradient(f.model, f.inputs, f.labels, one, {}, f.d);
  const EncoderForward fwd = forward(f.model.encoder, f.inputs[3]);
  const ClassId y = f.labels[3];
  const LossGrad lg = fair_margin_loss(fwd.embedding, y, f.model.head, {},
                                       f.d[static_cast<std::size_t>(y)]);
  const EncoderGrads eg = backward(f.model.encoder, fwd.tape, lg.d_embedding);
  EXPECT_EQ(bg.loss, lg.loss);
  EXPECT_EQ(bg.grads.head, lg.d_weights);
  EXPECT_EQ(bg.grads.encoder, eg.layers);
}

TEST(Confidence, IsMarginFreeSoftmaxOfOwnClass) {
  const Fixture f = make_fixture(5, 5);
  const Vector conf = true_class_confidences(f.model, f.inputs, f.labels, 8.0);
  for (std::size_t i = 0; i < 5; ++i) {
    const Vector e = embed(f.model.encoder, f.inputs[i]);
    const Vector p = softmax(cosine_logits(e, f.model.head, 8.0));
    EXPECT_EQ(conf[i], p[static_cast<std::size_t>(f.labels[i])]);
    EXPECT_GE(conf[i], 0.0);
    EXPECT_LE(conf[i], 1.0);
  }
}

TEST(Accuracy, ArgmaxOfCosines) {
  Model m;
  m.encoder.spec = EncoderSpec{{2, 2}, {}};
  m.encoder.layers = {DenseLayer{Matrix(2, 2), Vector(2, 0.0)}};
  m.encoder.layers[0].weights(0, 0) = 1.0;
  m.encoder.layers[0].weights(1, 1) = 1.0;
  Matrix w(2, 2);
  w(0, 0) = 1.0;
  w(1, 1) = 1.0;
  m.head = ClassifierHead(std::move(w));
  const std::vector<Vector> xs{{1.0, 0.1}, {0.1, 1.0}, {1.0, 1.0}};
  EXPECT_DOUBLE_EQ(classification_accuracy(m, xs, std::vector<ClassId>{0, 1, 0}), 1.0);
  EXPECT_DOUBLE_EQ(classification_accuracy(m, xs, std::vector<ClassId>{0, 1, 1}), 2.0 / 3.0);
}

}  // namespace
}  // namespace fairmargin
