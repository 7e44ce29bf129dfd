#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "grad_check.h"
#include "sedpipe/errors.h"
#include "sedpipe/nn/layers.h"
#include "sedpipe/nn/model.h"
#include "sedpipe/nn/optim.h"
#include "sedpipe/nn/train.h"
#include "test_util.h"

using namespace sed;
using namespace sed::nn;
using gradcheck::random_tensor;

TEST_CASE("per-layer gradients match finite differences") {
  Rng rng(2024);
  for (const auto& [name, r] : gradcheck::layer_suite(rng)) {
    INFO(name << " input " << r.input_rel << " params " << r.param_rel);
    CHECK(r.worst() < 1e-5);
  }
}

TEST_CASE("relu dense gradients away from the kink") {
  Rng rng(5);
  Dense dense(4, 3, Activation::relu);
  dense.init(rng);
  for (auto& b : dense.bias.value.data) b = 0.3;
  const auto r = gradcheck::check_layer(dense, random_tensor({1, 6, 4}, rng), rng);
  CHECK(r.worst() < 1e-5);
}

TEST_CASE("tiny CRNN end-to-end gradient") {
  Rng rng(77);
  const auto r = gradcheck::check_end_to_end(rng);
  INFO("input " << r.input_rel << " params " << r.param_rel);
  CHECK(r.worst() < 1e-4);
}

TEST_CASE("conv2d is a same-padded 3x3 cross-correlation") {
  Conv2d conv(1, 1);
  conv.kernel.value.fill(0.0);
  conv.kernel.value[1 * 3 + 2] = 1.0;  // tap at (dt=0, df=+1)
  conv.bias.value[0] = 0.5;
  Tensor x({1, 2, 3, 1});
  for (std::size_t i = 0; i < 6; ++i) x[i] = static_cast<double>(i + 1);
  const Tensor y = conv.forward(x, Mode::infer);
  // Output (t, f) reads input (t, f+1); the last column sees zero padding.
  const std::vector<double> expect{2.5, 3.5, 0.5, 5.5, 6.5, 0.5};
  CHECK(y.data == expect);
  CHECK(conv.descriptor() == "conv2d(1->1,3x3)");
}

TEST_CASE("batch norm running statistics") {
  BatchNorm bn(1);
  Tensor x({4, 1});
  x.data = {1.0, 2.0, 3.0, 4.0};
  CHECK_THROWS_AS(bn.forward(x, Mode::infer), StateError);
  bn.forward(x, Mode::train);
  // First update adopts the batch statistics (population variance).
  CHECK(bn.running_mean[0] == doctest::Approx(2.5));
  CHECK(bn.running_var[0] == doctest::Approx(1.25));
  Tensor x2({2, 1});
  x2.data = {10.0, 10.0};
  bn.forward(x2, Mode::train);
  CHECK(bn.running_mean[0] == doctest::Approx(0.9 * 2.5 + 0.1 * 10.0));
  CHECK(bn.running_var[0] == doctest::Approx(0.9 * 1.25));
  const Tensor y = bn.forward(x, Mode::infer);
  const double mean = 0.9 * 2.5 + 1.0, var = 0.9 * 1.25;
  CHECK(y[0] == doctest::Approx((1.0 - mean) / std::sqrt(var + 1e-5)));
}

TEST_CASE("batch norm normalizes per channel in training mode") {
  Rng rng(1);
  BatchNorm bn(2);
  const Tensor x = random_tensor({3, 5, 2}, rng, 4.0);
  const Tensor y = bn.forward(x, Mode::train);
  for (std::size_t c = 0; c < 2; ++c) {
    double m = 0.0, v = 0.0;
    for (std::size_t r = 0; r < 15; ++r) m += y[r * 2 + c] / 15.0;
    for (std::size_t r = 0; r < 15; ++r) v += (y[r * 2 + c] - m) * (y[r * 2 + c] - m) / 15.0;
    CHECK(std::abs(m) < 1e-12);
    CHECK(v == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("max pool over frequency only, ties to the lowest index") {
  MaxPoolFreq pool(2);
  Tensor x({1, 2, 4, 1});
  x.data = {1, 3, 5, 5, 7, 2, 0, -1};
  const Tensor y = pool.forward(x, Mode::train);
  CHECK(y.shape == std::vector<std::size_t>{1, 2, 2, 1});
  CHECK(y.data == std::vector<double>{3, 5, 7, 0});
  Tensor g({1, 2, 2, 1}, 1.0);
  const Tensor gx = pool.backward(g);
  CHECK(gx.data == std::vector<double>{0, 1, 1, 0, 1, 0, 1, 0});
  Tensor bad({1, 1, 5, 1});
  CHECK_THROWS_AS(pool.forward(bad, Mode::train), ShapeError);
}

TEST_CASE("inverted dropout") {
  Rng rng(3);
  Dropout drop(0.5, &rng);
  const Tensor x({1, 1000, 10}, 1.0);
  const Tensor y = drop.forward(x, Mode::train);
  double sum = 0.0;
  for (double v : y.data) {
    CHECK((v == 0.0 || v == 2.0));
    sum += v;
  }
  CHECK(sum / 10000.0 == doctest::Approx(1.0).epsilon(0.05));
  const Tensor g = drop.backward(Tensor({1, 1000, 10}, 1.0));
  CHECK(g.data == y.data);
  CHECK(drop.forward(x, Mode::infer).data == x.data);
  CHECK_THROWS(Dropout(1.0, &rng));
}

TEST_CASE("bidirectional GRU single step by hand") {
  BiGru gru(1, 1);
  for (auto* d : {&gru.fwd, &gru.bwd}) {
    d->w.value.data = {0.5, -0.3, 0.8};  // z, r, c
    d->u.value.data = {0.2, 0.4, -0.6};
    d->b.value.data = {0.1, 0.0, -0.2};
  }
  Tensor x({1, 2, 1});
  x.data = {1.0, -2.0};
  const Tensor y = gru.forward(x, Mode::infer);
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  auto step = [&](double xt, double h) {
    const double z = sig(0.5 * xt + 0.2 * h + 0.1);
    const double r = sig(-0.3 * xt + 0.4 * h);
    const double c = std::tanh(0.8 * xt - 0.6 * (r * h) - 0.2);
    return z * h + (1.0 - z) * c;
  };
  const double f0 = step(1.0, 0.0), f1 = step(-2.0, f0);
  const double b1 = step(-2.0, 0.0), b0 = step(1.0, b1);
  CHECK(y.shape == std::vector<std::size_t>{1, 2, 2});
  CHECK(y[0] == doctest::Approx(f0));
  CHECK(y[1] == doctest::Approx(b0));
  CHECK(y[2] == doctest::Approx(f1));
  CHECK(y[3] == doctest::Approx(b1));
}

TEST_CASE("activations") {
  CHECK(parse_activation("relu") == Activation::relu);
  CHECK_THROWS(parse_activation("gelu"));
  CHECK(activate(Activation::relu, -1.0) == 0.0);
  CHECK(activate(Activation::sigmoid, 0.0) == 0.5);
  CHECK(activate(Activation::tanh, 0.3) == doctest::Approx(std::tanh(0.3)));
}

TEST_CASE("binary cross-entropy values, masking and clamping") {
  Tensor p({1, 2, 2});
  p.data = {0.8, 0.1, 0.5, 0.5};
  const std::vector<std::uint8_t> t{1, 0, 1, 1};
  const std::vector<std::uint8_t> both{1, 1}, first{1, 0};
  const double full = -(std::log(0.8) + std::log(0.9) + 2.0 * std::log(0.5)) / 4.0;
  CHECK(bce_loss(p, t, both) == doctest::Approx(full));
  CHECK(bce_loss(p, t, first) == doctest::Approx(-(std::log(0.8) + std::log(0.9)) / 2.0));
  Tensor g;
  bce_loss(p, t, first, &g);
  CHECK(g[2] == 0.0);
  CHECK(g[0] == doctest::Approx(-1.0 / 0.8 / 2.0));

  Tensor sat({1, 1, 1});
  sat.data = {0.0};
  const std::vector<std::uint8_t> one{1};
  CHECK(bce_loss(sat, one, one, &g) == doctest::Approx(-std::log(kProbClamp)));
  CHECK(g[0] == 0.0);
  CHECK_THROWS_AS(bce_loss(p, one, both), ShapeError);
}

TEST_CASE("adam first step moves each weight by about the learning rate") {
  std::vector<double> w{1.0, -2.0, 0.5}, g{0.3, -4.0, 1e-3}, m(3, 0.0), v(3, 0.0);
  adam_step(w, g, m, v, 1, {0.01, 0.9, 0.999, 1e-8});
  CHECK(w[0] == doctest::Approx(1.0 - 0.01));
  CHECK(w[1] == doctest::Approx(-2.0 + 0.01));
  CHECK(w[2] == doctest::Approx(0.5 - 0.01).epsilon(1e-4));
  CHECK(m[0] == doctest::Approx(0.03));
  CHECK(v[1] == doctest::Approx(0.001 * 16.0));
  // Second step with the same gradient, checked against the update rule.
  const double m2 = 0.9 * 0.03 + 0.1 * 0.3, v2 = 0.999 * 0.001 * 0.09 + 0.001 * 0.09;
  const double mh = m2 / (1 - 0.81), vh = v2 / (1 - 0.999 * 0.999);
  const double expect = w[0] - 0.01 * mh / (std::sqrt(vh) + 1e-8);
  adam_step(w, g, m, v, 2, {0.01, 0.9, 0.999, 1e-8});
  CHECK(w[0] == doctest::Approx(expect));
}

TEST_CASE("default pooling factors") {
  CHECK(default_pool_factors(40, 3) == std::vector<std::size_t>{5, 2, 2});
  CHECK(default_pool_factors(1024, 3) == std::vector<std::size_t>{8, 8, 8});
  CHECK(default_pool_factors(40, 1) == std::vector<std::size_t>{20});
  CHECK(default_pool_factors(1024, 1) == std::vector<std::size_t>{512});
  CHECK_THROWS_AS(default_pool_factors(40, 0), ConfigError);
}

TEST_CASE("architecture validation") {
  CrnnSpec s;
  CHECK_NOTHROW(validate(s));
  s.pool_factors = {5, 2, 4};
  CHECK_THROWS_AS(validate(s), ConfigError);
  s = CrnnSpec{};
  s.gru_units = {0};
  CHECK_THROWS_AS(validate(s), ConfigError);
  s = CrnnSpec{};
  s.dropout = 1.0;
  CHECK_THROWS_AS(validate(s), ConfigError);
  s = CrnnSpec{};
  s.bins = 1024;
  s.channels = 4;
  s.pool_factors = {8, 8, 8};
  CHECK_NOTHROW(validate(s));
}

TEST_CASE("default CRNN layer stack") {
  CrnnSpec s;
  s.channels = 2;
  auto m = build_crnn(s, 1);
  CHECK(m.descriptor() ==
        "conv2d(2->64,3x3);batch_norm(64);max_pool_freq(5);dropout(0.5);"
        "conv2d(64->64,3x3);batch_norm(64);max_pool_freq(2);dropout(0.5);"
        "conv2d(64->64,3x3);batch_norm(64);max_pool_freq(2);dropout(0.5);"
        "flatten;bigru(128->2x64);dropout(0.5);bigru(128->2x64);dropout(0.5);"
        "time_dense(128->64,linear);dropout(0.5);time_dense(64->6,sigmoid)");
  Tensor x({1, 7, 40, 2});
  const Tensor y = m.forward(x, Mode::train);
  CHECK(y.shape == std::vector<std::size_t>{1, 7, 6});
  for (double v : y.data) CHECK((v > 0.0 && v < 1.0));
}

TEST_CASE("parameter count of a small CRNN") {
  CrnnSpec s;
  s.bins = 4;
  s.channels = 1;
  s.conv_filters = {2};
  s.pool_factors = {2};
  s.gru_units = {3};
  s.dense_units = {};
  s.n_classes = 2;
  auto m = build_crnn(s, 1);
  // conv 2*9*1+2, bn 2+2, gru 2*(9*4 + 9*3 + 9), head 6*2+2
  CHECK(m.n_parameters() == 20 + 4 + 144 + 14);
}

TEST_CASE("model spec string round trip") {
  ModelSpec spec;
  spec.crnn.channels = 6;
  spec.crnn.dropout = 0.25;
  spec.crnn.dense_units = {};
  CHECK(ModelSpec::parse(spec.to_string()).to_string() == spec.to_string());
  ModelSpec mlp;
  mlp.kind = ModelSpec::Kind::mlp;
  CHECK(ModelSpec::parse(mlp.to_string()).to_string() == mlp.to_string());
  CHECK_THROWS(ModelSpec::parse("transformer layers=4"));
}

TEST_CASE("same seed builds identical weights") {
  CrnnSpec s = gradcheck::tiny_crnn_spec();
  auto a = build_crnn(s, 9), b = build_crnn(s, 9), c = build_crnn(s, 10);
  CHECK(a.snapshot() == b.snapshot());
  CHECK(a.snapshot() != c.snapshot());
}

TEST_CASE("checkpoint round trip reproduces predictions bit for bit") {
  testutil::TempDir dir("ckpt");
  Rng rng(4);
  CrnnSpec s = gradcheck::tiny_crnn_spec();
  s.dropout = 0.3;
  auto model = build_crnn(s, 2);
  model.forward(random_tensor({2, 6, 8, 2}, rng), Mode::train);  // populate running stats
  Normalizer norm{8, 2, std::vector<double>(16, 0.5), std::vector<double>(16, 2.0)};
  CheckpointMeta meta{FeatureClass::bin_mbe, 6, 1, 0.5, {"a", "b"}};
  save_checkpoint(dir / "m.sedm", model, norm, meta);
  auto back = load_checkpoint(dir / "m.sedm");
  CHECK(back.model.descriptor() == model.descriptor());
  CHECK(back.normalizer.std == norm.std);
  CHECK(back.meta.class_names == meta.class_names);
  CHECK(back.meta.feature_class == FeatureClass::bin_mbe);
  for (int i = 0; i < 5; ++i) {
    const Tensor x = random_tensor({1, 6, 8, 2}, rng);
    CHECK(back.model.forward(x, Mode::infer).data == model.forward(x, Mode::infer).data);
  }
  CrnnSpec wider = gradcheck::tiny_crnn_spec();
  wider.gru_units = {5};
  auto other = build_crnn(wider, 1);
  CHECK_THROWS_AS(load_checkpoint_into(dir / "m.sedm", other), FormatError);
  testutil::spit(dir / "junk.sedm", "NOPE");
  CHECK_THROWS_AS(load_checkpoint(dir / "junk.sedm"), FormatError);
}

namespace {

// Model whose weights are irrelevant; the monitor scripts the ER sequence.
struct ScriptedRun {
  explicit ScriptedRun(std::vector<double> e) : ers(std::move(e)) {}

  std::vector<double> ers;
  std::vector<std::vector<double>> snapshots;
  std::size_t calls = 0;

  MonitorFn monitor() {
    return [this](ModelGraph& m) {
      snapshots.push_back(m.snapshot());
      MetricReport r;
      r.error_rate = ers[std::min(calls, ers.size() - 1)];
      ++calls;
      return r;
    };
  }
};

SequenceBatch toy_batch(Rng& rng, std::size_t n) {
  SequenceBatch b;
  b.seq_len = 5;
  b.bins = 8;
  b.channels = 2;
  b.n_classes = 2;
  for (std::size_t i = 0; i < n; ++i) {
    Sequence s;
    s.input = random_tensor({5 * 8 * 2}, rng).data;
    s.target = gradcheck::random_bits(10, rng);
    s.mask.assign(5, 1);
    b.sequences.push_back(s);
  }
  return b;
}

}  // namespace

TEST_CASE("patience 1 with a worsening monitor stops after two epochs") {
  Rng rng(1);
  auto model = build_crnn(gradcheck::tiny_crnn_spec(), 1);
  ScriptedRun run{{0.5, 0.6, 0.7, 0.8}};
  TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.max_epochs = 10;
  cfg.patience = 1;
  const auto h = train(model, toy_batch(rng, 3), run.monitor(), cfg);
  CHECK(h.epochs.size() == 2);
  CHECK(h.best_epoch == 0);
  CHECK(h.stopped_early);
  CHECK(model.snapshot() == run.snapshots[0]);
}

TEST_CASE("training restores the best monitored snapshot") {
  Rng rng(2);
  auto model = build_crnn(gradcheck::tiny_crnn_spec(), 1);
  ScriptedRun run{{0.9, 0.4, 0.6, 0.4, 0.7, 0.8}};
  TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.max_epochs = 6;
  cfg.patience = 3;
  const auto h = train(model, toy_batch(rng, 4), run.monitor(), cfg);
  // Ties do not count as improvement: epoch 1 stays best, stop after epoch 4.
  CHECK(h.best_epoch == 1);
  CHECK(h.epochs.size() == 5);
  CHECK(h.best_er == 0.4);
  CHECK(model.snapshot() == run.snapshots[1]);
}

TEST_CASE("training is deterministic for a fixed seed") {
  auto run_once = [] {
    Rng rng(5);
    auto model = build_crnn(gradcheck::tiny_crnn_spec(), 3);
    ScriptedRun run{{0.5}};
    TrainConfig cfg;
    cfg.learning_rate = 1e-2;
    cfg.max_epochs = 3;
    cfg.patience = 2;
    cfg.batch_size = 2;
    const auto h = train(model, toy_batch(rng, 5), run.monitor(), cfg);
    return std::make_pair(h.to_tsv(), model.snapshot());
  };
  CHECK(run_once() == run_once());
}

TEST_CASE("training loss decreases on a learnable toy problem") {
  Rng rng(8);
  auto model = build_crnn(gradcheck::tiny_crnn_spec(), 4);
  SequenceBatch b = toy_batch(rng, 4);
  // Target: class 0 active where the first input bin is positive.
  for (auto& s : b.sequences) {
    for (std::size_t t = 0; t < 5; ++t) {
      s.target[t * 2] = s.input[t * 16] > 0.0;
      s.target[t * 2 + 1] = 0;
    }
  }
  ScriptedRun run{{0.5}};
  TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.max_epochs = 60;
  cfg.patience = 59;
  const auto h = train(model, b, run.monitor(), cfg);
  CHECK(h.epochs.back().train_loss < 0.5 * h.epochs.front().train_loss);
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.patience = cfg.max_epochs;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK(parse_monitor_split("test") == MonitorSplit::test);
  CHECK_THROWS_AS(parse_monitor_split("train"), ConfigError);
}

TEST_CASE("history TSV layout") {
  TrainHistory h;
  h.epochs = {{0, 0.5, 1.0, 0.25}, {1, 0.25, 0.5, 0.5}};
  h.best_epoch = 1;
  CHECK(h.to_tsv() == "epoch\ttrain_loss\tmonitor_er\tmonitor_f\n0\t0.5\t1\t0.25\n1\t0.25\t0.5\t0.5\n# best_epoch\t1\n");
}
