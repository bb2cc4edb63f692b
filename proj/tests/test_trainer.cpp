#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "ada/error.hpp"
#include "ada/trainer.hpp"
#include "support/oracles.hpp"

using namespace ada;

namespace {

TrainingConfig quick_config() {
  TrainingConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.learning_rate = 1e-2;
  cfg.source_perturb.epsilon = 0.05;
  cfg.source_perturb.steps = 2;
  cfg.target_perturb.epsilon = 0.05;
  cfg.target_perturb.steps = 1;
  cfg.weights = {0.1, 0.5};
  cfg.architecture.feature_hidden = {16};
  cfg.architecture.representation_dim = 4;
  cfg.architecture.discriminator_hidden = {8};
  return cfg;
}

TrainingConfig plain_config() {
  TrainingConfig cfg = quick_config();
  cfg.weights = {0.0, 0.0};
  cfg.source_perturb.epsilon = 0.0;
  cfg.target_perturb.epsilon = 0.0;
  return cfg;
}

struct Benchmark {
  DomainDataset source, target;
};

Benchmark moons(std::uint64_t seed, std::size_t n = 100) {
  DomainDataset s = two_moons(n, 0.08, seed);
  return {s, apply_shift(s, ShiftSpec{30.0, {}, 0.05}, seed + 1)};
}

bool same_parameters(const ModelBundle& a, const ModelBundle& b) {
  auto pa = a.snapshot(), pb = b.snapshot();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (!pa[i].bitwise_equal(pb[i])) return false;
  return true;
}

double domain_loss(const ModelBundle& m, const StepBatch& batch) {
  Tape tape;
  return adv_dom_loss(m.bind(tape, GradMask::none()), tape.constant(batch.x_s), tape.constant(batch.x_t))
      .value()
      .item();
}

}  // namespace

TEST_CASE("config validation and enum names") {
  TrainingConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainingConfig{};
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainingConfig{};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK(parse_optimizer(to_string(OptimizerKind::sgd_momentum)) == OptimizerKind::sgd_momentum);
  CHECK(parse_minimax_mode("reversal") == MinimaxMode::reversal);
  CHECK_THROWS_AS(parse_optimizer("rmsprop"), ConfigError);
}

TEST_CASE("optimizer updates") {
  Tensor p = Tensor::vector({1.0, -1.0});
  const Tensor g = Tensor::vector({0.5, -2.0});
  Optimizer sgd(OptimizerKind::sgd, 0.1, 1);
  sgd.step(0, p, g);
  CHECK(p[0] == doctest::Approx(0.95));
  CHECK(p[1] == doctest::Approx(-0.8));

  Tensor q = Tensor::vector({0.0});
  Optimizer mom(OptimizerKind::sgd_momentum, 0.1, 1);
  mom.step(0, q, Tensor::vector({1.0}));
  mom.step(0, q, Tensor::vector({1.0}));
  CHECK(q[0] == doctest::Approx(-0.1 - 0.19));

  // Adam's first step moves each coordinate by lr * sign(g) (up to epsilon).
  Tensor r = Tensor::vector({0.0, 0.0});
  Optimizer adam(OptimizerKind::adam, 0.01, 1);
  adam.step(0, r, Tensor::vector({3.0, -0.2}));
  CHECK(r[0] == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(r[1] == doctest::Approx(0.01).epsilon(1e-6));

  Tensor s = Tensor::vector({1.0, 2.0});
  const Tensor before = s;
  for (auto kind : {OptimizerKind::sgd, OptimizerKind::sgd_momentum, OptimizerKind::adam}) {
    Optimizer zero(kind, 0.0, 1);
    zero.step(0, s, Tensor::vector({0.3, -0.7}));
    CHECK(s.bitwise_equal(before));
  }
}

TEST_CASE("one step with learning rate zero leaves parameters unchanged") {
  const Benchmark b = moons(1, 32);
  for (auto mode : {MinimaxMode::alternating, MinimaxMode::reversal}) {
    TrainingConfig cfg = quick_config();
    cfg.minimax_mode = mode;
    ModelBundle model = ModelBundle::create(resolve_architecture(cfg, b.source), 3);
    TrainState state = TrainState::create(cfg, model);
    state.optimizer = Optimizer(cfg.optimizer, 0.0, model.named_parameters().size());
    train_step(state, cfg, b.source.features, b.source.label_span(), b.target.features);
    CHECK(same_parameters(state.model, model));
  }
}

TEST_CASE("discriminator step descends and feature step ascends the domain loss") {
  const Benchmark b = moons(2, 64);
  TrainingConfig cfg = quick_config();
  ModelBundle model = ModelBundle::create(resolve_architecture(cfg, b.source), 5);
  StepBatch batch{b.source.features, *b.source.labels, b.target.features, Tensor(b.source.features.shape()),
                  Tensor(b.target.features.shape())};
  const double before = domain_loss(model, batch);

  TrainState disc_state = TrainState::create(cfg, model);
  disc_state.optimizer = Optimizer(OptimizerKind::sgd, 1e-3, model.named_parameters().size());
  apply_gradients(disc_state, discriminator_gradients(model, batch));
  CHECK(domain_loss(disc_state.model, batch) <= before);

  // Adversarial part of the feature gradient: total(lambda_adv = 1) - total(lambda_adv = 0).
  const auto with = feature_gradients(model, batch, {1.0, 0.0}, ConsistencySpace::representation, false);
  const auto without = feature_gradients(model, batch, {0.0, 0.0}, ConsistencySpace::representation, false);
  StepGradients adversarial{{}, {}};
  auto params = model.named_parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].group == ParamGroup::feature_extractor) {
      adversarial.grads.push_back(with.grads[i] - without.grads[i]);
    } else {
      adversarial.grads.emplace_back();
    }
  }
  TrainState feat_state = TrainState::create(cfg, model);
  feat_state.optimizer = Optimizer(OptimizerKind::sgd, 1e-3, params.size());
  apply_gradients(feat_state, adversarial);
  CHECK(domain_loss(feat_state.model, batch) >= before);
}

TEST_CASE("reversal mode gives the discriminator the unreversed domain gradient") {
  const Benchmark b = moons(3, 32);
  TrainingConfig cfg = quick_config();
  ModelBundle model = ModelBundle::create(resolve_architecture(cfg, b.source), 6);
  StepBatch batch{b.source.features, *b.source.labels, b.target.features, Tensor(b.source.features.shape()),
                  Tensor(b.target.features.shape())};
  const double lambda = 0.25;
  const auto joint = feature_gradients(model, batch, {lambda, 0.0}, ConsistencySpace::representation, true);
  const auto disc = discriminator_gradients(model, batch);
  auto params = model.named_parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].group != ParamGroup::discriminator) continue;
    for (std::size_t k = 0; k < joint.grads[i].size(); ++k)
      CHECK(joint.grads[i][k] == doctest::Approx(lambda * disc.grads[i][k]).epsilon(1e-12));
  }
}

TEST_CASE("zero weights and zero budgets reproduce plain supervised training bitwise") {
  const Benchmark b = moons(4, 100);
  TrainingConfig cfg = plain_config();
  cfg.epochs = 5;
  for (auto mode : {MinimaxMode::alternating, MinimaxMode::reversal}) {
    cfg.minimax_mode = mode;
    const FitResult ada = fit(cfg, b.source, b.target);
    const FitResult plain = fit_supervised(cfg, b.source);
    CHECK(same_parameters(ada.model, plain.model));
    REQUIRE(ada.metrics.size() == plain.metrics.size());
    for (std::size_t e = 0; e < ada.metrics.size(); ++e) {
      CHECK(ada.metrics[e].src_cls == plain.metrics[e].src_cls);
      CHECK(ada.metrics[e].total == plain.metrics[e].total);
    }
  }
}

TEST_CASE("fit is deterministic and emits one row per epoch") {
  const Benchmark b = moons(5, 80);
  const TrainingConfig cfg = quick_config();
  const FitResult r1 = fit(cfg, b.source, b.target);
  const FitResult r2 = fit(cfg, b.source, b.target);
  CHECK(r1.metrics.size() == static_cast<std::size_t>(cfg.epochs));
  CHECK(same_parameters(r1.model, r2.model));
  std::ostringstream a, c;
  write_metrics_csv(r1.metrics, a);
  write_metrics_csv(r2.metrics, c);
  CHECK(a.str() == c.str());
  for (const auto& row : r1.metrics) {
    CHECK(row.source_accuracy >= 0.0);
    CHECK(row.source_accuracy <= 1.0);
    REQUIRE(row.target_accuracy.has_value());
    CHECK(std::isfinite(row.total));
    CHECK(row.cons >= 0.0);
  }
  CHECK(r1.metrics[0].epoch == 1);
}

TEST_CASE("target labels never influence training") {
  const Benchmark b = moons(6, 80);
  TrainingConfig cfg = quick_config();
  DomainDataset poisoned = b.target;
  for (auto& y : *poisoned.labels) y = 1 - y;
  DomainDataset unlabeled = b.target;
  unlabeled.labels.reset();
  const FitResult clean = fit(cfg, b.source, b.target);
  const FitResult flipped = fit(cfg, b.source, poisoned);
  const FitResult blind = fit(cfg, b.source, unlabeled);
  CHECK(same_parameters(clean.model, flipped.model));
  CHECK(same_parameters(clean.model, blind.model));
  CHECK_FALSE(blind.metrics.back().target_accuracy.has_value());
  for (std::size_t e = 0; e < clean.metrics.size(); ++e) CHECK(clean.metrics[e].total == flipped.metrics[e].total);
}

TEST_CASE("source-only training separates linearly separable data") {
  DomainDataset src = gaussian_blobs({{-2.0, 0.0}, {2.0, 0.5}}, 50, 0.5, 3);
  DomainDataset tgt = apply_shift(src, ShiftSpec{10.0, {}, 0.05}, 4);
  TrainingConfig cfg = plain_config();
  cfg.epochs = 200;
  cfg.batch_size = 32;
  cfg.learning_rate = 1e-3;
  cfg.architecture = Architecture{};
  bool reached = false;
  fit(cfg, src, tgt, [&](const MetricsRow& row) { reached = reached || row.source_accuracy >= 0.99; });
  CHECK(reached);
}

TEST_CASE("non-finite losses abort naming the term") {
  const Benchmark b = moons(7, 16);
  TrainingConfig cfg = quick_config();
  ModelBundle model = ModelBundle::create(resolve_architecture(cfg, b.source), 1);
  Tensor bad_t = b.target.features;
  bad_t(0, 0) = std::numeric_limits<double>::quiet_NaN();
  TrainState state = TrainState::create(cfg, model);
  try {
    train_step(state, cfg, b.source.features, b.source.label_span(), bad_t);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(e.term() == "adv_dom");
  }
  cfg.minimax_mode = MinimaxMode::reversal;
  cfg.source_perturb.epsilon = 0.0;
  Tensor bad_s = b.source.features;
  bad_s(1, 1) = std::numeric_limits<double>::infinity();
  TrainState state2 = TrainState::create(cfg, model);
  try {
    train_step(state2, cfg, bad_s, b.source.label_span(), b.target.features);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(e.term() == "src_cls");
  }
}

TEST_CASE("evaluate") {
  // Identity extractor with logits = z W: predicts class 0 when x0 > x1.
  ModelBundle m = oracle::linear_bundle(Tensor::matrix({{1.0, 0.0}, {0.0, 1.0}}), Tensor::vector({0.0, 0.0}));
  DomainDataset d;
  d.features = Tensor::matrix(
      {{1, 0}, {0, 1}, {2, 3}, {3, 2}, {0.5, 0.4}, {-1, -2}, {-2, -1}, {0, 0}, {5, 1}, {1, 5}});
  // Predictions: 0, 1, 1, 0, 0, 0, 1, 0 (tie -> lowest index), 0, 1.
  d.labels = std::vector<int>{0, 1, 0, 0, 1, 0, 1, 1, 0, 0};
  // Hand count of matches: rows 0, 1, 3, 5, 6, 8 -> 6 of 10.
  CHECK(evaluate(m, d) == doctest::Approx(0.6));
  d.labels = predict(m, d.features);
  CHECK(evaluate(m, d) == 1.0);

  ModelBundle constant = oracle::linear_bundle(Tensor::matrix({{0.0, 0.0}, {0.0, 0.0}}), Tensor::vector({0.0, 0.0}));
  d.labels = std::vector<int>{0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
  CHECK(evaluate(constant, d) == 0.5);
  d.labels.reset();
  CHECK_THROWS_AS(evaluate(m, d), ContractError);
}

TEST_CASE("metrics csv layout") {
  MetricsRow row;
  row.epoch = 1;
  row.src_cls = 0.123456789012;
  row.total = 1.0 / 3.0;
  row.source_accuracy = 1.0;
  row.discriminator_accuracy = 0.5;
  std::vector<MetricsRow> rows{row};
  std::ostringstream out;
  write_metrics_csv(rows, out);
  CHECK(out.str() ==
        "epoch,src_cls,adv_dom,cons,total,source_accuracy,target_accuracy,discriminator_accuracy\n"
        "1,0.123456789,0,0,0.333333333,1,,0.5\n");
}

TEST_CASE("metrics rows carry diagnostics when enabled") {
  const Benchmark b = moons(8, 60);
  TrainingConfig cfg = quick_config();
  cfg.epochs = 2;
  cfg.diagnostics = true;
  const FitResult r = fit(cfg, b.source, b.target);
  REQUIRE(r.metrics.back().diagnostics.has_value());
  std::ostringstream out;
  write_metrics_csv(r.metrics, out);
  const std::string header = out.str().substr(0, out.str().find('\n'));
  CHECK(header.find(",mi_z_d,") != std::string::npos);
  CHECK(header.find("ada_ib_score") != std::string::npos);
}
