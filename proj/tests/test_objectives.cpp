#include <doctest.h>

#include <cmath>

#include "ada/error.hpp"
#include "ada/objectives.hpp"
#include "ada/perturb.hpp"
#include "support/oracles.hpp"

using namespace ada;

TEST_CASE("domain loss at a uniform discriminator is 2 ln 2") {
  Tape tape;
  Var p_s = tape.constant(Tensor({4, 1}, 0.5));
  Var p_t = tape.constant(Tensor({3, 1}, 0.5));
  CHECK(std::abs(domain_bce(p_s, p_t).value().item() - 2.0 * std::log(2.0)) <= 1e-12);
}

TEST_CASE("domain loss hand-worked example") {
  Tape tape;
  const double v = domain_bce(tape.constant(Tensor({2, 1}, {0.8, 0.6})), tape.constant(Tensor({1, 1}, {0.3})))
                       .value()
                       .item();
  CHECK(std::abs(v - 0.7236595) <= 1e-6);
  CHECK(std::abs(v - (-(std::log(0.8) + std::log(0.6)) / 2.0 - std::log(0.7))) <= 1e-15);
}

TEST_CASE("domain loss is finite and near zero at perfect discrimination") {
  Tape tape;
  const double v = domain_bce(tape.constant(Tensor({2, 1}, 1.0)), tape.constant(Tensor({2, 1}, 0.0))).value().item();
  CHECK(std::isfinite(v));
  CHECK(v > 0.0);
  CHECK(v == doctest::Approx(-2.0 * std::log1p(-kProbabilityFloor)).epsilon(1e-9));
  Tape t2;
  CHECK_THROWS_AS(domain_bce(t2.constant(Tensor({0, 1})), t2.constant(Tensor({1, 1}, 0.5))), ContractError);
}

TEST_CASE("domain loss is symmetric under swapping domains and flipping outputs") {
  Rng rng(3);
  Tape tape;
  const Tensor ps = oracle::random_tensor({5, 1}, rng, 0.01, 0.99);
  const Tensor pt = oracle::random_tensor({4, 1}, rng, 0.01, 0.99);
  Tensor flip_s = pt, flip_t = ps;
  for (double& v : flip_s.values()) v = 1.0 - v;
  for (double& v : flip_t.values()) v = 1.0 - v;
  const double a = domain_bce(tape.constant(ps), tape.constant(pt)).value().item();
  const double b = domain_bce(tape.constant(flip_s), tape.constant(flip_t)).value().item();
  CHECK(a == doctest::Approx(b).epsilon(1e-14));
}

TEST_CASE("consistency loss is zero at zero perturbation and non-negative otherwise") {
  Architecture a;
  ModelBundle m = ModelBundle::create(a, 2);
  Rng rng(1);
  const Tensor x = oracle::random_tensor({6, 2}, rng);
  for (auto space : {ConsistencySpace::representation, ConsistencySpace::probabilities}) {
    Tape tape;
    BoundBundle b = m.bind(tape, GradMask::none());
    CHECK(consistency_loss(b, tape.constant(x), tape.constant(Tensor(x.shape())), space).value().item() == 0.0);
    const Tensor d = oracle::random_tensor(x.shape(), rng, -0.2, 0.2);
    CHECK(consistency_loss(b, tape.constant(x), tape.constant(d), space).value().item() >= 0.0);
    CHECK_THROWS_AS(consistency_loss(b, tape.constant(x), tape.constant(Tensor({6, 3})), space), DimensionError);
  }
}

TEST_CASE("consistency loss on a linear extractor is mean ||W delta||^2") {
  Rng rng(4);
  const Tensor w = oracle::random_tensor({2, 3}, rng);
  ModelBundle m = oracle::linear_extractor(w);
  const Tensor x = oracle::random_tensor({5, 2}, rng);
  const Tensor d = oracle::random_tensor({5, 2}, rng, -0.1, 0.1);
  Tape tape;
  const double got = consistency_loss(m.bind(tape, GradMask::none()), tape.constant(x), tape.constant(d))
                         .value()
                         .item();
  double expect = 0.0;
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t k = 0; k < 3; ++k) {
      const double v = d(i, 0) * w(0, k) + d(i, 1) * w(1, k);
      expect += v * v;
    }
  expect /= 5.0;
  CHECK(got == doctest::Approx(expect).epsilon(1e-13));
}

TEST_CASE("classification loss with a zero final layer is ln 2") {
  Architecture a;
  ModelBundle m = ModelBundle::create(a, 0);
  for (double& v : m.classifier.weight(0).values()) v = 0.0;
  Rng rng(2);
  const Tensor x = oracle::random_tensor({4, 2}, rng);
  const std::vector<int> y{0, 1, 1, 0};
  Tape tape;
  const double v = src_cls_loss(m.bind(tape, GradMask::none()), tape.constant(x), tape.constant(Tensor(x.shape())), y)
                       .value()
                       .item();
  CHECK(v == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("classification loss hand-worked two-sample example") {
  // Identity extractor; logits = z W + b with W = [[1, -1], [0.5, 2]], b = [0.1, -0.2].
  ModelBundle m = oracle::linear_bundle(Tensor::matrix({{1.0, -1.0}, {0.5, 2.0}}), Tensor::vector({0.1, -0.2}));
  const Tensor x = Tensor::matrix({{1.0, 0.0}, {0.0, 1.0}});
  const std::vector<int> y{0, 1};
  // Sample 1 logits [1.1, -1.2]: -log softmax_0 = log(1 + e^{-2.3}).
  // Sample 2 logits [0.6, 1.8]: -log softmax_1 = log(1 + e^{-1.2}).
  const double expect = (std::log1p(std::exp(-2.3)) + std::log1p(std::exp(-1.2))) / 2.0;
  Tape tape;
  const double v =
      src_cls_loss(m.bind(tape, GradMask::none()), tape.constant(x), tape.constant(Tensor(x.shape())), y)
          .value()
          .item();
  CHECK(v == doctest::Approx(expect).epsilon(1e-14));
  CHECK(std::abs(v - 0.179414) <= 1e-6);
}

TEST_CASE("classification loss with fgsm perturbation is not smaller on linear models") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const Tensor w = oracle::random_tensor({2, 2}, rng), b = oracle::random_tensor({2}, rng);
    ModelBundle m = oracle::linear_bundle(w, b);
    const Tensor x = oracle::random_tensor({6, 2}, rng);
    const std::vector<int> y{0, 1, 1, 0, 1, 0};
    const Tensor d = fgsm(m, x, y, PerturbationConfig::fgsm(0.1));
    Tape tape;
    BoundBundle bb = m.bind(tape, GradMask::none());
    Var xs = tape.constant(x);
    CHECK(src_cls_loss(bb, xs, tape.constant(d), y).value().item() >=
          src_cls_loss(bb, xs, tape.constant(Tensor(x.shape())), y).value().item());
  }
}

TEST_CASE("total loss arithmetic") {
  const LossBreakdown r = total_loss(1.0, 0.4, 0.1, LossWeights{0.5, 2.0});
  CHECK(r.total == doctest::Approx(1.4).epsilon(1e-15));
  CHECK(total_loss(0.7, 5.0, 3.0, LossWeights{0.0, 0.0}).total == 0.7);
  CHECK_THROWS_AS((LossWeights{-1.0, 0.0}.validate()), ConfigError);
  CHECK_THROWS_AS((LossWeights{0.0, NAN}.validate()), ConfigError);
}

TEST_CASE("engine total matches the breakdown recomputation") {
  Architecture a;
  a.num_classes = 3;
  ModelBundle m = ModelBundle::create(a, 9);
  Rng rng(5);
  const Tensor xs = oracle::random_tensor({8, 2}, rng), xt = oracle::random_tensor({8, 2}, rng);
  const Tensor ds = oracle::random_tensor({8, 2}, rng, -0.1, 0.1), dt = oracle::random_tensor({8, 2}, rng, -0.1, 0.1);
  const std::vector<int> y{0, 1, 2, 0, 1, 2, 0, 1};
  const LossWeights w{0.3, 1.7};
  const LossBreakdown r = evaluate_objective(m, xs, ds, y, xt, dt, w);
  CHECK(r.total == total_loss(r.src_cls, r.adv_dom, r.cons, w).total);
  Tape tape;
  BoundBundle b = m.bind(tape, GradMask::none());
  Var s = src_cls_loss(b, tape.constant(xs), tape.constant(ds), y);
  Var d = adv_dom_loss(b, tape.constant(xs), tape.constant(xt));
  Var c = consistency_loss(b, tape.constant(xt), tape.constant(dt));
  const double engine = weighted_total(s, d, c, w).value().item();
  CHECK(std::abs(engine - r.total) <= 1e-12 * std::abs(r.total));
  CHECK(r.src_cls >= 0.0);
  CHECK(r.cons >= 0.0);
}

TEST_CASE("full objective gradient against finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto report = oracle::check_full_objective(seed);
    CAPTURE(seed);
    CHECK_MESSAGE(report.ok, report.where);
  }
}
