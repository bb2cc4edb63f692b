#include <doctest.h>

#include <cmath>
#include <numbers>

#include "ada/data.hpp"
#include "ada/diagnostics.hpp"
#include "ada/error.hpp"
#include "support/oracles.hpp"

using namespace ada;

TEST_CASE("mutual information of independent and identical bits") {
  Rng rng(1);
  const std::size_t n = 100000;
  std::vector<int> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = static_cast<int>(rng.below(2));
    b[i] = static_cast<int>(rng.below(2));
  }
  CHECK(mutual_information(discretize_labels(a), discretize_labels(b)) < 0.01);
  CHECK(std::abs(mutual_information(discretize_labels(a), discretize_labels(a)) - std::log(2.0)) <= 0.01);
}

TEST_CASE("mutual information of a hand-computable 2x2 table") {
  std::vector<int> a, b;
  const int counts[2][2] = {{40, 10}, {10, 40}};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < counts[i][j]; ++k) {
        a.push_back(i);
        b.push_back(j);
      }
  const double mi = mutual_information(discretize_labels(a), discretize_labels(b));
  CHECK(std::abs(mi - 0.192745) <= 1e-6);
  CHECK(std::abs(mi - oracle::table_mi({{40, 10}, {10, 40}})) <= 1e-14);
}

TEST_CASE("mutual information contracts and bounds") {
  std::vector<int> a(9, 0), b(10, 0);
  CHECK_THROWS_AS(mutual_information(discretize_labels(a), discretize_labels(b)), ContractError);
  std::vector<int> small(5, 1);
  CHECK_THROWS_AS(mutual_information(discretize_labels(small), discretize_labels(small)), ContractError);

  Rng rng(2);
  const Tensor z = oracle::random_tensor({500, 3}, rng);
  std::vector<int> y(500);
  for (auto& v : y) v = static_cast<int>(rng.below(3));
  const double mi = mi_binned(z, y, BinningSpec{8, 2});
  CHECK(mi >= 0.0);
  CHECK(mi <= std::log(3.0) + 1e-12);
  CHECK_THROWS_AS((BinningSpec{1, 2}.validate()), ConfigError);
  CHECK_THROWS_AS((BinningSpec{4, 0}.validate()), ConfigError);
}

TEST_CASE("discretize uses equal-width bins per column") {
  const Tensor x = Tensor::matrix({{0.0, 10.0}, {0.5, 10.0}, {1.0, 10.0}, {0.24, 10.0}});
  const Discretized d = discretize(x, BinningSpec{4, std::nullopt});
  CHECK(d.cells == 16);
  // Column 0 bins: 0, 2, 3 (max goes to last bin), 0. Column 1 is constant.
  CHECK(d.codes[0] == d.codes[3]);
  CHECK(d.codes[0] != d.codes[1]);
  CHECK(d.codes[1] != d.codes[2]);
}

TEST_CASE("input gradient norm") {
  DomainDataset data = two_moons(40, 0.1, 1);
  // Constant output: zero classifier weights.
  Architecture a;
  ModelBundle m = ModelBundle::create(a, 1);
  for (double& v : m.classifier.weight(0).values()) v = 0.0;
  CHECK(input_grad_norm(m, data) == 0.0);

  // Linear logistic model: gradient is (p_other) * (w_other - w_y) in closed form.
  Rng rng(3);
  const Tensor w = oracle::random_tensor({2, 2}, rng, -2, 2), b = oracle::random_tensor({2}, rng);
  ModelBundle lin = oracle::linear_bundle(w, b);
  double expect = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int y = (*data.labels)[i], o = 1 - y;
    double margin = b[y] - b[o];
    for (std::size_t k = 0; k < 2; ++k) margin += data.features(i, k) * (w(k, y) - w(k, o));
    const double p_other = 1.0 / (1.0 + std::exp(margin));
    expect += p_other * std::hypot(w(0, y) - w(0, o), w(1, y) - w(1, o));
  }
  expect /= static_cast<double>(data.size());
  CHECK(std::abs(input_grad_norm(lin, data) - expect) <= 1e-8);

  data.labels.reset();
  CHECK_THROWS_AS(input_grad_norm(lin, data), ContractError);
}

TEST_CASE("manifold deviation bounds and monotonicity") {
  const DomainDataset data = two_moons(60, 0.1, 2);
  Rng rng(4);
  const Tensor w = oracle::random_tensor({2, 3}, rng, -2, 2);
  ModelBundle lin = oracle::linear_extractor(w);
  PerturbationConfig cfg;
  cfg.epsilon = 0.0;
  CHECK(manifold_deviation(lin, data, cfg, 4, 0) == 0.0);

  // ||W^T delta||_2 <= ||delta||_inf * sum_j ||row_j(W)||_2.
  double bound = 0.0;
  for (std::size_t j = 0; j < 2; ++j) bound += std::sqrt(w(j, 0) * w(j, 0) + w(j, 1) * w(j, 1) + w(j, 2) * w(j, 2));
  double previous = 0.0;
  for (double eps : {0.05, 0.1, 0.2}) {
    cfg.epsilon = eps;
    const double v = manifold_deviation(lin, data, cfg, 8, 5);
    CHECK(v <= eps * bound + 1e-12);
    CHECK(v >= previous);
    previous = v;
  }
  Architecture a;
  ModelBundle m = ModelBundle::create(a, 3);
  previous = 0.0;
  for (double eps : {0.05, 0.1, 0.2}) {
    cfg.epsilon = eps;
    const double v = manifold_deviation(m, data, cfg, 8, 5);
    CHECK(v >= previous);
    previous = v;
  }
  CHECK_THROWS_AS(manifold_deviation(m, data, cfg, 0, 5), ContractError);
}

TEST_CASE("gaussian kl closed form") {
  CHECK(std::abs(kl_divergence(0.0, 1.0, 1.0, 1.0) - 0.5) <= 1e-9);
  const DiagonalGaussian p{{0.3, -1.0}, {0.5, 2.0}};
  CHECK(kl_divergence(p, p) == 0.0);
  const DiagonalGaussian q{{1.0, 0.0}, {1.5, 0.7}};
  CHECK(kl_divergence(p, q) != doctest::Approx(kl_divergence(q, p)));
}

TEST_CASE("gaussian kl agrees with quadrature on random 2-D fits") {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor a = oracle::random_tensor({30, 2}, rng, -1, 1);
    Tensor b = oracle::random_tensor({30, 2}, rng, -1.5, 1.2);
    std::vector<std::size_t> rows(30);
    for (std::size_t i = 0; i < 30; ++i) rows[i] = i;
    const DiagonalGaussian p = fit_diagonal_gaussian(a, rows), q = fit_diagonal_gaussian(b, rows);
    CHECK(std::abs(kl_divergence(p, q) - oracle::quadrature_kl(p, q)) <= 1e-4);
  }
  const DiagonalGaussian p{{0.0}, {1.0}}, q{{1.0}, {1.0}};
  CHECK(std::abs(oracle::quadrature_kl(p, q) - 0.5) <= 1e-6);
}

TEST_CASE("diagonal gaussian fit uses MLE variance with a floor") {
  const Tensor x = Tensor::matrix({{1.0, 5.0}, {3.0, 5.0}, {5.0, 5.0}});
  const std::size_t rows[] = {0, 1, 2};
  const DiagonalGaussian g = fit_diagonal_gaussian(x, rows);
  CHECK(g.mean[0] == doctest::Approx(3.0));
  CHECK(g.variance[0] == doctest::Approx(8.0 / 3.0));
  CHECK(g.variance[1] == kVarianceFloor);
}

TEST_CASE("class conditional kl") {
  Rng rng(7);
  const Tensor z = oracle::random_tensor({40, 2}, rng);
  std::vector<int> y(40);
  for (std::size_t i = 0; i < 40; ++i) y[i] = static_cast<int>(i % 2);
  const ClassConditionalKl same = class_conditional_kl(z, y, z, y, 2);
  for (double v : same.source_to_target) CHECK(v == 0.0);
  CHECK(same.mean == 0.0);

  Tensor shifted = z;
  for (std::size_t i = 0; i < 40; ++i) shifted(i, 0) += 0.5 * static_cast<double>(y[i] + 1);
  const ClassConditionalKl kl = class_conditional_kl(z, y, shifted, y, 2);
  CHECK(kl.source_to_target[0] > 0.0);
  CHECK(kl.source_to_target[1] > kl.source_to_target[0]);
  CHECK(kl.mean == doctest::Approx((kl.source_to_target[0] + kl.source_to_target[1]) / 2.0));

  std::vector<int> only_zero(40, 0);
  try {
    class_conditional_kl(z, y, z, only_zero, 2);
    FAIL("expected DataContractError");
  } catch (const DataContractError& e) {
    CHECK(std::string(e.what()).find("class 1") != std::string::npos);
  }
}

TEST_CASE("information bottleneck scores") {
  const IbScores s = ib_scores(0.9, 0.9, 0.7, 0.7, 1.0, 0.5);
  CHECK(s.ada_ib == doctest::Approx(0.55).epsilon(1e-15));
  CHECK(ib_scores(0.4, 0.1, 0.3, 0.2, 0.0, 0.0).ib == 0.4);
}

TEST_CASE("diagnose on an untrained model") {
  const DomainDataset src = two_moons(200, 0.08, 1);
  const DomainDataset tgt = apply_shift(src, ShiftSpec{30.0, {}, 0.05}, 2);
  ModelBundle m = ModelBundle::create(Architecture{}, 0);
  const auto before = m.snapshot();
  DiagnosticsConfig cfg;
  const DiagnosticsReport r = diagnose(m, src, tgt, cfg);
  for (const auto& [name, value] : r.fields()) {
    CAPTURE(name);
    CHECK(std::isfinite(value));
    if (name.rfind("mi_", 0) == 0 || name.rfind("class_kl", 0) == 0) CHECK(value >= 0.0);
  }
  REQUIRE(r.class_kl.has_value());
  CHECK(r.scores.ib == r.mi_z_x_proxy - r.beta * r.mi_z_y);
  CHECK(r.scores.ada_ib == r.mi_z_x_perturbed_proxy + r.lambda * r.mi_z_d - r.beta * r.mi_z_y);
  CHECK(r.to_text() == diagnose(m, src, tgt, cfg).to_text());
  CHECK(r.to_text().find("nats") != std::string::npos);
  const auto after = m.snapshot();
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i].bitwise_equal(after[i]));

  DomainDataset unlabeled = tgt;
  unlabeled.labels.reset();
  CHECK_FALSE(diagnose(m, src, unlabeled, cfg).class_kl.has_value());
}
