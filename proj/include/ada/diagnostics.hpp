#pragma once

// Information-theoretic probes of a trained bundle. All quantities are in
// nats. Mutual information uses a plug-in histogram estimator without bias
// correction, so values are meant for comparing runs, not as absolute truth.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ada/data.hpp"
#include "ada/models.hpp"
#include "ada/perturb.hpp"

namespace ada {

struct BinningSpec {
  std::size_t bins_per_dim = 16;
  // Only the first k columns are binned; unset bins every column.
  std::optional<std::size_t> first_k = 2;

  void validate() const;
};

// Samples mapped to integer cell codes in [0, cells).
struct Discretized {
  std::vector<std::uint64_t> codes;
  std::uint64_t cells = 0;
};

// Equal-width bins per column over that column's [min, max].
Discretized discretize(const Tensor& samples, const BinningSpec& spec);
Discretized discretize_labels(std::span<const int> labels);

// Plug-in estimate from the joint histogram, clipped at zero.
double mutual_information(const Discretized& a, const Discretized& b);
double mi_binned(const Tensor& a, const Tensor& b, const BinningSpec& spec);
double mi_binned(const Tensor& a, std::span<const int> b, const BinningSpec& spec);

// Mean over samples of ||grad_x loss(x_i, y_i)||_2.
double input_grad_norm(const ModelBundle& bundle, const DomainDataset& data);

// Mean over samples of the largest representation shift
// ||f(x + delta) - f(x)||_2 across n_draws uniform draws from the ball.
double manifold_deviation(const ModelBundle& bundle, const DomainDataset& data,
                          const PerturbationConfig& cfg, std::size_t n_draws, std::uint64_t seed);

struct DiagonalGaussian {
  std::vector<double> mean;
  std::vector<double> variance;
};

inline constexpr double kVarianceFloor = 1e-6;

// Maximum-likelihood fit of the selected rows; variances floored at kVarianceFloor.
DiagonalGaussian fit_diagonal_gaussian(const Tensor& samples, std::span<const std::size_t> rows);
// KL(p || q) in closed form.
double kl_divergence(const DiagonalGaussian& p, const DiagonalGaussian& q);
double kl_divergence(double mean_p, double var_p, double mean_q, double var_q);

struct ClassConditionalKl {
  std::vector<double> source_to_target;  // KL(P_S(Z|Y=c) || P_T(Z|Y=c))
  std::vector<double> target_to_source;
  double mean = 0.0;  // mean of source_to_target
};

// Every class in [0, num_classes) needs at least dim(z) + 2 rows per domain;
// otherwise DataContractError naming the class.
ClassConditionalKl class_conditional_kl(const Tensor& z_s, std::span<const int> y_s, const Tensor& z_t,
                                        std::span<const int> y_t, std::size_t num_classes);
ClassConditionalKl class_conditional_kl(const ModelBundle& bundle, const DomainDataset& source,
                                        const DomainDataset& target);

struct IbScores {
  double ib = 0.0;      // I(Z;X) - beta I(Z;Y)
  double ada_ib = 0.0;  // I(Z;X+delta) + lambda I(Z;D) - beta I(Z;Y)
};

IbScores ib_scores(double mi_z_x, double mi_z_x_perturbed, double mi_z_y, double mi_z_d, double beta,
                   double lambda);

struct DiagnosticsConfig {
  BinningSpec binning;
  // Drives the perturbed I(Z; X+delta) proxy and the manifold probe.
  PerturbationConfig perturbation;
  std::size_t manifold_draws = 8;
  double beta = 1.0;
  double lambda = 1.0;
  std::uint64_t seed = 0;
};

struct DiagnosticsReport {
  double mi_z_d = 0.0;
  double mi_z_y = 0.0;
  double mi_z_x_proxy = 0.0;
  double mi_z_x_perturbed_proxy = 0.0;
  double input_grad_norm = 0.0;
  double manifold_deviation = 0.0;
  std::optional<ClassConditionalKl> class_kl;  // needs a labeled target
  double beta = 1.0;
  double lambda = 1.0;
  IbScores scores;

  // Flat, ordered key/value view used for the text block and CSV columns.
  std::vector<std::pair<std::string, double>> fields() const;
  std::string to_text() const;
};

// Column names appended to the metrics CSV; class-KL columns per class.
std::vector<std::string> diagnostics_columns(std::size_t num_classes, bool with_class_kl);

DiagnosticsReport diagnose(const ModelBundle& bundle, const DomainDataset& source,
                           const DomainDataset& target, const DiagnosticsConfig& cfg);

}  // namespace ada
