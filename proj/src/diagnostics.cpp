#include "ada/diagnostics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "ada/error.hpp"
#include "ada/rng.hpp"

namespace ada {

void BinningSpec::validate() const {
  if (bins_per_dim < 2) throw ConfigError("bins_per_dim must be >= 2");
  if (first_k && *first_k < 1) throw ConfigError("first_k must be >= 1");
}

Discretized discretize(const Tensor& samples, const BinningSpec& spec) {
  spec.validate();
  if (samples.rank() != 2) throw DimensionError("discretize expects a matrix, got " + shape_string(samples.shape()));
  const std::size_t n = samples.rows();
  const std::size_t dims = spec.first_k ? std::min(*spec.first_k, samples.cols()) : samples.cols();
  Discretized out;
  out.codes.assign(n, 0);
  out.cells = 1;
  const std::uint64_t bins = spec.bins_per_dim;
  for (std::size_t k = 0; k < dims; ++k) {
    if (out.cells > std::numeric_limits<std::uint64_t>::max() / bins) {
      throw ConfigError("too many histogram cells; reduce bins_per_dim or first_k");
    }
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t r = 0; r < n; ++r) {
      lo = std::min(lo, samples(r, k));
      hi = std::max(hi, samples(r, k));
    }
    const double width = hi - lo;
    for (std::size_t r = 0; r < n; ++r) {
      std::uint64_t bin = 0;
      if (width > 0.0) {
        const double pos = (samples(r, k) - lo) / width * static_cast<double>(bins);
        bin = std::min<std::uint64_t>(static_cast<std::uint64_t>(pos), bins - 1);
      }
      out.codes[r] = out.codes[r] * bins + bin;
    }
    out.cells *= bins;
  }
  return out;
}

Discretized discretize_labels(std::span<const int> labels) {
  Discretized out;
  out.codes.reserve(labels.size());
  int max_label = -1;
  for (int y : labels) {
    if (y < 0) throw IndexError("negative label " + std::to_string(y));
    out.codes.push_back(static_cast<std::uint64_t>(y));
    max_label = std::max(max_label, y);
  }
  out.cells = static_cast<std::uint64_t>(max_label + 1);
  return out;
}

double mutual_information(const Discretized& a, const Discretized& b) {
  if (a.codes.size() != b.codes.size()) {
    throw ContractError("mutual information needs equal sample counts (" + std::to_string(a.codes.size()) +
                        " vs " + std::to_string(b.codes.size()) + ")");
  }
  const std::size_t n = a.codes.size();
  if (n < 10) throw ContractError("mutual information needs at least 10 samples");
  std::map<std::uint64_t, std::size_t> count_a, count_b;
  std::map<std::pair<std::uint64_t, std::uint64_t>, std::size_t> joint;
  for (std::size_t i = 0; i < n; ++i) {
    ++count_a[a.codes[i]];
    ++count_b[b.codes[i]];
    ++joint[{a.codes[i], b.codes[i]}];
  }
  const double total = static_cast<double>(n);
  double mi = 0.0;
  for (const auto& [cell, count] : joint) {
    const double nab = static_cast<double>(count);
    const double na = static_cast<double>(count_a[cell.first]);
    const double nb = static_cast<double>(count_b[cell.second]);
    mi += nab / total * std::log(nab * total / (na * nb));
  }
  return std::max(mi, 0.0);
}

double mi_binned(const Tensor& a, const Tensor& b, const BinningSpec& spec) {
  return mutual_information(discretize(a, spec), discretize(b, spec));
}

double mi_binned(const Tensor& a, std::span<const int> b, const BinningSpec& spec) {
  return mutual_information(discretize(a, spec), discretize_labels(b));
}

double input_grad_norm(const ModelBundle& bundle, const DomainDataset& data) {
  if (!data.labeled()) throw ContractError("input_grad_norm needs a labeled dataset");
  if (data.size() == 0) throw ContractError("input_grad_norm on an empty dataset");
  const Tensor grad = input_gradient(bundle, data.features, data.label_span());
  const auto norms = row_norms(grad, Norm::l2);
  double total = 0.0;
  for (double v : norms) total += v;
  return total / static_cast<double>(norms.size());
}

double manifold_deviation(const ModelBundle& bundle, const DomainDataset& data,
                          const PerturbationConfig& cfg, std::size_t n_draws, std::uint64_t seed) {
  if (n_draws < 1) throw ContractError("manifold_deviation needs n_draws >= 1");
  cfg.validate();
  const std::size_t n = data.size();
  if (n == 0) return 0.0;
  const Tensor clean = features(bundle, data.features);
  std::vector<double> worst(n, 0.0);
  Rng rng(seed);
  for (std::size_t draw = 0; draw < n_draws; ++draw) {
    const Tensor delta = sample_in_ball(data.features.shape(), cfg.norm, cfg.epsilon, rng);
    const Tensor moved = features(bundle, data.features + delta);
    const auto shift = row_norms(moved - clean, Norm::l2);
    for (std::size_t i = 0; i < n; ++i) worst[i] = std::max(worst[i], shift[i]);
  }
  double total = 0.0;
  for (double v : worst) total += v;
  return total / static_cast<double>(n);
}

DiagonalGaussian fit_diagonal_gaussian(const Tensor& samples, std::span<const std::size_t> rows) {
  if (rows.empty()) throw ContractError("cannot fit a Gaussian to zero samples");
  const std::size_t d = samples.cols();
  DiagonalGaussian g{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
  const double n = static_cast<double>(rows.size());
  for (std::size_t r : rows)
    for (std::size_t k = 0; k < d; ++k) g.mean[k] += samples(r, k);
  for (double& m : g.mean) m /= n;
  for (std::size_t r : rows) {
    for (std::size_t k = 0; k < d; ++k) {
      const double diff = samples(r, k) - g.mean[k];
      g.variance[k] += diff * diff;
    }
  }
  for (double& v : g.variance) v = std::max(v / n, kVarianceFloor);
  return g;
}

double kl_divergence(double mean_p, double var_p, double mean_q, double var_q) {
  const double diff = mean_p - mean_q;
  return 0.5 * (std::log(var_q / var_p) + (var_p + diff * diff) / var_q - 1.0);
}

double kl_divergence(const DiagonalGaussian& p, const DiagonalGaussian& q) {
  if (p.mean.size() != q.mean.size()) throw DimensionError("KL between Gaussians of different dimension");
  double total = 0.0;
  for (std::size_t k = 0; k < p.mean.size(); ++k) {
    total += kl_divergence(p.mean[k], p.variance[k], q.mean[k], q.variance[k]);
  }
  return total;
}

ClassConditionalKl class_conditional_kl(const Tensor& z_s, std::span<const int> y_s, const Tensor& z_t,
                                        std::span<const int> y_t, std::size_t num_classes) {
  if (z_s.cols() != z_t.cols()) throw DimensionError("representations of different width");
  if (y_s.size() != z_s.rows() || y_t.size() != z_t.rows()) throw DimensionError("labels do not match rows");
  const std::size_t min_count = z_s.cols() + 2;
  auto rows_of = [&](std::span<const int> labels, int c, const char* domain) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == c) rows.push_back(i);
    }
    if (rows.size() < min_count) {
      throw DataContractError("class " + std::to_string(c) + " has " + std::to_string(rows.size()) +
                              " samples in the " + domain + " domain; need at least " +
                              std::to_string(min_count));
    }
    return rows;
  };
  ClassConditionalKl out;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const auto rs = rows_of(y_s, static_cast<int>(c), "source");
    const auto rt = rows_of(y_t, static_cast<int>(c), "target");
    const DiagonalGaussian ps = fit_diagonal_gaussian(z_s, rs);
    const DiagonalGaussian pt = fit_diagonal_gaussian(z_t, rt);
    out.source_to_target.push_back(kl_divergence(ps, pt));
    out.target_to_source.push_back(kl_divergence(pt, ps));
  }
  double total = 0.0;
  for (double v : out.source_to_target) total += v;
  out.mean = num_classes ? total / static_cast<double>(num_classes) : 0.0;
  return out;
}

ClassConditionalKl class_conditional_kl(const ModelBundle& bundle, const DomainDataset& source,
                                        const DomainDataset& target) {
  if (!source.labeled() || !target.labeled()) {
    throw ContractError("class-conditional KL needs labels in both domains");
  }
  const std::size_t classes = std::max(source.num_classes(), target.num_classes());
  return class_conditional_kl(features(bundle, source.features), source.label_span(),
                              features(bundle, target.features), target.label_span(), classes);
}

IbScores ib_scores(double mi_z_x, double mi_z_x_perturbed, double mi_z_y, double mi_z_d, double beta,
                   double lambda) {
  return IbScores{mi_z_x - beta * mi_z_y, mi_z_x_perturbed + lambda * mi_z_d - beta * mi_z_y};
}

std::vector<std::pair<std::string, double>> DiagnosticsReport::fields() const {
  std::vector<std::pair<std::string, double>> out{
      {"mi_z_d", mi_z_d},
      {"mi_z_y", mi_z_y},
      {"mi_z_x_proxy", mi_z_x_proxy},
      {"mi_z_x_perturbed_proxy", mi_z_x_perturbed_proxy},
      {"input_grad_norm", input_grad_norm},
      {"manifold_deviation", manifold_deviation},
  };
  if (class_kl) {
    for (std::size_t c = 0; c < class_kl->source_to_target.size(); ++c) {
      out.emplace_back("class_kl_st_" + std::to_string(c), class_kl->source_to_target[c]);
    }
    for (std::size_t c = 0; c < class_kl->target_to_source.size(); ++c) {
      out.emplace_back("class_kl_ts_" + std::to_string(c), class_kl->target_to_source[c]);
    }
    out.emplace_back("class_kl_mean", class_kl->mean);
  }
  out.emplace_back("ib_score", scores.ib);
  out.emplace_back("ada_ib_score", scores.ada_ib);
  return out;
}

std::vector<std::string> diagnostics_columns(std::size_t num_classes, bool with_class_kl) {
  DiagnosticsReport shape;
  if (with_class_kl) {
    shape.class_kl = ClassConditionalKl{std::vector<double>(num_classes), std::vector<double>(num_classes), 0.0};
  }
  std::vector<std::string> out;
  for (const auto& [name, value] : shape.fields()) out.push_back(name);
  return out;
}

std::string DiagnosticsReport::to_text() const {
  std::ostringstream out;
  out << "# diagnostics report; information quantities in nats (natural log)\n";
  out << "# mi_z_x_proxy and mi_z_x_perturbed_proxy bin Z against binned inputs\n";
  auto put = [&out](const std::string& key, double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    out << key << " = " << std::string(buf, res.ptr) << '\n';
  };
  put("beta", beta);
  put("lambda", lambda);
  for (const auto& [key, value] : fields()) put(key, value);
  return out.str();
}

DiagnosticsReport diagnose(const ModelBundle& bundle, const DomainDataset& source,
                           const DomainDataset& target, const DiagnosticsConfig& cfg) {
  if (!source.labeled()) throw ContractError("diagnostics need a labeled source dataset");
  if (source.dim() != target.dim()) throw DimensionError("source and target feature widths differ");
  DiagnosticsReport report;
  report.beta = cfg.beta;
  report.lambda = cfg.lambda;

  const Tensor z_s = features(bundle, source.features);
  const Tensor z_t = features(bundle, target.features);

  Tensor z_all(Shape{z_s.rows() + z_t.rows(), z_s.cols()});
  std::copy(z_s.values().begin(), z_s.values().end(), z_all.values().begin());
  std::copy(z_t.values().begin(), z_t.values().end(), z_all.values().begin() + z_s.size());
  std::vector<int> domain(z_s.rows(), 0);
  domain.resize(z_all.rows(), 1);

  report.mi_z_d = mi_binned(z_all, domain, cfg.binning);
  report.mi_z_y = mi_binned(z_s, source.label_span(), cfg.binning);
  report.mi_z_x_proxy = mi_binned(z_s, source.features, cfg.binning);

  Rng rng = Rng::stream(cfg.seed, 20);
  const Tensor delta = pgd(bundle, source.features, source.label_span(), cfg.perturbation, rng);
  const Tensor x_adv = source.features + delta;
  report.mi_z_x_perturbed_proxy = mi_binned(features(bundle, x_adv), x_adv, cfg.binning);

  report.input_grad_norm = input_grad_norm(bundle, source);
  report.manifold_deviation =
      manifold_deviation(bundle, source, cfg.perturbation, cfg.manifold_draws, Rng::stream(cfg.seed, 21).next());
  if (target.labeled()) report.class_kl = class_conditional_kl(bundle, source, target);
  report.scores = ib_scores(report.mi_z_x_proxy, report.mi_z_x_perturbed_proxy, report.mi_z_y, report.mi_z_d,
                            cfg.beta, cfg.lambda);
  return report;
}

}  // namespace ada
