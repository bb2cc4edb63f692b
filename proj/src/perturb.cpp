#include "ada/perturb.hpp"

#include <algorithm>
#include <cmath>

#include "ada/error.hpp"

namespace ada {

std::string to_string(Norm norm) { return norm == Norm::linf ? "linf" : "l2"; }

Norm parse_norm(const std::string& name) {
  if (name == "linf") return Norm::linf;
  if (name == "l2") return Norm::l2;
  throw ConfigError("unknown norm '" + name + "' (expected linf or l2)");
}

double PerturbationConfig::effective_step_size() const {
  return step_size ? *step_size : 2.5 * epsilon / static_cast<double>(steps);
}

void PerturbationConfig::validate() const {
  if (!std::isfinite(epsilon) || epsilon < 0.0) throw ConfigError("epsilon must be >= 0");
  if (steps < 1) throw ConfigError("steps must be >= 1");
  if (step_size && !(*step_size > 0.0 && std::isfinite(*step_size))) {
    throw ConfigError("step_size must be > 0");
  }
  if (data_bounds && !(data_bounds->lo < data_bounds->hi)) {
    throw ConfigError("data bounds need lo < hi");
  }
}

PerturbationConfig PerturbationConfig::fgsm(double epsilon) {
  PerturbationConfig cfg;
  cfg.epsilon = epsilon;
  cfg.norm = Norm::linf;
  cfg.steps = 1;
  cfg.step_size = epsilon > 0.0 ? std::optional<double>(epsilon) : std::nullopt;
  cfg.random_init = false;
  return cfg;
}

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

double row_norm(std::span<const double> row, Norm norm) {
  double out = 0.0;
  if (norm == Norm::linf) {
    for (double v : row) out = std::max(out, std::abs(v));
    return out;
  }
  for (double v : row) out += v * v;
  return std::sqrt(out);
}

// Restricts x + delta to the declared data domain.
void clip_to_bounds(Tensor& delta, const Tensor& x, const PerturbationConfig& cfg) {
  if (!cfg.data_bounds) return;
  for (std::size_t i = 0; i < delta.size(); ++i) {
    const double moved = std::clamp(x[i] + delta[i], cfg.data_bounds->lo, cfg.data_bounds->hi);
    delta[i] = moved - x[i];
  }
}

void require_input(const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("perturbation input must be a matrix, got " + shape_string(x.shape()));
}

}  // namespace

std::vector<double> row_norms(const Tensor& delta, Norm norm) {
  std::vector<double> out(delta.rows());
  for (std::size_t r = 0; r < delta.rows(); ++r) out[r] = row_norm(delta.row(r), norm);
  return out;
}

Tensor project(const Tensor& delta, Norm norm, double epsilon) {
  Tensor out = delta;
  if (norm == Norm::linf) {
    for (double& v : out.values()) v = std::clamp(v, -epsilon, epsilon);
    return out;
  }
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const double n = row_norm(row, Norm::l2);
    if (n > epsilon) {
      const double scale = epsilon / n;
      for (double& v : row) v *= scale;
      // Rounding in the rescale can leave the norm a few ulps above epsilon.
      while (row_norm(row, Norm::l2) > epsilon) {
        for (double& v : row) v = std::nextafter(v, 0.0);
      }
    }
  }
  return out;
}

Tensor project(const Tensor& delta, const PerturbationConfig& cfg) {
  return project(delta, cfg.norm, cfg.epsilon);
}

Tensor input_gradient(const ModelBundle& bundle, const Tensor& x, std::span<const int> y) {
  require_input(x);
  Tape tape;
  const BoundBundle model = bundle.bind(tape, GradMask::none());
  Var input = tape.variable(x);
  Var loss = softmax_cross_entropy(model.class_logits(input), y, Reduction::sum);
  tape.backward(loss);
  return input.grad();
}

Tensor fgsm(const ModelBundle& bundle, const Tensor& x, std::span<const int> y,
            const PerturbationConfig& cfg) {
  cfg.validate();
  if (cfg.norm != Norm::linf) throw ConfigError("FGSM is defined for the linf norm only");
  require_input(x);
  if (cfg.epsilon == 0.0) return Tensor::zeros_like(x);
  Tensor delta = input_gradient(bundle, x, y);
  for (double& v : delta.values()) v = cfg.epsilon * sign(v);
  clip_to_bounds(delta, x, cfg);
  return delta;
}

Tensor sample_in_ball(const Shape& shape, Norm norm, double epsilon, Rng& rng) {
  Tensor out(shape);
  if (norm == Norm::linf) {
    for (double& v : out.values()) v = rng.uniform(-epsilon, epsilon);
    return out;
  }
  const double dim = static_cast<double>(out.cols());
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    double n = 0.0;
    while (n == 0.0) {
      for (double& v : row) v = rng.normal();
      n = row_norm(row, Norm::l2);
    }
    const double radius = epsilon * std::pow(rng.uniform(), 1.0 / dim);
    for (double& v : row) v *= radius / n;
  }
  return project(out, norm, epsilon);
}

Tensor pgd(const ModelBundle& bundle, const Tensor& x, std::span<const int> y,
           const PerturbationConfig& cfg, Rng& rng) {
  cfg.validate();
  require_input(x);
  if (cfg.epsilon == 0.0) return Tensor::zeros_like(x);
  const double alpha = cfg.effective_step_size();
  Tensor delta = cfg.random_init ? sample_in_ball(x.shape(), cfg.norm, cfg.epsilon, rng)
                                 : Tensor::zeros_like(x);
  clip_to_bounds(delta, x, cfg);
  for (int step = 0; step < cfg.steps; ++step) {
    const Tensor grad = input_gradient(bundle, x + delta, y);
    if (cfg.norm == Norm::linf) {
      for (std::size_t i = 0; i < delta.size(); ++i) delta[i] += alpha * sign(grad[i]);
    } else {
      for (std::size_t r = 0; r < delta.rows(); ++r) {
        const double n = row_norm(grad.row(r), Norm::l2);
        if (n == 0.0) continue;
        auto d = delta.row(r);
        auto g = grad.row(r);
        for (std::size_t c = 0; c < d.size(); ++c) d[c] += alpha * g[c] / n;
      }
    }
    delta = project(delta, cfg);
    clip_to_bounds(delta, x, cfg);
  }
  return delta;
}

namespace {

// Finite-difference radius for the power-iteration probe.
constexpr double kProbeRadius = 1e-6;

void normalize_rows(Tensor& t) {
  for (std::size_t r = 0; r < t.rows(); ++r) {
    auto row = t.row(r);
    const double n = row_norm(row, Norm::l2);
    if (n > 0.0) {
      for (double& v : row) v /= n;
    }
  }
}

}  // namespace

Tensor target_perturb(const ModelBundle& bundle, const Tensor& x_t, const PerturbationConfig& cfg,
                      Rng& rng, ConsistencySpace space) {
  cfg.validate();
  require_input(x_t);
  if (cfg.epsilon == 0.0) return Tensor::zeros_like(x_t);

  Tensor direction(x_t.shape(), 1.0);
  if (cfg.random_init) {
    for (double& v : direction.values()) v = rng.normal();
  }
  normalize_rows(direction);

  Tensor clean;
  {
    Tape tape;
    clean = consistency_view(bundle.bind(tape, GradMask::none()), tape.constant(x_t), space).value();
  }
  for (int step = 0; step < cfg.steps; ++step) {
    Tape tape;
    const BoundBundle model = bundle.bind(tape, GradMask::none());
    Var probe = tape.variable(kProbeRadius * direction);
    Var perturbed = consistency_view(model, tape.constant(x_t) + probe, space);
    Var distance = sum(square(perturbed - tape.constant(clean)));
    tape.backward(distance);
    const Tensor grad = probe.grad();
    for (std::size_t r = 0; r < grad.rows(); ++r) {
      const double n = row_norm(grad.row(r), Norm::l2);
      if (n == 0.0) continue;  // flat row: keep the previous direction
      auto d = direction.row(r);
      auto g = grad.row(r);
      for (std::size_t c = 0; c < d.size(); ++c) d[c] = g[c] / n;
    }
  }

  Tensor delta(x_t.shape());
  for (std::size_t i = 0; i < delta.size(); ++i) {
    delta[i] = cfg.norm == Norm::linf ? cfg.epsilon * sign(direction[i]) : cfg.epsilon * direction[i];
  }
  delta = project(delta, cfg);
  clip_to_bounds(delta, x_t, cfg);
  return delta;
}

}  // namespace ada
