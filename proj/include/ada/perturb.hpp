#pragma once

// Norm-bounded input perturbations. Every generator returns delta with
// ||delta_i||_p <= epsilon for each row i and never touches model parameters.

#include <optional>
#include <span>
#include <string>

#include "ada/autodiff.hpp"
#include "ada/models.hpp"
#include "ada/objectives.hpp"
#include "ada/rng.hpp"

namespace ada {

enum class Norm { linf, l2 };

std::string to_string(Norm norm);
Norm parse_norm(const std::string& name);

struct DataBounds {
  double lo = 0.0;
  double hi = 1.0;
};

struct PerturbationConfig {
  double epsilon = 0.1;
  Norm norm = Norm::linf;
  int steps = 7;
  // Unset means 2.5 * epsilon / steps.
  std::optional<double> step_size;
  bool random_init = true;
  // When set, x + delta is additionally clipped into [lo, hi].
  std::optional<DataBounds> data_bounds;

  double effective_step_size() const;
  void validate() const;

  // Single sign step of size epsilon; the configuration under which pgd()
  // reproduces fgsm().
  static PerturbationConfig fgsm(double epsilon);
};

// Gradient of the summed cross-entropy with respect to the input rows.
Tensor input_gradient(const ModelBundle& bundle, const Tensor& x, std::span<const int> y);

// delta = epsilon * sign(grad_x loss), sign(0) = 0. Requires the linf norm.
Tensor fgsm(const ModelBundle& bundle, const Tensor& x, std::span<const int> y,
            const PerturbationConfig& cfg);

// Projected gradient ascent on the classification loss.
Tensor pgd(const ModelBundle& bundle, const Tensor& x, std::span<const int> y,
           const PerturbationConfig& cfg, Rng& rng);

// Clamp (linf) or rescale rows (l2) into the epsilon ball.
Tensor project(const Tensor& delta, const PerturbationConfig& cfg);
Tensor project(const Tensor& delta, Norm norm, double epsilon);

// Per-row norm of delta under `norm`.
std::vector<double> row_norms(const Tensor& delta, Norm norm);

// Label-free perturbation that maximises the consistency distance between
// f(x) and f(x + delta), with f(x) held constant. The distance has zero
// gradient at delta = 0, so the ascent direction is found by power iteration
// from a probe direction (random when cfg.random_init), then scaled onto the
// ball boundary.
Tensor target_perturb(const ModelBundle& bundle, const Tensor& x_t, const PerturbationConfig& cfg,
                      Rng& rng, ConsistencySpace space = ConsistencySpace::representation);

// Uniform sample from the epsilon ball, one row per input row.
Tensor sample_in_ball(const Shape& shape, Norm norm, double epsilon, Rng& rng);

}  // namespace ada
