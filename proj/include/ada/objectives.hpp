#pragma once

// Loss terms of the adversarial-augmentation objective:
//   total = src_cls + lambda_adv * adv_dom + lambda_cons * cons
// src_cls  cross-entropy on perturbed source inputs,
// adv_dom  binary cross-entropy of the domain discriminator on clean
//          source (label 1) and target (label 0) representations,
// cons     mean squared distance between clean and perturbed target outputs.

#include <span>

#include "ada/autodiff.hpp"
#include "ada/models.hpp"

namespace ada {

struct LossWeights {
  double lambda_adv = 0.1;
  double lambda_cons = 1.0;

  void validate() const;
};

struct LossBreakdown {
  double src_cls = 0.0;
  double adv_dom = 0.0;
  double cons = 0.0;
  double total = 0.0;
};

// Where the consistency distance is measured.
enum class ConsistencySpace { representation, probabilities };

std::string to_string(ConsistencySpace space);
ConsistencySpace parse_consistency_space(const std::string& name);

Var src_cls_loss(const BoundBundle& model, const Var& x_s, const Var& delta_s,
                 std::span<const int> y_s);

// -mean log p_s - mean log(1 - p_t); probabilities are clamped to
// [kProbabilityFloor, 1 - kProbabilityFloor] first.
Var domain_bce(const Var& p_source, const Var& p_target);
Var adv_dom_loss_from_features(const BoundBundle& model, const Var& z_s, const Var& z_t);
Var adv_dom_loss(const BoundBundle& model, const Var& x_s, const Var& x_t);

// Output compared by the consistency term: representation or class posterior.
Var consistency_view(const BoundBundle& model, const Var& x, ConsistencySpace space);
// Mean over rows of the squared L2 distance.
Var mean_squared_distance(const Var& a, const Var& b);
Var consistency_loss(const BoundBundle& model, const Var& x_t, const Var& delta_t,
                     ConsistencySpace space = ConsistencySpace::representation);

Var weighted_total(const Var& src_cls, const Var& adv_dom, const Var& cons, const LossWeights& w);
LossBreakdown total_loss(double src_cls, double adv_dom, double cons, const LossWeights& w);

// Forward-only evaluation of every term on fixed perturbations.
LossBreakdown evaluate_objective(const ModelBundle& bundle, const Tensor& x_s, const Tensor& delta_s,
                                 std::span<const int> y_s, const Tensor& x_t, const Tensor& delta_t,
                                 const LossWeights& weights,
                                 ConsistencySpace space = ConsistencySpace::representation);

}  // namespace ada
