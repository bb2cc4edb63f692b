#include "ada/objectives.hpp"

#include <cmath>

#include "ada/error.hpp"

namespace ada {

void LossWeights::validate() const {
  if (!std::isfinite(lambda_adv) || lambda_adv < 0.0) {
    throw ConfigError("lambda_adv must be finite and >= 0");
  }
  if (!std::isfinite(lambda_cons) || lambda_cons < 0.0) {
    throw ConfigError("lambda_cons must be finite and >= 0");
  }
}

std::string to_string(ConsistencySpace space) {
  return space == ConsistencySpace::representation ? "representation" : "probabilities";
}

ConsistencySpace parse_consistency_space(const std::string& name) {
  if (name == "representation") return ConsistencySpace::representation;
  if (name == "probabilities") return ConsistencySpace::probabilities;
  throw ConfigError("unknown consistency space '" + name + "'");
}

Var src_cls_loss(const BoundBundle& model, const Var& x_s, const Var& delta_s,
                 std::span<const int> y_s) {
  return softmax_cross_entropy(model.class_logits(x_s + delta_s), y_s);
}

Var domain_bce(const Var& p_source, const Var& p_target) {
  if (p_source.value().empty() || p_target.value().empty()) {
    throw ContractError("domain loss needs non-empty source and target batches");
  }
  const double lo = kProbabilityFloor, hi = 1.0 - kProbabilityFloor;
  Var source_term = mean(log(clamp(p_source, lo, hi)));
  Var target_term = mean(log(affine(clamp(p_target, lo, hi), -1.0, 1.0)));
  return -source_term - target_term;
}

Var adv_dom_loss_from_features(const BoundBundle& model, const Var& z_s, const Var& z_t) {
  return domain_bce(model.domain_prob_of_features(z_s), model.domain_prob_of_features(z_t));
}

Var adv_dom_loss(const BoundBundle& model, const Var& x_s, const Var& x_t) {
  return adv_dom_loss_from_features(model, model.features(x_s), model.features(x_t));
}

Var consistency_view(const BoundBundle& model, const Var& x, ConsistencySpace space) {
  if (space == ConsistencySpace::representation) return model.features(x);
  return softmax_rows(model.class_logits(x));
}

Var mean_squared_distance(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  if (av.rank() != 2 || av.rows() == 0) {
    throw ContractError("consistency needs a non-empty batch, got " + shape_string(av.shape()));
  }
  return affine(sum(square(a - b)), 1.0 / static_cast<double>(av.rows()), 0.0);
}

Var consistency_loss(const BoundBundle& model, const Var& x_t, const Var& delta_t,
                     ConsistencySpace space) {
  if (x_t.shape() != delta_t.shape()) {
    throw DimensionError("consistency: input " + shape_string(x_t.shape()) + " vs perturbation " +
                         shape_string(delta_t.shape()));
  }
  return mean_squared_distance(consistency_view(model, x_t, space),
                               consistency_view(model, x_t + delta_t, space));
}

Var weighted_total(const Var& src_cls, const Var& adv_dom, const Var& cons, const LossWeights& w) {
  return src_cls + affine(adv_dom, w.lambda_adv, 0.0) + affine(cons, w.lambda_cons, 0.0);
}

LossBreakdown total_loss(double src_cls, double adv_dom, double cons, const LossWeights& w) {
  w.validate();
  LossBreakdown out{src_cls, adv_dom, cons, 0.0};
  out.total = (src_cls + (w.lambda_adv * adv_dom + 0.0)) + (w.lambda_cons * cons + 0.0);
  return out;
}

LossBreakdown evaluate_objective(const ModelBundle& bundle, const Tensor& x_s, const Tensor& delta_s,
                                 std::span<const int> y_s, const Tensor& x_t, const Tensor& delta_t,
                                 const LossWeights& weights, ConsistencySpace space) {
  Tape tape;
  const BoundBundle model = bundle.bind(tape, GradMask::none());
  Var xs = tape.constant(x_s);
  Var xt = tape.constant(x_t);
  const double src = src_cls_loss(model, xs, tape.constant(delta_s), y_s).value().item();
  const double adv = adv_dom_loss(model, xs, xt).value().item();
  const double cons = consistency_loss(model, xt, tape.constant(delta_t), space).value().item();
  return total_loss(src, adv, cons, weights);
}

}  // namespace ada
