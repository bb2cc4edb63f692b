#include "ada/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "ada/error.hpp"

namespace ada {

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::sgd_momentum: return "sgd_momentum";
    case OptimizerKind::adam: return "adam";
  }
  return "adam";
}

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "sgd_momentum") return OptimizerKind::sgd_momentum;
  if (name == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + name + "' (expected sgd, sgd_momentum or adam)");
}

std::string to_string(MinimaxMode mode) {
  return mode == MinimaxMode::alternating ? "alternating" : "reversal";
}

MinimaxMode parse_minimax_mode(const std::string& name) {
  if (name == "alternating") return MinimaxMode::alternating;
  if (name == "reversal") return MinimaxMode::reversal;
  throw ConfigError("unknown minimax mode '" + name + "' (expected alternating or reversal)");
}

void TrainingConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be > 0");
  }
  weights.validate();
  source_perturb.validate();
  target_perturb.validate();
  diagnostics_config.binning.validate();
  diagnostics_config.perturbation.validate();
}

// ---- optimizer ----

Optimizer::Optimizer(OptimizerKind kind, double learning_rate, std::size_t slots)
    : kind_(kind), lr_(learning_rate), slots_(slots) {}

void Optimizer::step(std::size_t slot, Tensor& param, const Tensor& grad) {
  if (param.shape() != grad.shape()) {
    throw DimensionError("optimizer: gradient " + shape_string(grad.shape()) + " for parameter " +
                         shape_string(param.shape()));
  }
  Slot& s = slots_.at(slot);
  auto p = param.values();
  auto g = grad.values();
  switch (kind_) {
    case OptimizerKind::sgd:
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr_ * g[i];
      break;
    case OptimizerKind::sgd_momentum: {
      if (s.first.empty()) s.first = Tensor::zeros_like(param);
      auto v = s.first.values();
      for (std::size_t i = 0; i < p.size(); ++i) {
        v[i] = 0.9 * v[i] + g[i];
        p[i] -= lr_ * v[i];
      }
      break;
    }
    case OptimizerKind::adam: {
      constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
      if (s.first.empty()) {
        s.first = Tensor::zeros_like(param);
        s.second = Tensor::zeros_like(param);
      }
      ++s.t;
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(s.t));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(s.t));
      auto m = s.first.values();
      auto v = s.second.values();
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        p[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
      }
      break;
    }
  }
}

TrainState TrainState::create(const TrainingConfig& cfg, ModelBundle model) {
  const std::size_t slots = model.named_parameters().size();
  return TrainState{std::move(model), Optimizer(cfg.optimizer, cfg.learning_rate, slots),
                    Rng::stream(cfg.seed, 12), 0};
}

// ---- one step ----

namespace {

std::vector<Tensor> collect(const BoundBundle& bound, GradMask mask) {
  std::vector<Tensor> out;
  auto add = [&out](const BoundMlp& mlp, bool wanted) {
    for (const Var& p : mlp.params) out.push_back(wanted ? p.grad() : Tensor());
  };
  add(bound.feature_extractor, mask.feature_extractor);
  add(bound.classifier, mask.classifier);
  add(bound.discriminator, mask.discriminator);
  return out;
}

void require_finite(const LossBreakdown& l) {
  if (!std::isfinite(l.src_cls)) throw NumericalError("src_cls", l.src_cls);
  if (!std::isfinite(l.adv_dom)) throw NumericalError("adv_dom", l.adv_dom);
  if (!std::isfinite(l.cons)) throw NumericalError("cons", l.cons);
  if (!std::isfinite(l.total)) throw NumericalError("total", l.total);
}

}  // namespace

StepGradients discriminator_gradients(const ModelBundle& model, const StepBatch& batch) {
  Tape tape;
  const GradMask mask{false, false, true};
  const BoundBundle bound = model.bind(tape, mask);
  Var loss = adv_dom_loss(bound, tape.constant(batch.x_s), tape.constant(batch.x_t));
  tape.backward(loss);
  StepGradients out{collect(bound, mask), {}};
  out.losses.adv_dom = loss.value().item();
  return out;
}

StepGradients feature_gradients(const ModelBundle& model, const StepBatch& batch, const LossWeights& weights,
                                ConsistencySpace space, bool include_discriminator) {
  Tape tape;
  const GradMask mask{true, true, include_discriminator};
  const BoundBundle bound = model.bind(tape, mask);
  Var x_s = tape.constant(batch.x_s);
  Var x_t = tape.constant(batch.x_t);
  Var src = src_cls_loss(bound, x_s, tape.constant(batch.delta_s), batch.y_s);
  Var adv = adv_dom_loss_from_features(bound, gradient_reversal(bound.features(x_s)),
                                       gradient_reversal(bound.features(x_t)));
  Var cons = consistency_loss(bound, x_t, tape.constant(batch.delta_t), space);
  Var total = weighted_total(src, adv, cons, weights);
  tape.backward(total);
  StepGradients out{collect(bound, mask), {}};
  out.losses = LossBreakdown{src.value().item(), adv.value().item(), cons.value().item(), total.value().item()};
  return out;
}

void apply_gradients(TrainState& state, const StepGradients& grads) {
  auto params = state.model.named_parameters();
  if (grads.grads.size() != params.size()) {
    throw ContractError("gradient list does not match the model's parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads.grads[i].empty()) state.optimizer.step(i, *params[i].tensor, grads.grads[i]);
  }
}

void generate_perturbations(TrainState& state, const TrainingConfig& cfg, StepBatch& batch) {
  batch.delta_s = pgd(state.model, batch.x_s, batch.y_s, cfg.source_perturb, state.perturb_rng);
  batch.delta_t =
      target_perturb(state.model, batch.x_t, cfg.target_perturb, state.perturb_rng, cfg.consistency_space);
}

LossBreakdown train_step(TrainState& state, const TrainingConfig& cfg, const Tensor& x_s,
                         std::span<const int> y_s, const Tensor& x_t) {
  if (x_s.rank() != 2 || x_s.rows() == 0 || x_t.rank() != 2 || x_t.rows() == 0) {
    throw ContractError("train_step needs non-empty source and target batches");
  }
  if (y_s.size() != x_s.rows()) throw ContractError("source batch must be fully labeled");
  StepBatch batch{x_s, std::vector<int>(y_s.begin(), y_s.end()), x_t, {}, {}};
  generate_perturbations(state, cfg, batch);

  // With lambda_adv = 0 the discriminator has no influence on the objective.
  if (cfg.minimax_mode == MinimaxMode::alternating && cfg.weights.lambda_adv != 0.0) {
    const StepGradients disc = discriminator_gradients(state.model, batch);
    if (!std::isfinite(disc.losses.adv_dom)) throw NumericalError("adv_dom", disc.losses.adv_dom);
    apply_gradients(state, disc);
  }
  const StepGradients step = feature_gradients(state.model, batch, cfg.weights, cfg.consistency_space,
                                               cfg.minimax_mode == MinimaxMode::reversal);
  require_finite(step.losses);
  apply_gradients(state, step);
  ++state.steps;
  return step.losses;
}

// ---- evaluation ----

double evaluate(const ModelBundle& model, const DomainDataset& data) {
  if (!data.labeled()) throw ContractError("evaluate needs a labeled dataset");
  if (data.size() == 0) throw ContractError("evaluate on an empty dataset");
  const auto predicted = predict(model, data.features);
  const auto labels = data.label_span();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(predicted.size());
}

double discriminator_accuracy(const ModelBundle& model, const DomainDataset& source,
                              const DomainDataset& target) {
  const Tensor ps = domain_prob(model, source.features);
  const Tensor pt = domain_prob(model, target.features);
  std::size_t correct = 0;
  for (double p : ps.values()) correct += p >= 0.5;
  for (double p : pt.values()) correct += p < 0.5;
  return static_cast<double>(correct) / static_cast<double>(ps.size() + pt.size());
}

Architecture resolve_architecture(const TrainingConfig& cfg, const DomainDataset& source) {
  Architecture arch = cfg.architecture;
  arch.input_dim = source.dim();
  arch.num_classes = std::max<std::size_t>(2, source.num_classes());
  return arch;
}

// ---- fit ----

namespace {

void check_datasets(const DomainDataset& source, const DomainDataset* target) {
  source.validate();
  if (!source.labeled()) throw ContractError("source dataset must be labeled");
  if (source.size() == 0) throw ContractError("source dataset is empty");
  if (target) {
    target->validate();
    if (target->size() == 0) throw ContractError("target dataset is empty");
    if (target->dim() != source.dim()) {
      throw DimensionError("source has " + std::to_string(source.dim()) + " features, target has " +
                           std::to_string(target->dim()));
    }
  }
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> out(n);
  std::iota(out.begin(), out.end(), std::size_t{0});
  return out;
}

struct EpochSums {
  LossBreakdown sum;
  std::size_t batches = 0;

  void add(const LossBreakdown& l) {
    sum.src_cls += l.src_cls;
    sum.adv_dom += l.adv_dom;
    sum.cons += l.cons;
    sum.total += l.total;
    ++batches;
  }
  void fill(MetricsRow& row) const {
    const double n = static_cast<double>(batches);
    row.src_cls = sum.src_cls / n;
    row.adv_dom = sum.adv_dom / n;
    row.cons = sum.cons / n;
    row.total = sum.total / n;
  }
};

}  // namespace

FitResult fit(const TrainingConfig& cfg, const DomainDataset& source, const DomainDataset& target,
              const EpochCallback& on_epoch) {
  cfg.validate();
  check_datasets(source, &target);
  TrainState state = TrainState::create(cfg, ModelBundle::create(resolve_architecture(cfg, source), cfg.seed));
  Rng data_rng = Rng::stream(cfg.seed, 10);
  Rng target_rng = Rng::stream(cfg.seed, 11);

  const std::size_t ns = source.size(), nt = target.size();
  std::vector<std::size_t> target_order = iota(nt);
  target_rng.shuffle(std::span(target_order));
  std::size_t target_cursor = 0;
  const auto labels = source.label_span();

  FitResult result;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = iota(ns);
    data_rng.shuffle(std::span(order));
    EpochSums sums;
    for (std::size_t start = 0; start < ns; start += cfg.batch_size) {
      const std::size_t end = std::min(ns, start + cfg.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      std::vector<int> y(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) y[i] = labels[rows[i]];
      std::vector<std::size_t> target_rows;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (target_cursor == nt) {
          target_rng.shuffle(std::span(target_order));
          target_cursor = 0;
        }
        target_rows.push_back(target_order[target_cursor++]);
      }
      sums.add(train_step(state, cfg, gather_rows(source.features, rows), y,
                          gather_rows(target.features, target_rows)));
    }
    MetricsRow row;
    row.epoch = epoch;
    sums.fill(row);
    row.source_accuracy = evaluate(state.model, source);
    if (target.labeled()) row.target_accuracy = evaluate(state.model, target);
    row.discriminator_accuracy = discriminator_accuracy(state.model, source, target);
    if (cfg.diagnostics) row.diagnostics = diagnose(state.model, source, target, cfg.diagnostics_config);
    if (on_epoch) on_epoch(row);
    result.metrics.push_back(std::move(row));
  }
  result.model = std::move(state.model);
  return result;
}

FitResult fit_supervised(const TrainingConfig& cfg, const DomainDataset& source) {
  cfg.validate();
  check_datasets(source, nullptr);
  TrainState state = TrainState::create(cfg, ModelBundle::create(resolve_architecture(cfg, source), cfg.seed));
  Rng data_rng = Rng::stream(cfg.seed, 10);
  const std::size_t ns = source.size();
  const auto labels = source.label_span();
  const GradMask mask{true, true, false};

  FitResult result;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = iota(ns);
    data_rng.shuffle(std::span(order));
    EpochSums sums;
    for (std::size_t start = 0; start < ns; start += cfg.batch_size) {
      const std::size_t end = std::min(ns, start + cfg.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      std::vector<int> y(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) y[i] = labels[rows[i]];
      Tape tape;
      const BoundBundle bound = state.model.bind(tape, mask);
      Var loss = softmax_cross_entropy(bound.class_logits(tape.constant(gather_rows(source.features, rows))), y);
      tape.backward(loss);
      const double value = loss.value().item();
      if (!std::isfinite(value)) throw NumericalError("src_cls", value);
      apply_gradients(state, StepGradients{collect(bound, mask), {}});
      sums.add(LossBreakdown{value, 0.0, 0.0, value});
    }
    MetricsRow row;
    row.epoch = epoch;
    sums.fill(row);
    row.source_accuracy = evaluate(state.model, source);
    result.metrics.push_back(std::move(row));
  }
  result.model = std::move(state.model);
  return result;
}

// ---- metrics CSV ----

std::string format_metric(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void write_metrics_csv(std::span<const MetricsRow> rows, std::ostream& out) {
  out << "epoch,src_cls,adv_dom,cons,total,source_accuracy,target_accuracy,discriminator_accuracy";
  const MetricsRow* with_diag = nullptr;
  for (const MetricsRow& r : rows) {
    if (r.diagnostics) {
      with_diag = &r;
      break;
    }
  }
  if (with_diag) {
    for (const auto& [name, value] : with_diag->diagnostics->fields()) out << ',' << name;
  }
  out << '\n';
  for (const MetricsRow& r : rows) {
    out << r.epoch << ',' << format_metric(r.src_cls) << ',' << format_metric(r.adv_dom) << ','
        << format_metric(r.cons) << ',' << format_metric(r.total) << ',' << format_metric(r.source_accuracy)
        << ',';
    if (r.target_accuracy) out << format_metric(*r.target_accuracy);
    out << ',' << format_metric(r.discriminator_accuracy);
    if (with_diag) {
      if (r.diagnostics) {
        for (const auto& [name, value] : r.diagnostics->fields()) out << ',' << format_metric(value);
      } else {
        for (std::size_t i = 0; i < with_diag->diagnostics->fields().size(); ++i) out << ',';
      }
    }
    out << '\n';
  }
}

}  // namespace ada
