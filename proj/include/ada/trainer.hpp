#pragma once

// Training loop for adversarial data augmentation with domain alignment.
//
// One step on a (source, target) batch pair:
//   1. perturb source inputs (PGD/FGSM on the classification loss) and
//      target inputs (consistency ascent), against the current model;
//   2. the perturbed source batch feeds the classification term;
//   3. the discriminator descends the domain loss, and the feature extractor
//      receives the domain gradient reversed;
//   4. the target batch feeds the consistency term;
//   5. one optimizer step on the weighted total.
// In `alternating` mode step 3 is a separate discriminator update before the
// feature/classifier update, skipped when lambda_adv is 0. In `reversal` mode
// all networks are updated from one backward pass through a gradient-reversal
// node.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ada/data.hpp"
#include "ada/diagnostics.hpp"
#include "ada/models.hpp"
#include "ada/objectives.hpp"
#include "ada/perturb.hpp"
#include "ada/rng.hpp"

namespace ada {

enum class OptimizerKind { sgd, sgd_momentum, adam };
enum class MinimaxMode { alternating, reversal };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& name);
std::string to_string(MinimaxMode mode);
MinimaxMode parse_minimax_mode(const std::string& name);

struct TrainingConfig {
  int epochs = 100;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  LossWeights weights;
  PerturbationConfig source_perturb;
  PerturbationConfig target_perturb;
  std::uint64_t seed = 0;
  MinimaxMode minimax_mode = MinimaxMode::alternating;
  ConsistencySpace consistency_space = ConsistencySpace::representation;
  // input_dim and num_classes are taken from the source data at fit time.
  Architecture architecture;
  // Per-epoch diagnostics appended to the metrics rows.
  bool diagnostics = false;
  DiagnosticsConfig diagnostics_config;

  void validate() const;
};

// SGD, SGD with momentum 0.9, or Adam(0.9, 0.999, 1e-8). State is kept per
// parameter slot so disjoint parameter groups may be stepped separately.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate, std::size_t slots);
  void step(std::size_t slot, Tensor& param, const Tensor& grad);
  double learning_rate() const { return lr_; }

 private:
  struct Slot {
    Tensor first;
    Tensor second;
    std::uint64_t t = 0;
  };
  OptimizerKind kind_;
  double lr_;
  std::vector<Slot> slots_;
};

struct TrainState {
  ModelBundle model;
  Optimizer optimizer;
  Rng perturb_rng;
  std::uint64_t steps = 0;

  static TrainState create(const TrainingConfig& cfg, ModelBundle model);
};

// A batch pair with the perturbations already generated.
struct StepBatch {
  Tensor x_s;
  std::vector<int> y_s;
  Tensor x_t;
  Tensor delta_s;
  Tensor delta_t;
};

// Gradients aligned with ModelBundle::named_parameters(); empty tensors for
// parameters the pass does not update.
struct StepGradients {
  std::vector<Tensor> grads;
  LossBreakdown losses;
};

// dL_adv-dom/dphi on clean inputs; only discriminator slots are filled.
StepGradients discriminator_gradients(const ModelBundle& model, const StepBatch& batch);

// Gradient of the total objective for the feature extractor and classifier,
// with the domain term reversed for the feature extractor. When
// `include_discriminator` is set the discriminator slots receive the
// unreversed lambda_adv * dL_adv-dom/dphi from the same pass.
StepGradients feature_gradients(const ModelBundle& model, const StepBatch& batch, const LossWeights& weights,
                                ConsistencySpace space, bool include_discriminator);

void apply_gradients(TrainState& state, const StepGradients& grads);

// Fills delta_s and delta_t in `batch` against the current model.
void generate_perturbations(TrainState& state, const TrainingConfig& cfg, StepBatch& batch);

// Full five-stage step. Throws NumericalError naming the first non-finite term.
LossBreakdown train_step(TrainState& state, const TrainingConfig& cfg, const Tensor& x_s,
                         std::span<const int> y_s, const Tensor& x_t);

struct MetricsRow {
  int epoch = 0;
  double src_cls = 0.0;
  double adv_dom = 0.0;
  double cons = 0.0;
  double total = 0.0;
  double source_accuracy = 0.0;
  std::optional<double> target_accuracy;  // only with a labeled target
  double discriminator_accuracy = 0.0;
  std::optional<DiagnosticsReport> diagnostics;
};

struct FitResult {
  ModelBundle model;
  std::vector<MetricsRow> metrics;
};

using EpochCallback = std::function<void(const MetricsRow&)>;

// Seeded shuffling per epoch over the source set; target batches are drawn
// cyclically from an independently shuffled order. Target labels, when
// present, are used only for reporting.
FitResult fit(const TrainingConfig& cfg, const DomainDataset& source, const DomainDataset& target,
              const EpochCallback& on_epoch = nullptr);

// Reference trainer for plain supervised learning on clean source data. Shares
// initialisation, batching and optimizer with fit().
FitResult fit_supervised(const TrainingConfig& cfg, const DomainDataset& source);

// Fraction of rows whose argmax prediction matches the label.
double evaluate(const ModelBundle& model, const DomainDataset& data);
// Fraction of rows the discriminator assigns to the right domain (p >= 0.5 is source).
double discriminator_accuracy(const ModelBundle& model, const DomainDataset& source,
                              const DomainDataset& target);

// Model architecture resolved against the data (input width, class count).
Architecture resolve_architecture(const TrainingConfig& cfg, const DomainDataset& source);

// CSV with header epoch,src_cls,adv_dom,cons,total,source_accuracy,
// target_accuracy,discriminator_accuracy[,diagnostics...]; 9 significant digits.
void write_metrics_csv(std::span<const MetricsRow> rows, std::ostream& out);
std::string format_metric(double v);

}  // namespace ada
