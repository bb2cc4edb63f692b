#pragma once

// YAML representation of TrainingConfig. Every key is optional (defaults
// apply) but unknown keys are rejected. Schema:
//
//   epochs: 100
//   batch_size: 32
//   learning_rate: 0.001
//   optimizer: adam                  # sgd | sgd_momentum | adam
//   seed: 0
//   minimax_mode: alternating        # alternating | reversal
//   consistency_space: representation  # representation | probabilities
//   weights: {lambda_adv: 0.1, lambda_cons: 1.0}
//   source_perturb:                  # same keys for target_perturb
//     epsilon: 0.1
//     norm: linf                     # linf | l2
//     steps: 7
//     step_size: 0.0357              # optional, default 2.5 * epsilon / steps
//     random_init: true
//     data_bounds: [0.0, 1.0]        # optional
//   model:
//     feature_hidden: [32, 32]
//     representation_dim: 8
//     classifier_hidden: []
//     discriminator_hidden: [16]
//     activation: relu               # relu | tanh
//   diagnostics:
//     enabled: false
//     bins_per_dim: 16
//     first_k: 2                     # 0 bins every column
//     manifold_draws: 8
//     beta: 1.0
//     lambda: 1.0
//     seed: 0
//     perturb: {...}                 # perturbation keys as above

#include <string>

#include "ada/trainer.hpp"

namespace ada {

TrainingConfig parse_config(const std::string& yaml_text);
TrainingConfig load_config(const std::string& path);
// Fully resolved YAML; parse_config(dump_config(c)) reproduces c exactly.
std::string dump_config(const TrainingConfig& cfg);

}  // namespace ada
