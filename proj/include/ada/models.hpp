#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ada/autodiff.hpp"

namespace ada {

enum class Activation { relu, tanh };
enum class OutputActivation { none, sigmoid, softmax };

std::string to_string(Activation a);
std::string to_string(OutputActivation a);
Activation parse_activation(const std::string& name);
OutputActivation parse_output_activation(const std::string& name);

struct MlpSpec {
  // Input width first, output width last.
  std::vector<std::size_t> layer_widths;
  Activation activation = Activation::relu;
  OutputActivation output_activation = OutputActivation::none;

  void validate() const;
};

class Mlp;

// An Mlp whose parameters have been placed on a tape.
struct BoundMlp {
  const Mlp* mlp = nullptr;
  std::vector<Var> params;  // w0, b0, w1, b1, ...

  Var forward(const Var& x) const;
};

// Fully connected network. Layer l computes x * W_l + b_l with W_l of shape
// (fan_in x fan_out); `activation` follows every layer except the last.
class Mlp {
 public:
  Mlp() = default;
  // Glorot-uniform weights, zero biases.
  Mlp(MlpSpec spec, std::uint64_t seed);

  const MlpSpec& spec() const { return spec_; }
  std::size_t input_dim() const { return spec_.layer_widths.front(); }
  std::size_t output_dim() const { return spec_.layer_widths.back(); }
  std::size_t num_layers() const { return weights_.size(); }

  Tensor& weight(std::size_t layer) { return weights_[layer]; }
  const Tensor& weight(std::size_t layer) const { return weights_[layer]; }
  Tensor& bias(std::size_t layer) { return biases_[layer]; }
  const Tensor& bias(std::size_t layer) const { return biases_[layer]; }

  // w0, b0, w1, b1, ... in that order.
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;

  BoundMlp bind(Tape& tape, bool requires_grad) const;

 private:
  MlpSpec spec_;
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

// Sizes of the three networks. The feature extractor maps input_dim to
// representation_dim; classifier and discriminator read that representation.
struct Architecture {
  std::size_t input_dim = 2;
  std::size_t num_classes = 2;
  std::vector<std::size_t> feature_hidden{32, 32};
  std::size_t representation_dim = 8;
  std::vector<std::size_t> classifier_hidden{};
  std::vector<std::size_t> discriminator_hidden{16};
  Activation activation = Activation::relu;

  MlpSpec feature_spec() const;
  MlpSpec classifier_spec() const;
  MlpSpec discriminator_spec() const;
  void validate() const;
};

// Lower/upper clamp on discriminator probabilities so log d and log(1 - d)
// stay finite.
inline constexpr double kProbabilityFloor = 1e-7;

enum class ParamGroup { feature_extractor, classifier, discriminator };

struct NamedParameter {
  std::string name;
  ParamGroup group;
  Tensor* tensor;
};

// Which networks receive gradients when bound to a tape.
struct GradMask {
  bool feature_extractor = false;
  bool classifier = false;
  bool discriminator = false;

  static GradMask none() { return {}; }
  static GradMask all() { return {true, true, true}; }
};

class ModelBundle;

struct BoundBundle {
  BoundMlp feature_extractor;
  BoundMlp classifier;
  BoundMlp discriminator;

  Var features(const Var& x) const { return feature_extractor.forward(x); }
  Var class_logits(const Var& x) const { return classifier.forward(features(x)); }
  // Sigmoid output clamped to [kProbabilityFloor, 1 - kProbabilityFloor].
  Var domain_prob_of_features(const Var& z) const;
  Var domain_prob(const Var& x) const { return domain_prob_of_features(features(x)); }
};

class ModelBundle {
 public:
  ModelBundle() = default;
  ModelBundle(Mlp feature_extractor, Mlp classifier, Mlp discriminator);
  static ModelBundle create(const Architecture& arch, std::uint64_t seed);

  Mlp feature_extractor;
  Mlp classifier;
  Mlp discriminator;

  std::size_t input_dim() const { return feature_extractor.input_dim(); }
  std::size_t representation_dim() const { return feature_extractor.output_dim(); }
  std::size_t num_classes() const { return classifier.output_dim(); }

  // Stable ordering used by optimizers and checkpoints.
  std::vector<NamedParameter> named_parameters();
  std::vector<Tensor> snapshot() const;

  BoundBundle bind(Tape& tape, GradMask mask) const;

  // Throws DimensionError when network widths do not chain.
  void validate() const;
};

// Untracked forward passes.
Tensor features(const ModelBundle& bundle, const Tensor& x);
Tensor class_logits(const ModelBundle& bundle, const Tensor& x);
Tensor domain_prob(const ModelBundle& bundle, const Tensor& x);
// Argmax per row, ties resolved to the lowest index.
std::vector<int> predict(const ModelBundle& bundle, const Tensor& x);

// Text checkpoint with one line per network and per parameter array. Values
// are written as hexadecimal floats so a load reproduces every bit.
void write_checkpoint(const ModelBundle& bundle, std::ostream& out);
ModelBundle read_checkpoint(std::istream& in);
void save_checkpoint(const ModelBundle& bundle, const std::string& path);
ModelBundle load_checkpoint(const std::string& path);

}  // namespace ada
