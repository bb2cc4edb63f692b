#include "ada/models.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ada/error.hpp"
#include "ada/rng.hpp"

namespace ada {

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

std::string to_string(OutputActivation a) {
  switch (a) {
    case OutputActivation::none: return "none";
    case OutputActivation::sigmoid: return "sigmoid";
    case OutputActivation::softmax: return "softmax";
  }
  return "none";
}

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + name + "' (expected relu or tanh)");
}

OutputActivation parse_output_activation(const std::string& name) {
  if (name == "none") return OutputActivation::none;
  if (name == "sigmoid") return OutputActivation::sigmoid;
  if (name == "softmax") return OutputActivation::softmax;
  throw ConfigError("unknown output activation '" + name + "'");
}

void MlpSpec::validate() const {
  if (layer_widths.size() < 2) {
    throw ConfigError("MLP needs at least input and output widths");
  }
  for (std::size_t w : layer_widths) {
    if (w == 0) throw ConfigError("MLP layer widths must be positive");
  }
}

Mlp::Mlp(MlpSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < spec_.layer_widths.size(); ++l) {
    const std::size_t fan_in = spec_.layer_widths[l];
    const std::size_t fan_out = spec_.layer_widths[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor w(Shape{fan_in, fan_out});
    for (double& v : w.values()) v = rng.uniform(-limit, limit);
    weights_.push_back(std::move(w));
    biases_.emplace_back(Shape{fan_out});
  }
}

std::vector<Tensor*> Mlp::parameters() {
  std::vector<Tensor*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

std::vector<const Tensor*> Mlp::parameters() const {
  std::vector<const Tensor*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

BoundMlp Mlp::bind(Tape& tape, bool requires_grad) const {
  BoundMlp bound{this, {}};
  for (const Tensor* p : parameters()) bound.params.push_back(tape.leaf(*p, requires_grad));
  return bound;
}

Var BoundMlp::forward(const Var& x) const {
  const MlpSpec& spec = mlp->spec();
  const Tensor& in = x.value();
  if (in.rank() != 2 || in.cols() != spec.layer_widths.front()) {
    throw DimensionError("MLP expects input of width " + std::to_string(spec.layer_widths.front()) +
                         ", got " + shape_string(in.shape()));
  }
  Var h = x;
  const std::size_t layers = params.size() / 2;
  for (std::size_t l = 0; l < layers; ++l) {
    h = add_bias(matmul(h, params[2 * l]), params[2 * l + 1]);
    if (l + 1 < layers) {
      h = spec.activation == Activation::relu ? relu(h) : tanh(h);
    }
  }
  switch (spec.output_activation) {
    case OutputActivation::none: return h;
    case OutputActivation::sigmoid: return sigmoid(h);
    case OutputActivation::softmax: return softmax_rows(h);
  }
  return h;
}

namespace {

MlpSpec make_spec(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out,
                  Activation act, OutputActivation out_act) {
  MlpSpec spec;
  spec.layer_widths.push_back(in);
  spec.layer_widths.insert(spec.layer_widths.end(), hidden.begin(), hidden.end());
  spec.layer_widths.push_back(out);
  spec.activation = act;
  spec.output_activation = out_act;
  return spec;
}

}  // namespace

MlpSpec Architecture::feature_spec() const {
  return make_spec(input_dim, feature_hidden, representation_dim, activation, OutputActivation::none);
}

MlpSpec Architecture::classifier_spec() const {
  return make_spec(representation_dim, classifier_hidden, num_classes, activation, OutputActivation::none);
}

MlpSpec Architecture::discriminator_spec() const {
  return make_spec(representation_dim, discriminator_hidden, 1, activation, OutputActivation::sigmoid);
}

void Architecture::validate() const {
  if (num_classes < 2) throw ConfigError("need at least two classes");
  feature_spec().validate();
  classifier_spec().validate();
  discriminator_spec().validate();
}

ModelBundle::ModelBundle(Mlp f, Mlp c, Mlp d)
    : feature_extractor(std::move(f)), classifier(std::move(c)), discriminator(std::move(d)) {
  validate();
}

ModelBundle ModelBundle::create(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  return ModelBundle(Mlp(arch.feature_spec(), Rng::stream(seed, 1).next()),
                     Mlp(arch.classifier_spec(), Rng::stream(seed, 2).next()),
                     Mlp(arch.discriminator_spec(), Rng::stream(seed, 3).next()));
}

void ModelBundle::validate() const {
  const std::size_t r = feature_extractor.output_dim();
  if (classifier.input_dim() != r || discriminator.input_dim() != r) {
    throw DimensionError("representation width " + std::to_string(r) +
                         " does not match classifier/discriminator inputs (" +
                         std::to_string(classifier.input_dim()) + ", " +
                         std::to_string(discriminator.input_dim()) + ")");
  }
  if (discriminator.output_dim() != 1) throw DimensionError("discriminator must have one output");
}

std::vector<NamedParameter> ModelBundle::named_parameters() {
  std::vector<NamedParameter> out;
  auto add = [&out](const std::string& prefix, ParamGroup group, Mlp& mlp) {
    for (std::size_t l = 0; l < mlp.num_layers(); ++l) {
      out.push_back({prefix + ".layer" + std::to_string(l) + ".weight", group, &mlp.weight(l)});
      out.push_back({prefix + ".layer" + std::to_string(l) + ".bias", group, &mlp.bias(l)});
    }
  };
  add("feature_extractor", ParamGroup::feature_extractor, feature_extractor);
  add("classifier", ParamGroup::classifier, classifier);
  add("discriminator", ParamGroup::discriminator, discriminator);
  return out;
}

std::vector<Tensor> ModelBundle::snapshot() const {
  std::vector<Tensor> out;
  for (const Mlp* mlp : {&feature_extractor, &classifier, &discriminator}) {
    for (const Tensor* p : mlp->parameters()) out.push_back(*p);
  }
  return out;
}

BoundBundle ModelBundle::bind(Tape& tape, GradMask mask) const {
  return BoundBundle{feature_extractor.bind(tape, mask.feature_extractor),
                     classifier.bind(tape, mask.classifier),
                     discriminator.bind(tape, mask.discriminator)};
}

Var BoundBundle::domain_prob_of_features(const Var& z) const {
  return clamp(discriminator.forward(z), kProbabilityFloor, 1.0 - kProbabilityFloor);
}

Tensor features(const ModelBundle& bundle, const Tensor& x) {
  Tape tape;
  return bundle.bind(tape, GradMask::none()).features(tape.constant(x)).value();
}

Tensor class_logits(const ModelBundle& bundle, const Tensor& x) {
  Tape tape;
  return bundle.bind(tape, GradMask::none()).class_logits(tape.constant(x)).value();
}

Tensor domain_prob(const ModelBundle& bundle, const Tensor& x) {
  Tape tape;
  return bundle.bind(tape, GradMask::none()).domain_prob(tape.constant(x)).value();
}

std::vector<int> predict(const ModelBundle& bundle, const Tensor& x) {
  const Tensor logits = class_logits(bundle, x);
  std::vector<int> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c) {
      if (row[c] > row[best]) best = c;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

// ---- checkpoint ----

namespace {

constexpr const char* kCheckpointMagic = "ada-checkpoint 1";

void write_hex(std::ostream& out, double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::hex);
  out.write(buf, res.ptr - buf);
}

double parse_hex(const std::string& token, std::size_t line) {
  double v = 0.0;
  const char* first = token.data();
  const char* last = first + token.size();
  auto res = std::from_chars(first, last, v, std::chars_format::hex);
  if (res.ec != std::errc() || res.ptr != last) {
    throw ParseError("bad hexadecimal float '" + token + "'", line);
  }
  return v;
}

void write_mlp_header(std::ostream& out, const std::string& name, const Mlp& mlp) {
  const MlpSpec& spec = mlp.spec();
  out << "mlp " << name << ' ' << to_string(spec.activation) << ' '
      << to_string(spec.output_activation);
  for (std::size_t w : spec.layer_widths) out << ' ' << w;
  out << '\n';
}

void write_params(std::ostream& out, const std::string& name, const Mlp& mlp) {
  for (std::size_t l = 0; l < mlp.num_layers(); ++l) {
    for (int which = 0; which < 2; ++which) {
      const Tensor& t = which == 0 ? mlp.weight(l) : mlp.bias(l);
      out << "param " << name << ".layer" << l << (which == 0 ? ".weight" : ".bias") << ' '
          << t.rank();
      for (std::size_t d : t.shape()) out << ' ' << d;
      for (double v : t.values()) {
        out << ' ';
        write_hex(out, v);
      }
      out << '\n';
    }
  }
}

}  // namespace

void write_checkpoint(const ModelBundle& bundle, std::ostream& out) {
  out << kCheckpointMagic << '\n';
  write_mlp_header(out, "feature_extractor", bundle.feature_extractor);
  write_mlp_header(out, "classifier", bundle.classifier);
  write_mlp_header(out, "discriminator", bundle.discriminator);
  write_params(out, "feature_extractor", bundle.feature_extractor);
  write_params(out, "classifier", bundle.classifier);
  write_params(out, "discriminator", bundle.discriminator);
}

ModelBundle read_checkpoint(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line != kCheckpointMagic) {
    throw ParseError("not a checkpoint file", line_no);
  }
  const std::string names[3] = {"feature_extractor", "classifier", "discriminator"};
  Mlp mlps[3];
  for (int i = 0; i < 3; ++i) {
    ++line_no;
    if (!std::getline(in, line)) throw ParseError("truncated checkpoint", line_no);
    std::istringstream fields(line);
    std::string tag, name, act, out_act;
    fields >> tag >> name >> act >> out_act;
    if (tag != "mlp" || name != names[i]) throw ParseError("expected 'mlp " + names[i] + "'", line_no);
    MlpSpec spec;
    try {
      spec.activation = parse_activation(act);
      spec.output_activation = parse_output_activation(out_act);
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), line_no);
    }
    std::size_t w;
    while (fields >> w) spec.layer_widths.push_back(w);
    try {
      spec.validate();
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), line_no);
    }
    mlps[i] = Mlp(spec, 0);
  }
  for (int i = 0; i < 3; ++i) {
    for (std::size_t l = 0; l < mlps[i].num_layers(); ++l) {
      for (int which = 0; which < 2; ++which) {
        ++line_no;
        if (!std::getline(in, line)) throw ParseError("truncated checkpoint", line_no);
        std::istringstream fields(line);
        const std::string expected =
            names[i] + ".layer" + std::to_string(l) + (which == 0 ? ".weight" : ".bias");
        std::string tag, name;
        std::size_t rank = 0;
        fields >> tag >> name >> rank;
        if (tag != "param" || name != expected) throw ParseError("expected param " + expected, line_no);
        Tensor& target = which == 0 ? mlps[i].weight(l) : mlps[i].bias(l);
        Shape shape(rank);
        for (auto& d : shape) fields >> d;
        if (shape != target.shape()) {
          throw ParseError(expected + " has shape " + shape_string(shape) + ", expected " +
                               shape_string(target.shape()),
                           line_no);
        }
        std::string token;
        for (double& v : target.values()) {
          if (!(fields >> token)) throw ParseError("too few values for " + expected, line_no);
          v = parse_hex(token, line_no);
        }
        if (fields >> token) throw ParseError("too many values for " + expected, line_no);
      }
    }
  }
  return ModelBundle(std::move(mlps[0]), std::move(mlps[1]), std::move(mlps[2]));
}

void save_checkpoint(const ModelBundle& bundle, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  write_checkpoint(bundle, out);
}

ModelBundle load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return read_checkpoint(in);
}

}  // namespace ada
