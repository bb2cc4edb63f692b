#include "ada/config.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "ada/error.hpp"

namespace ada {

namespace {

void reject_unknown(const YAML::Node& node, const std::string& where, std::initializer_list<const char*> known) {
  if (!node.IsMap()) throw ConfigError(where + " must be a mapping");
  const std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    if (!allowed.count(key)) {
      throw ConfigError("unknown config key '" + (where.empty() ? key : where + "." + key) + "'");
    }
  }
}

template <typename T>
void read(const YAML::Node& node, const char* key, T& out, const std::string& where) {
  const YAML::Node value = node[key];
  if (!value) return;
  try {
    out = value.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("bad value for '" + (where.empty() ? "" : where + ".") + key + "'");
  }
}

std::string join(const std::string& where, const char* key) { return where.empty() ? key : where + "." + key; }

PerturbationConfig read_perturb(const YAML::Node& node, const std::string& where, PerturbationConfig cfg) {
  if (!node) return cfg;
  reject_unknown(node, where, {"epsilon", "norm", "steps", "step_size", "random_init", "data_bounds"});
  read(node, "epsilon", cfg.epsilon, where);
  std::string norm = to_string(cfg.norm);
  read(node, "norm", norm, where);
  cfg.norm = parse_norm(norm);
  read(node, "steps", cfg.steps, where);
  if (node["step_size"]) {
    double step = 0.0;
    read(node, "step_size", step, where);
    cfg.step_size = step;
  }
  read(node, "random_init", cfg.random_init, where);
  if (node["data_bounds"]) {
    std::vector<double> bounds;
    read(node, "data_bounds", bounds, where);
    if (bounds.size() != 2) throw ConfigError(join(where, "data_bounds") + " needs [lo, hi]");
    cfg.data_bounds = DataBounds{bounds[0], bounds[1]};
  }
  return cfg;
}

}  // namespace

TrainingConfig parse_config(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("invalid YAML: ") + e.what());
  }
  TrainingConfig cfg;
  if (!root || root.IsNull()) return cfg;
  reject_unknown(root, "",
                 {"epochs", "batch_size", "learning_rate", "optimizer", "seed", "minimax_mode",
                  "consistency_space", "weights", "source_perturb", "target_perturb", "model", "diagnostics"});
  read(root, "epochs", cfg.epochs, "");
  read(root, "batch_size", cfg.batch_size, "");
  read(root, "learning_rate", cfg.learning_rate, "");
  read(root, "seed", cfg.seed, "");
  std::string text = to_string(cfg.optimizer);
  read(root, "optimizer", text, "");
  cfg.optimizer = parse_optimizer(text);
  text = to_string(cfg.minimax_mode);
  read(root, "minimax_mode", text, "");
  cfg.minimax_mode = parse_minimax_mode(text);
  text = to_string(cfg.consistency_space);
  read(root, "consistency_space", text, "");
  cfg.consistency_space = parse_consistency_space(text);

  if (const YAML::Node w = root["weights"]) {
    reject_unknown(w, "weights", {"lambda_adv", "lambda_cons"});
    read(w, "lambda_adv", cfg.weights.lambda_adv, "weights");
    read(w, "lambda_cons", cfg.weights.lambda_cons, "weights");
  }
  cfg.source_perturb = read_perturb(root["source_perturb"], "source_perturb", cfg.source_perturb);
  cfg.target_perturb = read_perturb(root["target_perturb"], "target_perturb", cfg.target_perturb);

  if (const YAML::Node m = root["model"]) {
    reject_unknown(m, "model",
                   {"feature_hidden", "representation_dim", "classifier_hidden", "discriminator_hidden", "activation"});
    read(m, "feature_hidden", cfg.architecture.feature_hidden, "model");
    read(m, "representation_dim", cfg.architecture.representation_dim, "model");
    read(m, "classifier_hidden", cfg.architecture.classifier_hidden, "model");
    read(m, "discriminator_hidden", cfg.architecture.discriminator_hidden, "model");
    std::string act = to_string(cfg.architecture.activation);
    read(m, "activation", act, "model");
    cfg.architecture.activation = parse_activation(act);
  }

  if (const YAML::Node d = root["diagnostics"]) {
    reject_unknown(d, "diagnostics",
                   {"enabled", "bins_per_dim", "first_k", "manifold_draws", "beta", "lambda", "seed", "perturb"});
    DiagnosticsConfig& dc = cfg.diagnostics_config;
    read(d, "enabled", cfg.diagnostics, "diagnostics");
    read(d, "bins_per_dim", dc.binning.bins_per_dim, "diagnostics");
    if (d["first_k"]) {
      std::size_t k = 0;
      read(d, "first_k", k, "diagnostics");
      dc.binning.first_k = k == 0 ? std::nullopt : std::optional<std::size_t>(k);
    }
    read(d, "manifold_draws", dc.manifold_draws, "diagnostics");
    read(d, "beta", dc.beta, "diagnostics");
    read(d, "lambda", dc.lambda, "diagnostics");
    read(d, "seed", dc.seed, "diagnostics");
    dc.perturbation = read_perturb(d["perturb"], "diagnostics.perturb", dc.perturbation);
  }
  cfg.validate();
  return cfg;
}

TrainingConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return parse_config(text.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

namespace {

// Shortest representation that parses back to the same double.
std::string exact(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

void emit_sizes(YAML::Emitter& out, const char* key, const std::vector<std::size_t>& values) {
  out << YAML::Key << key << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (std::size_t v : values) out << v;
  out << YAML::EndSeq;
}

void emit_perturb(YAML::Emitter& out, const char* key, const PerturbationConfig& p) {
  out << YAML::Key << key << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "epsilon" << YAML::Value << exact(p.epsilon);
  out << YAML::Key << "norm" << YAML::Value << to_string(p.norm);
  out << YAML::Key << "steps" << YAML::Value << p.steps;
  if (p.step_size) out << YAML::Key << "step_size" << YAML::Value << exact(*p.step_size);
  out << YAML::Key << "random_init" << YAML::Value << p.random_init;
  if (p.data_bounds) {
    out << YAML::Key << "data_bounds" << YAML::Value << YAML::Flow << YAML::BeginSeq << exact(p.data_bounds->lo)
        << exact(p.data_bounds->hi) << YAML::EndSeq;
  }
  out << YAML::EndMap;
}

}  // namespace

std::string dump_config(const TrainingConfig& cfg) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "epochs" << YAML::Value << cfg.epochs;
  out << YAML::Key << "batch_size" << YAML::Value << cfg.batch_size;
  out << YAML::Key << "learning_rate" << YAML::Value << exact(cfg.learning_rate);
  out << YAML::Key << "optimizer" << YAML::Value << to_string(cfg.optimizer);
  out << YAML::Key << "seed" << YAML::Value << cfg.seed;
  out << YAML::Key << "minimax_mode" << YAML::Value << to_string(cfg.minimax_mode);
  out << YAML::Key << "consistency_space" << YAML::Value << to_string(cfg.consistency_space);
  out << YAML::Key << "weights" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "lambda_adv" << YAML::Value << exact(cfg.weights.lambda_adv);
  out << YAML::Key << "lambda_cons" << YAML::Value << exact(cfg.weights.lambda_cons);
  out << YAML::EndMap;
  emit_perturb(out, "source_perturb", cfg.source_perturb);
  emit_perturb(out, "target_perturb", cfg.target_perturb);
  out << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
  emit_sizes(out, "feature_hidden", cfg.architecture.feature_hidden);
  out << YAML::Key << "representation_dim" << YAML::Value << cfg.architecture.representation_dim;
  emit_sizes(out, "classifier_hidden", cfg.architecture.classifier_hidden);
  emit_sizes(out, "discriminator_hidden", cfg.architecture.discriminator_hidden);
  out << YAML::Key << "activation" << YAML::Value << to_string(cfg.architecture.activation);
  out << YAML::EndMap;
  const DiagnosticsConfig& dc = cfg.diagnostics_config;
  out << YAML::Key << "diagnostics" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "enabled" << YAML::Value << cfg.diagnostics;
  out << YAML::Key << "bins_per_dim" << YAML::Value << dc.binning.bins_per_dim;
  out << YAML::Key << "first_k" << YAML::Value << (dc.binning.first_k ? *dc.binning.first_k : 0);
  out << YAML::Key << "manifold_draws" << YAML::Value << dc.manifold_draws;
  out << YAML::Key << "beta" << YAML::Value << exact(dc.beta);
  out << YAML::Key << "lambda" << YAML::Value << exact(dc.lambda);
  out << YAML::Key << "seed" << YAML::Value << dc.seed;
  emit_perturb(out, "perturb", dc.perturbation);
  out << YAML::EndMap;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace ada
