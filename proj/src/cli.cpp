#include "ada/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "ada/config.hpp"
#include "ada/error.hpp"

namespace ada {

namespace fs = std::filesystem;

namespace {

struct DataPresetSpec {
  const char* name;
  const char* description;
};

constexpr DataPresetSpec kDataPresets[] = {
    {"two-moons-rot15", "two moons (n=400, noise 0.08); target rotated 15 deg, noise 0.05"},
    {"two-moons-rot30", "two moons (n=400, noise 0.08); target rotated 30 deg, noise 0.05"},
    {"two-moons-rot45", "two moons (n=400, noise 0.08); target rotated 45 deg, noise 0.05"},
    {"blobs-translate", "three Gaussian blobs (100 per class, sigma 0.3); target translated by (0.6, 0.6)"},
};

// Distinct generator seeds for the roles inside one preset draw.
std::uint64_t role_seed(std::uint64_t seed, std::uint64_t role) { return Rng::stream(seed, role).next(); }

constexpr std::uint64_t kRoleSource = 30;
constexpr std::uint64_t kRoleShift = 31;
constexpr std::uint64_t kRoleHoldout = 32;

DomainDataset preset_source(const std::string& name, std::uint64_t data_seed) {
  if (name.rfind("two-moons-rot", 0) == 0) return two_moons(400, 0.08, data_seed);
  return gaussian_blobs({{0.0, 0.0}, {2.0, 0.0}, {1.0, 1.7}}, 100, 0.3, data_seed);
}

ShiftSpec preset_shift(const std::string& name) {
  if (name == "two-moons-rot15") return {15.0, {}, 0.05};
  if (name == "two-moons-rot30") return {30.0, {}, 0.05};
  if (name == "two-moons-rot45") return {45.0, {}, 0.05};
  return {0.0, {0.6, 0.6}, 0.05};
}

void require_data_preset(const std::string& name) {
  for (const auto& p : kDataPresets)
    if (name == p.name) return;
  std::string list;
  for (const auto& p : kDataPresets) list += std::string("\n  ") + p.name + "  " + p.description;
  throw ConfigError("unknown data preset '" + name + "'; available presets:" + list);
}

std::string shortest(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_preset_dir() {
#ifdef ADA_PRESET_DIR
  return ADA_PRESET_DIR;
#else
  return "configs";
#endif
}

}  // namespace

std::vector<std::string> data_preset_names() {
  std::vector<std::string> out;
  for (const auto& p : kDataPresets) out.emplace_back(p.name);
  return out;
}

DataPair generate_data_preset(const std::string& name, std::uint64_t seed) {
  require_data_preset(name);
  DataPair pair;
  pair.source = preset_source(name, role_seed(seed, kRoleSource));
  pair.source.name = name + "/source";
  pair.target = apply_shift(pair.source, preset_shift(name), role_seed(seed, kRoleShift));
  pair.target.name = name + "/target";
  return pair;
}

DomainDataset holdout_source(const std::string& name, std::uint64_t seed) {
  require_data_preset(name);
  DomainDataset out = preset_source(name, role_seed(seed, kRoleHoldout));
  out.name = name + "/holdout";
  return out;
}

std::vector<std::string> config_preset_names() {
  std::vector<std::string> out;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(read_preset_dir(), ec)) {
    if (entry.path().extension() == ".yaml") out.push_back(entry.path().stem().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

fs::path config_preset_path(const std::string& name) {
  const auto names = config_preset_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    std::string list;
    for (const auto& n : names) list += "\n  " + n;
    throw ConfigError("unknown config preset '" + name + "'; available presets:" + list);
  }
  return fs::path(read_preset_dir()) / (name + ".yaml");
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  auto parse_one = [&](std::string_view s) {
    std::uint64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      throw ConfigError("bad seed '" + std::string(s) + "' in '" + text + "'");
    }
    return v;
  };
  std::vector<std::uint64_t> out;
  const auto dots = text.find("..");
  if (dots != std::string::npos) {
    const std::uint64_t lo = parse_one(std::string_view(text).substr(0, dots));
    const std::uint64_t hi = parse_one(std::string_view(text).substr(dots + 2));
    if (hi < lo) throw ConfigError("empty seed range '" + text + "'");
    if (hi - lo >= 100000) throw ConfigError("seed range too large '" + text + "'");
    for (std::uint64_t s = lo; s <= hi; ++s) out.push_back(s);
    return out;
  }
  std::string_view rest(text);
  while (true) {
    const auto comma = rest.find(',');
    out.push_back(parse_one(rest.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  return out;
}

void ExperimentManifest::validate() const {
  if (seeds.empty()) throw ConfigError("no seeds given");
  std::set<std::uint64_t> unique(seeds.begin(), seeds.end());
  if (unique.size() != seeds.size()) throw ConfigError("seeds must be unique");
  const bool files = source_path.has_value() || target_path.has_value();
  if (files && data_preset) throw ConfigError("give either --data-preset or --source/--target, not both");
  if (!files && !data_preset) throw ConfigError("no data: give --data-preset or --source and --target");
  if (files && !(source_path && target_path)) throw ConfigError("--source and --target must be given together");
  if (data_preset) require_data_preset(*data_preset);
  if (!out_dir.empty()) ensure_dir(out_dir);
}

DataPair ExperimentManifest::load_data(std::uint64_t seed) const {
  if (data_preset) return generate_data_preset(*data_preset, seed);
  for (const auto* p : {&source_path, &target_path}) {
    if (!fs::exists(**p)) throw IoError("no such file: " + **p);
  }
  DataPair pair{load_csv(*source_path), load_csv(*target_path)};
  if (pair.source.domain != Domain::source) throw DataContractError(*source_path + " is not a source-domain file");
  if (pair.target.domain != Domain::target) throw DataContractError(*target_path + " is not a target-domain file");
  if (!pair.source.labeled()) throw DataContractError(*source_path + " has no labels");
  return pair;
}

void Overrides::apply(TrainingConfig& cfg) const {
  if (seed) cfg.seed = *seed;
  if (epsilon) {
    for (PerturbationConfig* p : {&cfg.source_perturb, &cfg.target_perturb}) {
      if (p->step_size) {
        if (p->epsilon > 0.0) {
          p->step_size = *p->step_size * (*epsilon / p->epsilon);
        } else {
          p->step_size.reset();
        }
      }
      p->epsilon = *epsilon;
    }
  }
  if (lambda_adv) cfg.weights.lambda_adv = *lambda_adv;
  if (lambda_cons) cfg.weights.lambda_cons = *lambda_cons;
  if (epochs) cfg.epochs = *epochs;
  cfg.validate();
}

namespace {

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NumericalError*>(&e)) return kExitNumerical;
  if (dynamic_cast<const DataContractError*>(&e)) return kExitDataContract;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const IoError*>(&e) ||
      dynamic_cast<const ParseError*>(&e) || dynamic_cast<const DimensionError*>(&e) ||
      dynamic_cast<const IndexError*>(&e)) {
    return kExitUsage;
  }
  return kExitInternal;
}

std::string data_origin(const ExperimentManifest& m) {
  if (m.data_preset) return "# data: --data-preset " + *m.data_preset + "\n";
  return "# data: --source " + m.source_path.value_or("") + " --target " + m.target_path.value_or("") + "\n";
}

void write_run_outputs(const fs::path& dir, const ExperimentManifest& manifest, const TrainingConfig& cfg,
                       const FitResult& result) {
  ensure_dir(dir);
  std::ostringstream metrics;
  write_metrics_csv(result.metrics, metrics);
  write_text(dir / "metrics.csv", metrics.str());
  std::ostringstream ckpt;
  write_checkpoint(result.model, ckpt);
  write_text(dir / "model.ckpt", ckpt.str());
  write_text(dir / "config.resolved.yaml", data_origin(manifest) + dump_config(cfg));
}

}  // namespace

SeedOutcome run_seed(const ExperimentManifest& manifest, TrainingConfig cfg, std::uint64_t seed,
                     bool with_diagnostics, const std::optional<fs::path>& out_dir) {
  SeedOutcome outcome;
  outcome.seed = seed;
  try {
    cfg.seed = seed;
    cfg.validate();
    const DataPair data = manifest.load_data(seed);
    FitResult result = fit(cfg, data.source, data.target);
    if (!result.metrics.empty()) outcome.final_metrics = result.metrics.back();
    if (out_dir) write_run_outputs(*out_dir, manifest, cfg, result);
    if (with_diagnostics) {
      const DomainDataset probe =
          manifest.data_preset ? holdout_source(*manifest.data_preset, seed) : data.source;
      outcome.diagnostics = diagnose(result.model, probe, data.target, cfg.diagnostics_config);
      if (out_dir) write_text(*out_dir / "diagnostics.txt", outcome.diagnostics->to_text());
    }
  } catch (const std::exception& e) {
    outcome.exit_code = exit_code_for(e);
    outcome.message = e.what();
    outcome.final_metrics.reset();
    outcome.diagnostics.reset();
  }
  return outcome;
}

void write_sweep_csv(const std::vector<SeedOutcome>& outcomes, std::ostream& out) {
  std::vector<std::string> columns{"src_cls", "adv_dom", "cons", "total", "source_accuracy", "target_accuracy",
                                   "discriminator_accuracy"};
  const SeedOutcome* with_diag = nullptr;
  for (const auto& o : outcomes)
    if (o.diagnostics) {
      with_diag = &o;
      break;
    }
  if (with_diag)
    for (const auto& [name, value] : with_diag->diagnostics->fields()) columns.push_back(name);

  auto values_of = [&](const SeedOutcome& o) {
    std::map<std::string, double> v;
    if (o.final_metrics) {
      const MetricsRow& m = *o.final_metrics;
      v["src_cls"] = m.src_cls;
      v["adv_dom"] = m.adv_dom;
      v["cons"] = m.cons;
      v["total"] = m.total;
      v["source_accuracy"] = m.source_accuracy;
      if (m.target_accuracy) v["target_accuracy"] = *m.target_accuracy;
      v["discriminator_accuracy"] = m.discriminator_accuracy;
    }
    if (o.diagnostics)
      for (const auto& [name, value] : o.diagnostics->fields()) v[name] = value;
    return v;
  };

  out << "seed,status";
  for (const auto& c : columns) out << ',' << c;
  out << '\n';

  std::vector<std::map<std::string, double>> ok_rows;
  std::size_t failed = 0;
  for (const auto& o : outcomes) {
    const auto v = values_of(o);
    out << o.seed << ',' << (o.exit_code == kExitOk ? "ok" : "failed(exit " + std::to_string(o.exit_code) + ")");
    for (const auto& c : columns) {
      out << ',';
      if (auto it = v.find(c); it != v.end()) out << shortest(it->second);
    }
    out << '\n';
    if (o.exit_code == kExitOk) {
      ok_rows.push_back(v);
    } else {
      ++failed;
    }
  }

  const std::string status = failed ? "failed=" + std::to_string(failed) : "ok";
  std::map<std::string, double> mean, stddev;
  std::set<std::string> incomplete;
  for (const auto& c : columns) {
    double sum = 0.0;
    for (const auto& row : ok_rows) {
      auto it = row.find(c);
      if (it == row.end()) {
        incomplete.insert(c);
        break;
      }
      sum += it->second;
    }
    if (ok_rows.empty() || incomplete.count(c)) continue;
    const double n = static_cast<double>(ok_rows.size());
    mean[c] = sum / n;
    double ss = 0.0;
    for (const auto& row : ok_rows) ss += (row.at(c) - mean[c]) * (row.at(c) - mean[c]);
    stddev[c] = ok_rows.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  }
  for (const auto& [label, values] : {std::pair{"mean", &mean}, std::pair{"stddev", &stddev}}) {
    out << label << ',' << status;
    for (const auto& c : columns) {
      out << ',';
      if (auto it = values->find(c); it != values->end()) out << shortest(it->second);
    }
    out << '\n';
  }
}

// ---- commands ----

namespace {

struct ConfigSource {
  std::string config_path;
  std::string preset;

  TrainingConfig load() const {
    if (!config_path.empty() && !preset.empty()) throw ConfigError("give either --config or --preset, not both");
    if (config_path.empty() && preset.empty()) throw ConfigError("no config: give --config or --preset");
    const std::string path = config_path.empty() ? config_preset_path(preset).string() : config_path;
    if (!fs::exists(path)) throw IoError("no such file: " + path);
    return load_config(path);
  }
  std::string path() const { return config_path.empty() ? config_preset_path(preset).string() : config_path; }
};

void add_config_options(CLI::App& cmd, ConfigSource& src) {
  cmd.add_option("--config", src.config_path, "Training config (YAML)");
  cmd.add_option("--preset", src.preset, "Shipped config preset name");
}

void add_override_options(CLI::App& cmd, Overrides& o) {
  cmd.add_option("--epsilon", o.epsilon, "Override both perturbation radii");
  cmd.add_option("--lambda-adv", o.lambda_adv, "Override the domain-adversarial weight");
  cmd.add_option("--lambda-cons", o.lambda_cons, "Override the consistency weight");
  cmd.add_option("--epochs", o.epochs, "Override the number of epochs");
}

void add_data_options(CLI::App& cmd, ExperimentManifest& m) {
  cmd.add_option("--source", m.source_path, "Source-domain CSV");
  cmd.add_option("--target", m.target_path, "Target-domain CSV");
  cmd.add_option("--data-preset", m.data_preset, "Generate data from a named preset instead of CSVs");
}

int cmd_gen(const std::string& preset, std::uint64_t seed, const fs::path& out) {
  const DataPair pair = generate_data_preset(preset, seed);
  ensure_dir(out);
  for (const auto* d : {&pair.source, &pair.target}) {
    const fs::path path = out / (to_string(d->domain) + ".csv");
    std::ostringstream text;
    write_csv(*d, text);
    write_text(path, text.str());
    std::cout << path.string() << ": " << d->size() << " rows\n";
  }
  return kExitOk;
}

int cmd_train(const ConfigSource& src, ExperimentManifest manifest, const Overrides& overrides) {
  TrainingConfig cfg = src.load();
  overrides.apply(cfg);
  manifest.config_path = src.path();
  manifest.seeds = {cfg.seed};
  manifest.validate();
  const DataPair data = manifest.load_data(cfg.seed);
  const FitResult result = fit(cfg, data.source, data.target);
  write_run_outputs(manifest.out_dir, manifest, cfg, result);
  const MetricsRow& last = result.metrics.back();
  std::cout << "epochs " << last.epoch << "  total " << format_metric(last.total) << "  source_accuracy "
            << format_metric(last.source_accuracy);
  if (last.target_accuracy) std::cout << "  target_accuracy " << format_metric(*last.target_accuracy);
  std::cout << "\nwrote " << (manifest.out_dir / "metrics.csv").string() << ", "
            << (manifest.out_dir / "model.ckpt").string() << ", "
            << (manifest.out_dir / "config.resolved.yaml").string() << '\n';
  return kExitOk;
}

int cmd_diagnose(const std::string& checkpoint, const ConfigSource& src, const ExperimentManifest& manifest,
                 std::optional<std::uint64_t> seed, const std::optional<fs::path>& out) {
  if (!fs::exists(checkpoint)) throw IoError("no such file: " + checkpoint);
  DiagnosticsConfig dc;
  if (!src.config_path.empty() || !src.preset.empty()) dc = src.load().diagnostics_config;
  if (seed) dc.seed = *seed;
  const ModelBundle model = load_checkpoint(checkpoint);
  const DataPair data = manifest.load_data(seed.value_or(0));
  const DomainDataset probe =
      manifest.data_preset ? holdout_source(*manifest.data_preset, seed.value_or(0)) : data.source;
  const DiagnosticsReport report = diagnose(model, probe, data.target, dc);
  const std::string text = report.to_text();
  if (out) {
    ensure_dir(*out);
    write_text(*out / "diagnostics.txt", text);
  }
  std::cout << text;
  return kExitOk;
}

int cmd_sweep(const ConfigSource& src, ExperimentManifest manifest, const std::string& seeds,
              const Overrides& overrides, bool with_diagnostics) {
  TrainingConfig cfg = src.load();
  overrides.apply(cfg);
  manifest.config_path = src.path();
  manifest.seeds = parse_seed_list(seeds);
  manifest.validate();
  std::vector<SeedOutcome> outcomes;
  int first_failure = kExitOk;
  for (std::uint64_t seed : manifest.seeds) {
    outcomes.push_back(
        run_seed(manifest, cfg, seed, with_diagnostics, manifest.out_dir / ("seed-" + std::to_string(seed))));
    const SeedOutcome& o = outcomes.back();
    if (o.exit_code != kExitOk) {
      std::cerr << "seed " << seed << " failed: " << o.message << '\n';
      if (first_failure == kExitOk) first_failure = o.exit_code;
    } else {
      std::cout << "seed " << seed << " ok";
      if (o.final_metrics && o.final_metrics->target_accuracy)
        std::cout << "  target_accuracy " << format_metric(*o.final_metrics->target_accuracy);
      std::cout << '\n';
    }
  }
  std::ostringstream csv;
  write_sweep_csv(outcomes, csv);
  write_text(manifest.out_dir / "sweep.csv", csv.str());
  std::cout << "wrote " << (manifest.out_dir / "sweep.csv").string() << '\n';
  return first_failure;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Adversarial data augmentation for domain adaptation"};
  app.require_subcommand(1);

  std::string gen_preset;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen", "Write source/target CSVs for a synthetic benchmark");
  gen->add_option("--preset", gen_preset, "Data preset")->required();
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->footer([] {
    std::string s = "Data presets:";
    for (const auto& p : kDataPresets) s += std::string("\n  ") + p.name + "  " + p.description;
    return s;
  }());

  ConfigSource train_cfg;
  ExperimentManifest train_manifest;
  Overrides train_over;
  std::string train_out;
  auto* train = app.add_subcommand("train", "Train one model and write metrics, checkpoint and resolved config");
  add_config_options(*train, train_cfg);
  add_data_options(*train, train_manifest);
  train->add_option("--out", train_out, "Output directory")->required();
  train->add_option("--seed", train_over.seed, "Override the config seed");
  add_override_options(*train, train_over);

  std::string diag_ckpt;
  ConfigSource diag_cfg;
  ExperimentManifest diag_manifest;
  std::optional<std::uint64_t> diag_seed;
  std::optional<std::string> diag_out;
  auto* diag = app.add_subcommand("diagnose", "Information-theoretic diagnostics for a checkpoint");
  diag->add_option("--checkpoint", diag_ckpt, "Model checkpoint")->required();
  add_config_options(*diag, diag_cfg);
  add_data_options(*diag, diag_manifest);
  diag->add_option("--seed", diag_seed, "Diagnostics seed (and data-preset seed)");
  diag->add_option("--out", diag_out, "Output directory for diagnostics.txt");

  ConfigSource sweep_cfg;
  ExperimentManifest sweep_manifest;
  Overrides sweep_over;
  std::string sweep_seeds;
  std::string sweep_out;
  bool sweep_diag = false;
  auto* sweep = app.add_subcommand("sweep", "Train over a seed list and aggregate final metrics");
  add_config_options(*sweep, sweep_cfg);
  add_data_options(*sweep, sweep_manifest);
  sweep->add_option("--seeds", sweep_seeds, "Seed range N..M or list a,b,c")->required();
  sweep->add_option("--out", sweep_out, "Output directory")->required();
  sweep->add_flag("--diagnose", sweep_diag, "Also run diagnostics per seed");
  add_override_options(*sweep, sweep_over);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen(gen_preset, gen_seed, gen_out);
    if (*train) {
      train_manifest.out_dir = train_out;
      return cmd_train(train_cfg, train_manifest, train_over);
    }
    if (*diag) {
      std::optional<fs::path> out;
      if (diag_out) out = fs::path(*diag_out);
      diag_manifest.seeds = {diag_seed.value_or(0)};
      diag_manifest.validate();
      return cmd_diagnose(diag_ckpt, diag_cfg, diag_manifest, diag_seed, out);
    }
    if (*sweep) {
      sweep_manifest.out_dir = sweep_out;
      return cmd_sweep(sweep_cfg, sweep_manifest, sweep_seeds, sweep_over, sweep_diag);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kExitUsage;
}

}  // namespace ada
