#pragma once

// Command-line front end: gen, train, diagnose, sweep.
//
// Exit codes: 0 success, 1 internal error, 2 usage or input error,
// 3 non-finite loss, 4 data contract violation.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ada/data.hpp"
#include "ada/trainer.hpp"

namespace ada {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitDataContract = 4;

struct DataPair {
  DomainDataset source;
  DomainDataset target;
};

// Named synthetic benchmarks; each seed yields a different draw.
std::vector<std::string> data_preset_names();
DataPair generate_data_preset(const std::string& name, std::uint64_t seed);
// Fresh source-domain draw from the same preset, disjoint in seed from the pair.
DomainDataset holdout_source(const std::string& name, std::uint64_t seed);

// Shipped training configs under the preset directory.
std::vector<std::string> config_preset_names();
std::filesystem::path config_preset_path(const std::string& name);

// Parses "N..M" (inclusive) or a comma-separated list.
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

struct ExperimentManifest {
  std::string config_path;
  std::optional<std::string> source_path;
  std::optional<std::string> target_path;
  std::optional<std::string> data_preset;
  std::filesystem::path out_dir;
  std::vector<std::uint64_t> seeds;

  // Seeds unique, exactly one data origin, output directory creatable.
  void validate() const;
  DataPair load_data(std::uint64_t seed) const;
};

// Applies command-line overrides on top of a loaded config.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> epsilon;  // both perturbations; an explicit step size is rescaled
  std::optional<double> lambda_adv;
  std::optional<double> lambda_cons;
  std::optional<int> epochs;

  void apply(TrainingConfig& cfg) const;
};

// Outcome of one seed of a sweep. Diagnostics use the preset's held-out source
// draw when the data come from a preset, otherwise the training source.
struct SeedOutcome {
  std::uint64_t seed = 0;
  int exit_code = kExitOk;
  std::string message;
  std::optional<MetricsRow> final_metrics;
  std::optional<DiagnosticsReport> diagnostics;
};

// Trains one seed; with `out_dir` set, writes metrics.csv, model.ckpt,
// config.resolved.yaml (and diagnostics.txt) there. Never throws for
// training failures; they are reported through exit_code.
SeedOutcome run_seed(const ExperimentManifest& manifest, TrainingConfig cfg, std::uint64_t seed,
                     bool with_diagnostics, const std::optional<std::filesystem::path>& out_dir);

// Per-seed rows, then `mean` and `stddev` rows over successful seeds.
void write_sweep_csv(const std::vector<SeedOutcome>& outcomes, std::ostream& out);

int run_cli(int argc, const char* const* argv);

}  // namespace ada
