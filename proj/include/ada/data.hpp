#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ada/autodiff.hpp"

namespace ada {

enum class Domain { source, target };

std::string to_string(Domain d);
Domain parse_domain(const std::string& name);

struct DomainDataset {
  Tensor features;  // n x d
  std::optional<std::vector<int>> labels;
  Domain domain = Domain::source;
  std::string name;

  std::size_t size() const { return features.rank() == 2 ? features.rows() : 0; }
  std::size_t dim() const { return features.rank() == 2 ? features.cols() : 0; }
  bool labeled() const { return labels.has_value(); }
  // 1 + largest label; 0 when unlabeled or empty.
  std::size_t num_classes() const;
  std::span<const int> label_span() const;

  // Throws ContractError when labels are missing, misaligned, negative or
  // features are not finite.
  void validate() const;
  DomainDataset subset(std::span<const std::size_t> rows) const;
};

struct ShiftSpec {
  double rotation_degrees = 0.0;
  std::vector<double> translation;  // empty means no translation
  double noise_sigma = 0.0;
};

// Two interleaved unit half-circles: class 0 at (cos t, sin t), class 1 at
// (1 - cos t, 0.5 - sin t), t evenly spaced over [0, pi], plus isotropic
// Gaussian noise. Requires an even n.
DomainDataset two_moons(std::size_t n, double noise_sigma, std::uint64_t seed);

// Rotation about the origin (first two coordinates), then translation, then
// fresh Gaussian noise. Labels are kept; the result is marked as target.
DomainDataset apply_shift(const DomainDataset& data, const ShiftSpec& shift, std::uint64_t seed);

// n_per_class points around each center with isotropic standard deviation sigma.
DomainDataset gaussian_blobs(const std::vector<std::vector<double>>& centers, std::size_t n_per_class,
                             double sigma, std::uint64_t seed);

// CSV with header f0,...,f{d-1},label,domain. Unlabeled rows leave label
// empty. Values are written in shortest round-trip form.
void write_csv(const DomainDataset& data, std::ostream& out);
DomainDataset read_csv(std::istream& in, const std::string& name = "");
void save_csv(const DomainDataset& data, const std::string& path);
DomainDataset load_csv(const std::string& path);

}  // namespace ada
