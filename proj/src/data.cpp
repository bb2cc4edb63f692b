#include "ada/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "ada/error.hpp"
#include "ada/rng.hpp"

namespace ada {

std::string to_string(Domain d) { return d == Domain::source ? "source" : "target"; }

Domain parse_domain(const std::string& name) {
  if (name == "source") return Domain::source;
  if (name == "target") return Domain::target;
  throw ConfigError("unknown domain '" + name + "'");
}

std::size_t DomainDataset::num_classes() const {
  if (!labels || labels->empty()) return 0;
  return static_cast<std::size_t>(*std::max_element(labels->begin(), labels->end())) + 1;
}

std::span<const int> DomainDataset::label_span() const {
  if (!labels) throw ContractError("dataset '" + name + "' has no labels");
  return *labels;
}

void DomainDataset::validate() const {
  if (features.rank() != 2) throw ContractError("dataset features must be a matrix");
  if (!features.all_finite()) throw ContractError("dataset '" + name + "' has non-finite features");
  if (labels) {
    if (labels->size() != features.rows()) {
      throw ContractError("dataset '" + name + "' has " + std::to_string(labels->size()) +
                          " labels for " + std::to_string(features.rows()) + " rows");
    }
    for (int y : *labels) {
      if (y < 0) throw ContractError("negative label in dataset '" + name + "'");
    }
  }
}

DomainDataset DomainDataset::subset(std::span<const std::size_t> rows) const {
  DomainDataset out;
  out.features = gather_rows(features, rows);
  if (labels) {
    std::vector<int> picked;
    picked.reserve(rows.size());
    for (std::size_t r : rows) picked.push_back((*labels)[r]);
    out.labels = std::move(picked);
  }
  out.domain = domain;
  out.name = name;
  return out;
}

DomainDataset two_moons(std::size_t n, double noise_sigma, std::uint64_t seed) {
  if (n == 0 || n % 2 != 0) throw ContractError("two_moons needs a positive even sample count");
  if (!(noise_sigma >= 0.0)) throw ContractError("noise_sigma must be >= 0");
  const std::size_t half = n / 2;
  DomainDataset out;
  out.features = Tensor(Shape{n, 2});
  out.labels = std::vector<int>(n);
  out.domain = Domain::source;
  out.name = "two_moons";
  for (std::size_t i = 0; i < half; ++i) {
    const double t = half == 1 ? 0.0 : std::numbers::pi * static_cast<double>(i) / static_cast<double>(half - 1);
    out.features(i, 0) = std::cos(t);
    out.features(i, 1) = std::sin(t);
    (*out.labels)[i] = 0;
    out.features(half + i, 0) = 1.0 - std::cos(t);
    out.features(half + i, 1) = 0.5 - std::sin(t);
    (*out.labels)[half + i] = 1;
  }
  if (noise_sigma > 0.0) {
    Rng rng(seed);
    for (double& v : out.features.values()) v += noise_sigma * rng.normal();
  }
  return out;
}

DomainDataset apply_shift(const DomainDataset& data, const ShiftSpec& shift, std::uint64_t seed) {
  if (!(shift.noise_sigma >= 0.0)) throw ContractError("noise_sigma must be >= 0");
  const std::size_t d = data.dim();
  if (!shift.translation.empty() && shift.translation.size() != d) {
    throw DimensionError("translation of length " + std::to_string(shift.translation.size()) +
                         " for " + std::to_string(d) + "-dimensional data");
  }
  DomainDataset out = data;
  out.domain = Domain::target;
  if (d >= 2 && shift.rotation_degrees != 0.0) {
    const double theta = shift.rotation_degrees * std::numbers::pi / 180.0;
    const double c = std::cos(theta), s = std::sin(theta);
    for (std::size_t r = 0; r < out.size(); ++r) {
      const double x = out.features(r, 0), y = out.features(r, 1);
      out.features(r, 0) = c * x - s * y;
      out.features(r, 1) = s * x + c * y;
    }
  }
  if (!shift.translation.empty()) {
    for (std::size_t r = 0; r < out.size(); ++r)
      for (std::size_t k = 0; k < d; ++k) out.features(r, k) += shift.translation[k];
  }
  if (shift.noise_sigma > 0.0) {
    Rng rng(seed);
    for (double& v : out.features.values()) v += shift.noise_sigma * rng.normal();
  }
  return out;
}

DomainDataset gaussian_blobs(const std::vector<std::vector<double>>& centers, std::size_t n_per_class,
                             double sigma, std::uint64_t seed) {
  if (centers.size() < 2) throw ContractError("gaussian_blobs needs at least two centers");
  if (!(sigma >= 0.0)) throw ContractError("sigma must be >= 0");
  const std::size_t d = centers.front().size();
  for (const auto& c : centers) {
    if (c.size() != d || d == 0) throw DimensionError("blob centers must share a positive dimension");
  }
  DomainDataset out;
  out.features = Tensor(Shape{centers.size() * n_per_class, d});
  out.labels = std::vector<int>();
  out.name = "gaussian_blobs";
  Rng rng(seed);
  std::size_t row = 0;
  for (std::size_t k = 0; k < centers.size(); ++k) {
    for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
      for (std::size_t j = 0; j < d; ++j) {
        out.features(row, j) = sigma > 0.0 ? centers[k][j] + sigma * rng.normal() : centers[k][j];
      }
      out.labels->push_back(static_cast<int>(k));
    }
  }
  return out;
}

// ---- CSV ----

namespace {

void write_double(std::ostream& out, double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.write(buf, res.ptr - buf);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void write_csv(const DomainDataset& data, std::ostream& out) {
  const std::size_t d = data.dim();
  for (std::size_t k = 0; k < d; ++k) out << 'f' << k << ',';
  out << "label,domain\n";
  const std::string domain = to_string(data.domain);
  for (std::size_t r = 0; r < data.size(); ++r) {
    for (std::size_t k = 0; k < d; ++k) {
      write_double(out, data.features(r, k));
      out << ',';
    }
    if (data.labels) out << (*data.labels)[r];
    out << ',' << domain << '\n';
  }
}

DomainDataset read_csv(std::istream& in, const std::string& name) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError("missing header", line_no);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line);
  if (header.size() < 2 || header[header.size() - 2] != "label" || header.back() != "domain") {
    throw ParseError("header must end with label,domain", line_no);
  }
  const std::size_t d = header.size() - 2;
  for (std::size_t k = 0; k < d; ++k) {
    if (header[k] != "f" + std::to_string(k)) throw ParseError("expected column f" + std::to_string(k), line_no);
  }

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t labeled = 0, unlabeled = 0;
  std::optional<Domain> domain;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != d + 2) {
      throw ParseError("expected " + std::to_string(d + 2) + " columns, found " +
                           std::to_string(cells.size()),
                       line_no);
    }
    for (std::size_t k = 0; k < d; ++k) {
      const std::string& cell = cells[k];
      double v = 0.0;
      auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        throw ParseError("non-numeric feature '" + cell + "' in column f" + std::to_string(k), line_no);
      }
      values.push_back(v);
    }
    const std::string& label_cell = cells[d];
    if (labeled + unlabeled > 0 && label_cell.empty() != (unlabeled > 0)) {
      throw ParseError("file mixes labeled and unlabeled rows", line_no);
    }
    if (label_cell.empty()) {
      ++unlabeled;
      labels.push_back(-1);
    } else {
      int y = 0;
      auto res = std::from_chars(label_cell.data(), label_cell.data() + label_cell.size(), y);
      if (res.ec != std::errc() || res.ptr != label_cell.data() + label_cell.size() || y < 0) {
        throw ParseError("bad label '" + label_cell + "'", line_no);
      }
      ++labeled;
      labels.push_back(y);
    }
    Domain row_domain;
    try {
      row_domain = parse_domain(cells[d + 1]);
    } catch (const ConfigError&) {
      throw ParseError("domain must be source or target, got '" + cells[d + 1] + "'", line_no);
    }
    if (domain && *domain != row_domain) throw ParseError("rows mix source and target domains", line_no);
    domain = row_domain;
  }
  DomainDataset out;
  const std::size_t n = labels.size();
  out.features = Tensor(Shape{n, d}, std::move(values));
  if (labeled) out.labels = std::move(labels);
  out.domain = domain.value_or(Domain::source);
  out.name = name;
  return out;
}

void save_csv(const DomainDataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  write_csv(data, out);
}

DomainDataset load_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return read_csv(in, std::filesystem::path(path).stem().string());
}

}  // namespace ada
