#pragma once

// Datasets: two-spirals generation, CSV ingestion and export,
// standardization and stratified splitting.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dip/errors.hpp"
#include "dip/rng.hpp"

namespace dip {

/// Features n x d with one-hot labels n x K. class_names, when present, holds
/// the original label id of each class column.
struct Dataset {
  Eigen::MatrixXd features;
  Eigen::MatrixXd labels;
  std::vector<std::string> class_names;

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }
  Eigen::Index num_classes() const { return labels.cols(); }

  int label_of(Eigen::Index i) const {
    Eigen::Index k;
    labels.row(i).maxCoeff(&k);
    return static_cast<int>(k);
  }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes()), 0);
    for (Eigen::Index i = 0; i < size(); ++i) ++counts[static_cast<std::size_t>(label_of(i))];
    return counts;
  }

  void validate() const {
    if (size() < 1) throw DataError("dataset is empty");
    if (labels.rows() != features.rows()) throw DataError("features and labels differ in row count");
    if (num_classes() < 1) throw DataError("dataset has no classes");
    if (!features.allFinite()) throw DataError("dataset features contain NaN or Inf");
    for (Eigen::Index i = 0; i < size(); ++i) {
      int ones = 0;
      for (Eigen::Index k = 0; k < num_classes(); ++k) {
        const double v = labels(i, k);
        if (v == 1.0)
          ++ones;
        else if (v != 0.0)
          throw DataError("label row " + std::to_string(i) + " is not one-hot");
      }
      if (ones != 1) throw DataError("label row " + std::to_string(i) + " is not one-hot");
    }
    if (!class_names.empty() && class_names.size() != static_cast<std::size_t>(num_classes()))
      throw DataError("class_names length does not match the label width");
  }
};

inline Dataset subset(const Dataset& ds, const std::vector<std::size_t>& rows) {
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), ds.dim());
  out.labels.resize(static_cast<Eigen::Index>(rows.size()), ds.num_classes());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto src = static_cast<Eigen::Index>(rows[r]);
    out.features.row(static_cast<Eigen::Index>(r)) = ds.features.row(src);
    out.labels.row(static_cast<Eigen::Index>(r)) = ds.labels.row(src);
  }
  out.class_names = ds.class_names;
  return out;
}

/// Two interleaved Archimedean spirals. A class-c point has angle theta
/// uniform on [0, 2*pi*turns], radius theta / (2*pi*turns), and sits at
/// r * (cos(theta + c*pi), sin(theta + c*pi)) plus isotropic Gaussian noise.
/// Rows are ordered class 0 first, then class 1.
inline Dataset gen_spirals(int n_per_class, double noise_std, double turns, std::uint64_t seed) {
  if (n_per_class < 1) throw ConfigError("gen_spirals: n_per_class must be >= 1");
  if (!(noise_std >= 0.0)) throw ConfigError("gen_spirals: noise_std must be >= 0");
  if (!(turns > 0.0)) throw ConfigError("gen_spirals: turns must be > 0");
  RngStream rng(seed);
  const double span = 2.0 * std::numbers::pi * turns;
  Dataset ds;
  ds.features.resize(2 * n_per_class, 2);
  ds.labels = Eigen::MatrixXd::Zero(2 * n_per_class, 2);
  ds.class_names = {"0", "1"};
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < n_per_class; ++i) {
      const Eigen::Index row = c * n_per_class + i;
      const double theta = span * rng.uniform();
      const double r = theta / span;
      const double phase = theta + c * std::numbers::pi;
      double x = r * std::cos(phase);
      double y = r * std::sin(phase);
      if (noise_std > 0.0) {
        x += noise_std * rng.normal();
        y += noise_std * rng.normal();
      }
      ds.features(row, 0) = x;
      ds.features(row, 1) = y;
      ds.labels(row, c) = 1.0;
    }
  }
  return ds;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::string trim(std::string s) {
  const auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

}  // namespace detail

/// Reads `x1,...,xd,label` rows; integer labels are one-hot encoded over the
/// observed class set in ascending order.
inline Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path);
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError("missing header row", 1);
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv_line(line);
  if (header.size() < 2) throw ParseError("header must be x1,...,xd,label", lineno);
  const std::size_t d = header.size() - 1;
  for (std::size_t j = 0; j < d; ++j)
    if (detail::trim(header[j]) != "x" + std::to_string(j + 1))
      throw ParseError("unknown header column '" + header[j] + "'", lineno);
  if (detail::trim(header[d]) != "label") throw ParseError("last header column must be 'label'", lineno);

  std::vector<std::vector<double>> rows;
  std::vector<long long> ids;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != d + 1)
      throw ParseError("expected " + std::to_string(d + 1) + " fields, got " + std::to_string(cells.size()), lineno);
    std::vector<double> row(d);
    for (std::size_t j = 0; j < d; ++j) {
      const std::string cell = detail::trim(cells[j]);
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty())
        throw ParseError("non-numeric feature '" + cell + "'", lineno);
      if (!std::isfinite(v)) throw ParseError("non-finite feature '" + cell + "'", lineno);
      row[j] = v;
    }
    const std::string lab = detail::trim(cells[d]);
    long long id = 0;
    auto [ptr, ec] = std::from_chars(lab.data(), lab.data() + lab.size(), id);
    if (ec != std::errc() || ptr != lab.data() + lab.size() || lab.empty())
      throw ParseError("label '" + lab + "' is not an integer", lineno);
    rows.push_back(std::move(row));
    ids.push_back(id);
  }
  if (rows.empty()) throw DataError("dataset " + path + " has no rows");

  std::vector<long long> classes = ids;
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  std::map<long long, Eigen::Index> column;
  for (std::size_t k = 0; k < classes.size(); ++k) column[classes[k]] = static_cast<Eigen::Index>(k);

  Dataset ds;
  const auto n = static_cast<Eigen::Index>(rows.size());
  ds.features.resize(n, static_cast<Eigen::Index>(d));
  ds.labels = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(classes.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) ds.features(i, static_cast<Eigen::Index>(j)) = rows[static_cast<std::size_t>(i)][j];
    ds.labels(i, column[ids[static_cast<std::size_t>(i)]]) = 1.0;
  }
  for (auto c : classes) ds.class_names.push_back(std::to_string(c));
  return ds;
}

/// Writes the CSV schema read by load_csv with 17 significant digits.
inline void save_csv(const Dataset& ds, const std::string& path) {
  ds.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write dataset " + path);
  for (Eigen::Index j = 0; j < ds.dim(); ++j) out << 'x' << (j + 1) << ',';
  out << "label\n";
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    for (Eigen::Index j = 0; j < ds.dim(); ++j) out << detail::format_double(ds.features(i, j)) << ',';
    const int k = ds.label_of(i);
    if (ds.class_names.empty())
      out << k;
    else
      out << ds.class_names[static_cast<std::size_t>(k)];
    out << '\n';
  }
  if (!out) throw IoError("failed writing dataset " + path);
}

struct StandardizeStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
};

inline constexpr double kStdFloor = 1e-8;

inline Dataset apply_stats(const Dataset& ds, const StandardizeStats& stats) {
  if (stats.mean.size() != ds.dim() || stats.std.size() != ds.dim())
    throw ShapeError("apply_stats: statistics dimension mismatch");
  Dataset out = ds;
  out.features = ((ds.features.rowwise() - stats.mean.transpose()).array().rowwise() / stats.std.transpose().array())
                     .matrix();
  return out;
}

/// Per-dimension population mean and std from `train`, std floored at 1e-8.
inline std::pair<Dataset, StandardizeStats> standardize(const Dataset& train) {
  if (train.size() < 1) throw DataError("standardize: empty dataset");
  StandardizeStats stats;
  stats.mean = train.features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = train.features.rowwise() - stats.mean.transpose();
  stats.std = (centered.array().square().colwise().sum() / static_cast<double>(train.size())).sqrt().transpose();
  stats.std = stats.std.cwiseMax(kStdFloor);
  return {apply_stats(train, stats), stats};
}

/// Stratified split; each class sends round(count * test_fraction) rows to
/// the test side. Both sides keep the original row order.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("split: test_fraction must be in (0, 1)");
  RngStream rng(seed);
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.num_classes()));
  for (Eigen::Index i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.label_of(i))].push_back(static_cast<std::size_t>(i));
  std::vector<std::size_t> train_rows, test_rows;
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    auto& rows = by_class[k];
    if (rows.empty()) continue;
    const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(rows.size()) * test_fraction));
    if (n_test == 0 || n_test == rows.size())
      throw DataError("split: class " + std::to_string(k) + " would leave an empty train or test side");
    std::shuffle(rows.begin(), rows.end(), rng.engine());
    test_rows.insert(test_rows.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_test));
    train_rows.insert(train_rows.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_test), rows.end());
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());
  return {subset(ds, train_rows), subset(ds, test_rows)};
}

}  // namespace dip
