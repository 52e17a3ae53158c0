#include "cflow/data/vectors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "cflow/errors.hpp"
#include "cflow/numerics/rng.hpp"

namespace cflow {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t pos = 0;
  while (true) {
    const auto comma = line.find(',', pos);
    cells.push_back(trim(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return cells;
}

double parse_cell(std::string_view cell, std::size_t row, std::size_t col) {
  double v = 0.0;
  const char* begin = cell.data();
  if (!cell.empty() && cell.front() == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, cell.data() + cell.size(), v);
  if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v))
    throw InputError("CSV row " + std::to_string(row) + ", column " + std::to_string(col) + ": '" + std::string(cell) +
                     "' is not a finite number");
  return v;
}

}  // namespace

VectorDataset VectorDataset::subset(const std::vector<std::size_t>& rows) const {
  VectorDataset out;
  out.feature_names = feature_names;
  out.standardization = standardization;
  out.vectors = Tensor::matrix(rows.size(), dims());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto src = vectors.row(rows[r]);
    std::copy(src.begin(), src.end(), out.vectors.row(r).begin());
    if (!labels.empty()) out.labels.push_back(labels.at(rows[r]));
  }
  return out;
}

std::vector<std::size_t> VectorDataset::rows_with_label(int label) const {
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < labels.size(); ++r)
    if (labels[r] == label) rows.push_back(r);
  return rows;
}

VectorDataset parse_vectors_csv(const std::string& text, const std::string& label_column) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw InputError("CSV is empty (a header row is required)");
  const auto header = split_commas(line);
  std::ptrdiff_t label_col = -1;
  VectorDataset ds;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == label_column)
      label_col = static_cast<std::ptrdiff_t>(c);
    else
      ds.feature_names.emplace_back(header[c]);
  }
  if (ds.feature_names.empty()) throw InputError("CSV has no feature columns");

  std::vector<double> values;
  std::size_t row = 1;  // header is row 1
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != header.size())
      throw InputError("CSV row " + std::to_string(row) + " has " + std::to_string(cells.size()) + " cells, header has " +
                       std::to_string(header.size()));
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const double v = parse_cell(cells[c], row, c + 1);
      if (static_cast<std::ptrdiff_t>(c) == label_col) {
        if (v != std::round(v)) throw InputError("CSV row " + std::to_string(row) + ": label '" + std::string(cells[c]) + "' is not an integer");
        ds.labels.push_back(static_cast<int>(v));
      } else {
        values.push_back(v);
      }
    }
    ++n;
  }
  if (n == 0) throw InputError("CSV has a header but no data rows");
  ds.vectors = Tensor({n, ds.feature_names.size()}, std::move(values));
  return ds;
}

VectorDataset load_vectors_csv(const std::filesystem::path& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_vectors_csv(buf.str(), label_column);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void write_vectors_csv(const std::filesystem::path& path, const VectorDataset& ds, const std::string& label_column) {
  std::ostringstream out;
  out.precision(17);
  for (std::size_t c = 0; c < ds.feature_names.size(); ++c) out << (c ? "," : "") << ds.feature_names[c];
  if (!ds.labels.empty()) out << "," << label_column;
  out << "\n";
  for (std::size_t r = 0; r < ds.size(); ++r) {
    auto row = ds.vectors.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << row[c];
    if (!ds.labels.empty()) out << "," << ds.labels[r];
    out << "\n";
  }
  const std::string text = out.str();
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Standardization fit_tabular(const VectorDataset& train, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0))
    throw ConfigError("uniqueness threshold must be in (0, 1], got " + std::to_string(threshold));
  const std::size_t n = train.size();
  if (n == 0) throw ContractViolation("cannot fit preprocessing on an empty dataset");
  Standardization rec;
  for (std::size_t c = 0; c < train.dims(); ++c) {
    std::map<double, std::size_t> counts;
    std::size_t most = 0;
    for (std::size_t r = 0; r < n; ++r) most = std::max(most, ++counts[train.vectors.at(r, c)]);
    if (static_cast<double>(most) / static_cast<double>(n) > threshold) continue;
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += train.vectors.at(r, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t r = 0; r < n; ++r) var += (train.vectors.at(r, c) - mean) * (train.vectors.at(r, c) - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    rec.kept.push_back(c);
    rec.mean.push_back(mean);
    rec.stddev.push_back(sd > 0.0 ? sd : 1.0);
  }
  return rec;
}

VectorDataset apply_standardization(const VectorDataset& ds, const Standardization& record) {
  VectorDataset out;
  out.labels = ds.labels;
  out.standardization = record;
  if (record.kept.empty()) throw ConfigError("preprocessing dropped every feature");
  out.vectors = Tensor::matrix(ds.size(), record.kept.size());
  for (std::size_t k = 0; k < record.kept.size(); ++k) {
    const std::size_t c = record.kept[k];
    if (c >= ds.dims()) throw ContractViolation("standardization record refers to column " + std::to_string(c) + " of " + std::to_string(ds.dims()));
    out.feature_names.push_back(c < ds.feature_names.size() ? ds.feature_names[c] : "f" + std::to_string(c));
    for (std::size_t r = 0; r < ds.size(); ++r)
      out.vectors.at(r, k) = (ds.vectors.at(r, c) - record.mean[k]) / record.stddev[k];
  }
  return out;
}

VectorDataset preprocess_tabular(const VectorDataset& train, double threshold) {
  return apply_standardization(train, fit_tabular(train, threshold));
}

ClassSplit split_by_class(const VectorDataset& ds, int in_class, std::uint64_t seed, double test_fraction) {
  const auto rows = ds.rows_with_label(in_class);
  if (rows.size() < 2) throw InputError("class " + std::to_string(in_class) + " has fewer than two rows");
  std::vector<std::size_t> others;
  for (std::size_t r = 0; r < ds.labels.size(); ++r)
    if (ds.labels[r] != in_class) others.push_back(r);
  if (others.empty()) throw InputError("no rows outside class " + std::to_string(in_class) + " to use as OOD");
  const auto split = random_split(rows.size(), test_fraction, seed);
  std::vector<std::size_t> train, test;
  for (auto i : split.train) train.push_back(rows[i]);
  for (auto i : split.test) test.push_back(rows[i]);
  return {ds.subset(train), ds.subset(test), ds.subset(others)};
}

VectorDataset gen_gaussian_mixture_2class(std::size_t n_per_class, std::size_t dims, std::uint64_t seed) {
  if (dims == 0 || n_per_class == 0) throw ConfigError("gaussian mixture needs positive dims and class size");
  Pcg32 rng(seed, 0x6a55);
  struct Component {
    std::vector<double> mean;
    std::vector<double> chol;  // lower-triangular dims x dims
  };
  auto make_component = [&] {
    Component comp{std::vector<double>(dims), std::vector<double>(dims * dims, 0.0)};
    for (auto& m : comp.mean) m = 1.2 * rng.normal();
    for (std::size_t i = 0; i < dims; ++i)
      for (std::size_t j = 0; j <= i; ++j) comp.chol[i * dims + j] = i == j ? 0.6 + 0.4 * rng.uniform() : 0.3 * rng.normal();
    return comp;
  };
  Component comps[2][2] = {{make_component(), make_component()}, {make_component(), make_component()}};

  VectorDataset ds;
  for (std::size_t d = 0; d < dims; ++d) ds.feature_names.push_back("x" + std::to_string(d));
  ds.vectors = Tensor::matrix(2 * n_per_class, dims);
  std::vector<double> eps(dims);
  for (std::size_t r = 0; r < 2 * n_per_class; ++r) {
    const int label = r < n_per_class ? 0 : 1;
    const Component& comp = comps[label][rng.below(2)];
    for (auto& e : eps) e = rng.normal();
    for (std::size_t i = 0; i < dims; ++i) {
      double v = comp.mean[i];
      for (std::size_t j = 0; j <= i; ++j) v += comp.chol[i * dims + j] * eps[j];
      ds.vectors.at(r, i) = v;
    }
    ds.labels.push_back(label);
  }
  return ds;
}

Tensor gen_two_moons(std::size_t n, double noise, std::uint64_t seed) {
  Pcg32 rng(seed, 0x3003);
  Tensor out = Tensor::matrix(n, 2);
  for (std::size_t r = 0; r < n; ++r) {
    const double a = std::numbers::pi * rng.uniform();
    double x = std::cos(a), y = std::sin(a);
    if (r % 2 == 1) {
      x = 1.0 - x;
      y = 0.5 - y;
    }
    out.at(r, 0) = x - 0.5 + noise * rng.normal();
    out.at(r, 1) = y - 0.25 + noise * rng.normal();
  }
  return out;
}

}  // namespace cflow
