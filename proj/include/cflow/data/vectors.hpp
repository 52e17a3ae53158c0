#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cflow/data/images.hpp"
#include "cflow/numerics/tensor.hpp"

namespace cflow {

/// Feature selection and standardization fitted on a training split.
struct Standardization {
  std::vector<std::size_t> kept;  // source columns that survive filtering
  std::vector<double> mean;       // per kept column
  std::vector<double> stddev;
};

struct VectorDataset {
  Tensor vectors;  // n x d
  std::vector<int> labels;  // empty or one per row
  std::vector<std::string> feature_names;
  Standardization standardization;  // empty until preprocessing

  std::size_t size() const { return vectors.empty() ? 0 : vectors.rows(); }
  std::size_t dims() const { return vectors.empty() ? 0 : vectors.cols(); }
  VectorDataset subset(const std::vector<std::size_t>& rows) const;
  /// Rows whose label equals `label`.
  std::vector<std::size_t> rows_with_label(int label) const;
};

/// Reads a CSV with a header row. A column named `label_column` (if present)
/// becomes integer class labels; every other column is a feature.
VectorDataset parse_vectors_csv(const std::string& text, const std::string& label_column = "label");
VectorDataset load_vectors_csv(const std::filesystem::path& path, const std::string& label_column = "label");
void write_vectors_csv(const std::filesystem::path& path, const VectorDataset& ds, const std::string& label_column = "label");

/// Drops features whose most frequent value covers more than `threshold` of the
/// rows, then standardizes the rest to mean 0 and unit standard deviation
/// using this dataset's statistics.
Standardization fit_tabular(const VectorDataset& train, double threshold = 0.1);
VectorDataset apply_standardization(const VectorDataset& ds, const Standardization& record);
VectorDataset preprocess_tabular(const VectorDataset& train, double threshold = 0.1);

/// One class as in-distribution data split into train/test (10% test by
/// default), plus every row of the other classes as OOD.
struct ClassSplit {
  VectorDataset train;
  VectorDataset test;
  VectorDataset ood;
};
ClassSplit split_by_class(const VectorDataset& ds, int in_class, std::uint64_t seed, double test_fraction = 0.1);

/// Two classes, each a two-component Gaussian mixture in `dims` dimensions.
/// The classes have comparable spread and differ in location and correlation.
VectorDataset gen_gaussian_mixture_2class(std::size_t n_per_class, std::size_t dims, std::uint64_t seed);

/// Two interleaved half circles in 2-D with Gaussian jitter.
Tensor gen_two_moons(std::size_t n, double noise, std::uint64_t seed);

}  // namespace cflow
