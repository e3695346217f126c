#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "flsim/matrix.hpp"

namespace flsim {

struct Dataset {
  Matrix features;
  std::vector<int> labels;
  int n_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t n_features() const { return features.cols; }

  // Throws DataError when labels are out of range or the shapes disagree.
  void validate() const;
  // Rows at `indices`, in that order.
  Dataset subset(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> class_counts() const;

  bool operator==(const Dataset&) const = default;
};

// Balanced Gaussian clusters with unit variance. Class means are pairwise
// `separation` apart (orthogonal directions when n_classes <= n_features).
Dataset generate_blobs(std::size_t n_samples, std::size_t n_features, int n_classes,
                       double separation, std::uint64_t seed);

// Header row required. Every column except `label_column` is a feature.
// Labels are re-indexed densely, preserving the order of original values.
Dataset load_csv(const std::filesystem::path& path, const std::string& label_column);
void save_csv(const Dataset& dataset, const std::filesystem::path& path,
              const std::string& label_column = "label");

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

SplitIndices train_test_split_indices(const Dataset& dataset, double test_fraction,
                                      bool stratified, std::uint64_t seed);
std::pair<Dataset, Dataset> train_test_split(const Dataset& dataset, double test_fraction,
                                             bool stratified, std::uint64_t seed);

enum class PartitionStrategy {
  kIid,
  kDirichletLabel,
  kQuantitySkew,
  kPathologicalLabel,
  kLabelQuantity,
  kCovariateShift,
};

std::string to_string(PartitionStrategy strategy);
// Throws ConfigError listing valid names.
PartitionStrategy parse_partition_strategy(const std::string& name);

struct PartitionSpec {
  PartitionStrategy strategy = PartitionStrategy::kIid;
  double alpha = 0.5;  // dirichlet_label concentration
  double beta = 0.5;   // quantity_skew concentration
  int k = 2;           // classes per client (pathological_label, label_quantity)
  double sigma = 0.1;  // covariate_shift offset scale
  std::uint64_t seed = 0;

  // Throws ConfigError on out-of-range parameters.
  void validate() const;
};

struct Partition {
  // client index -> sorted sample indices
  std::vector<std::vector<std::size_t>> assignment;
  // Per-client additive feature offset; empty unless covariate_shift.
  std::vector<std::vector<double>> feature_offsets;

  std::size_t n_clients() const { return assignment.size(); }
  std::size_t assigned_count() const;
  bool has_offsets() const { return !feature_offsets.empty(); }
};

// Number of resampling attempts before an empty client becomes an error.
inline constexpr int kMaxPartitionAttempts = 100;

Partition partition(const Dataset& dataset, std::size_t n_clients, const PartitionSpec& spec);

// Largest-remainder apportionment of `total` by `weights`: floor first, then
// the remainder one unit at a time by descending fractional part, ties to the
// lower index.
std::vector<std::size_t> apportion(std::size_t total, std::span<const double> weights);

struct SkewReport {
  std::vector<std::size_t> sizes;
  std::vector<std::vector<std::size_t>> label_histograms;
  double mean_pairwise_tv = 0.0;
};

// Total-variation distance between two count histograms, each normalized.
double tv_distance(std::span<const std::size_t> a, std::span<const std::size_t> b);

SkewReport partition_stats(const Dataset& dataset, const Partition& partition);

// Read-only window onto a dataset: a list of rows plus an optional additive
// feature offset (covariate shift).
class DataView {
 public:
  DataView() = default;
  DataView(const Dataset* base, std::vector<std::size_t> indices,
           std::vector<double> offset = {});

  std::size_t size() const { return indices_.size(); }
  bool empty() const { return indices_.empty(); }
  const std::vector<std::size_t>& indices() const { return indices_; }
  int n_classes() const { return base_ ? base_->n_classes : 0; }
  std::size_t n_features() const { return base_ ? base_->n_features() : 0; }
  bool has_offset() const { return !offset_.empty(); }

  // Gathers the rows at local positions `positions` into a batch.
  void gather(std::span<const std::size_t> positions, Matrix& features,
              std::vector<int>& labels) const;
  void gather_all(Matrix& features, std::vector<int>& labels) const;

 private:
  const Dataset* base_ = nullptr;
  std::vector<std::size_t> indices_;
  std::vector<double> offset_;
};

}  // namespace flsim
