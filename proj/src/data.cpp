#include "flsim/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "flsim/error.hpp"
#include "flsim/log.hpp"
#include "flsim/rng.hpp"

namespace flsim {

void Dataset::validate() const {
  if (labels.empty()) throw DataError("dataset has no samples");
  if (n_classes <= 0) throw DataError("dataset must have at least one class");
  if (features.rows != labels.size()) {
    throw DataError("feature rows (" + std::to_string(features.rows) +
                    ") do not match label count (" + std::to_string(labels.size()) + ")");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes) {
      throw DataError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                      " outside [0, " + std::to_string(n_classes) + ")");
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.n_classes = n_classes;
  out.features = Matrix(indices.size(), features.cols);
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto src = features.row(indices[i]);
    std::copy(src.begin(), src.end(), out.features.row(i).begin());
    out.labels.push_back(labels[indices[i]]);
  }
  return out;
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(n_classes), 0);
  for (int y : labels) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

Dataset generate_blobs(std::size_t n_samples, std::size_t n_features, int n_classes,
                       double separation, std::uint64_t seed) {
  if (n_samples == 0 || n_features == 0 || n_classes <= 0) {
    throw PreconditionError("generate_blobs: sample, feature and class counts must be positive");
  }
  Rng rng = Rng::stream(seed, "data/blobs");
  const auto classes = static_cast<std::size_t>(n_classes);
  const double radius = separation / std::sqrt(2.0);

  Matrix means(classes, n_features);
  if (classes <= n_features) {
    for (std::size_t c = 0; c < classes; ++c) means(c, c) = radius;
  } else {
    for (std::size_t c = 0; c < classes; ++c) {
      auto row = means.row(c);
      double norm = 0.0;
      for (auto& v : row) {
        v = rng.normal();
        norm += v * v;
      }
      norm = std::sqrt(norm);
      for (auto& v : row) v *= radius / norm;
    }
  }

  Dataset out;
  out.n_classes = n_classes;
  out.features = Matrix(n_samples, n_features);
  out.labels.resize(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const std::size_t c = i % classes;
    out.labels[i] = static_cast<int>(c);
    auto row = out.features.row(i);
    auto mean = means.row(c);
    for (std::size_t j = 0; j < n_features; ++j) row[j] = mean[j] + rng.normal();
  }
  return out;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    std::size_t comma = line.find(',', start);
    fields.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

std::string format_double(double value) {
  char buffer[64];
  auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, result.ptr);
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CSV file '" + path.string() + "'");
  const std::string where = path.string();

  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    for (auto field : split_fields(line)) header.emplace_back(field);
    break;
  }
  if (header.empty()) throw DataError(where + ": empty file, expected a header row");
  if (!header.empty() && header[0].starts_with("\xEF\xBB\xBF")) header[0].erase(0, 3);

  auto label_it = std::find(header.begin(), header.end(), label_column);
  if (label_it == header.end()) {
    throw DataError(where + ":" + std::to_string(line_no) + ": label column '" + label_column +
                    "' not found in header");
  }
  const auto label_pos = static_cast<std::size_t>(label_it - header.begin());
  const std::size_t n_features = header.size() - 1;

  std::vector<double> values;
  std::vector<long long> raw_labels;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw DataError(where + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields, found " +
                      std::to_string(fields.size()));
    }
    for (std::size_t col = 0; col < fields.size(); ++col) {
      auto cell = fields[col];
      const char* first = cell.data();
      const char* last = cell.data() + cell.size();
      if (col == label_pos) {
        long long label = 0;
        auto [ptr, ec] = std::from_chars(first, last, label);
        if (ec != std::errc() || ptr != last || cell.empty()) {
          throw DataError(where + ":" + std::to_string(line_no) + ": label '" +
                          std::string(cell) + "' is not an integer");
        }
        raw_labels.push_back(label);
      } else {
        double value = 0.0;
        auto [ptr, ec] = std::from_chars(first, last, value);
        if (ec != std::errc() || ptr != last || cell.empty()) {
          throw DataError(where + ":" + std::to_string(line_no) + ": column '" + header[col] +
                          "' value '" + std::string(cell) + "' is not numeric");
        }
        values.push_back(value);
      }
    }
  }
  if (raw_labels.empty()) throw DataError(where + ": empty dataset (no data rows)");

  std::set<long long> distinct(raw_labels.begin(), raw_labels.end());
  std::vector<long long> sorted(distinct.begin(), distinct.end());

  Dataset out;
  out.n_classes = static_cast<int>(sorted.size());
  out.features.rows = raw_labels.size();
  out.features.cols = n_features;
  out.features.data = std::move(values);
  out.labels.reserve(raw_labels.size());
  for (long long raw : raw_labels) {
    auto pos = std::lower_bound(sorted.begin(), sorted.end(), raw) - sorted.begin();
    out.labels.push_back(static_cast<int>(pos));
  }
  return out;
}

void save_csv(const Dataset& dataset, const std::filesystem::path& path,
              const std::string& label_column) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write CSV file '" + path.string() + "'");
  for (std::size_t j = 0; j < dataset.n_features(); ++j) out << 'f' << j << ',';
  out << label_column << '\n';
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (double v : dataset.features.row(i)) out << format_double(v) << ',';
    out << dataset.labels[i] << '\n';
  }
}

SplitIndices train_test_split_indices(const Dataset& dataset, double test_fraction,
                                      bool stratified, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw PreconditionError("train_test_split: test_fraction must be in (0, 1)");
  }
  Rng rng = Rng::stream(seed, "data/split");
  SplitIndices out;
  const std::size_t n = dataset.size();

  if (!stratified) {
    auto order = rng.permutation(n);
    auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
    n_test = std::min(n_test, n > 0 ? n - 1 : 0);
    out.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
    out.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  } else {
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(dataset.n_classes));
    for (std::size_t i = 0; i < n; ++i) {
      by_class[static_cast<std::size_t>(dataset.labels[i])].push_back(i);
    }
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      auto& members = by_class[c];
      if (members.empty()) continue;
      rng.shuffle(members);
      if (members.size() == 1) {
        warn("train_test_split: class " + std::to_string(c) +
             " has a single sample; keeping it in the training set");
        out.train.push_back(members[0]);
        continue;
      }
      auto n_test = static_cast<std::size_t>(
          std::llround(test_fraction * static_cast<double>(members.size())));
      n_test = std::min(n_test, members.size() - 1);
      out.test.insert(out.test.end(), members.begin(),
                      members.begin() + static_cast<std::ptrdiff_t>(n_test));
      out.train.insert(out.train.end(), members.begin() + static_cast<std::ptrdiff_t>(n_test),
                       members.end());
    }
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& dataset, double test_fraction,
                                             bool stratified, std::uint64_t seed) {
  auto split = train_test_split_indices(dataset, test_fraction, stratified, seed);
  return {dataset.subset(split.train), dataset.subset(split.test)};
}

std::string to_string(PartitionStrategy strategy) {
  switch (strategy) {
    case PartitionStrategy::kIid: return "iid";
    case PartitionStrategy::kDirichletLabel: return "dirichlet_label";
    case PartitionStrategy::kQuantitySkew: return "quantity_skew";
    case PartitionStrategy::kPathologicalLabel: return "pathological_label";
    case PartitionStrategy::kLabelQuantity: return "label_quantity";
    case PartitionStrategy::kCovariateShift: return "covariate_shift";
  }
  return "unknown";
}

PartitionStrategy parse_partition_strategy(const std::string& name) {
  for (auto s : {PartitionStrategy::kIid, PartitionStrategy::kDirichletLabel,
                 PartitionStrategy::kQuantitySkew, PartitionStrategy::kPathologicalLabel,
                 PartitionStrategy::kLabelQuantity, PartitionStrategy::kCovariateShift}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown distribution strategy '" + name +
                    "' (expected one of iid, dirichlet_label, quantity_skew, "
                    "pathological_label, label_quantity, covariate_shift)");
}

void PartitionSpec::validate() const {
  switch (strategy) {
    case PartitionStrategy::kDirichletLabel:
      if (!(alpha > 0.0)) throw ConfigError("dirichlet_label: alpha must be > 0");
      break;
    case PartitionStrategy::kQuantitySkew:
      if (!(beta > 0.0)) throw ConfigError("quantity_skew: beta must be > 0");
      break;
    case PartitionStrategy::kPathologicalLabel:
    case PartitionStrategy::kLabelQuantity:
      if (k < 1) throw ConfigError(to_string(strategy) + ": k must be >= 1");
      break;
    case PartitionStrategy::kCovariateShift:
      if (!(sigma >= 0.0)) throw ConfigError("covariate_shift: sigma must be >= 0");
      break;
    case PartitionStrategy::kIid:
      break;
  }
}

std::size_t Partition::assigned_count() const {
  std::size_t total = 0;
  for (const auto& list : assignment) total += list.size();
  return total;
}

std::vector<std::size_t> apportion(std::size_t total, std::span<const double> weights) {
  std::vector<std::size_t> counts(weights.size(), 0);
  if (weights.empty()) return counts;
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(sum > 0.0)) throw PreconditionError("apportion: weights must have a positive sum");

  std::vector<double> fractional(weights.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double quota = static_cast<double>(total) * weights[i] / sum;
    const double whole = std::floor(quota);
    counts[i] = static_cast<std::size_t>(whole);
    fractional[i] = quota - whole;
    assigned += counts[i];
  }
  // Rounding in the quotas can overshoot by a unit; take it back from the
  // smallest fractional parts.
  while (assigned > total) {
    std::size_t victim = weights.size();
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (counts[i] > 0 && (victim == weights.size() || fractional[i] < fractional[victim])) {
        victim = i;
      }
    }
    --counts[victim];
    fractional[victim] += 1.0;
    --assigned;
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return fractional[a] > fractional[b]; });
  for (std::size_t r = 0; assigned < total; ++r, ++assigned) ++counts[order[r % order.size()]];
  return counts;
}

namespace {

using Assignment = std::vector<std::vector<std::size_t>>;

std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& dataset) {
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(dataset.n_classes));
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    by_class[static_cast<std::size_t>(dataset.labels[i])].push_back(i);
  }
  return by_class;
}

// Deals consecutive chunks of `pool` to clients according to `counts`.
void deal_chunks(std::span<const std::size_t> pool, std::span<const std::size_t> counts,
                 Assignment& out) {
  std::size_t offset = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    out[c].insert(out[c].end(), pool.begin() + static_cast<std::ptrdiff_t>(offset),
                  pool.begin() + static_cast<std::ptrdiff_t>(offset + counts[c]));
    offset += counts[c];
  }
}

std::vector<std::size_t> equal_counts(std::size_t total, std::size_t parts) {
  std::vector<std::size_t> counts(parts, total / parts);
  for (std::size_t i = 0; i < total % parts; ++i) ++counts[i];
  return counts;
}

Assignment iid_assignment(const Dataset& dataset, std::size_t n_clients, Rng& rng) {
  Assignment out(n_clients);
  auto order = rng.permutation(dataset.size());
  deal_chunks(order, equal_counts(dataset.size(), n_clients), out);
  return out;
}

Assignment dirichlet_label_assignment(const Dataset& dataset, std::size_t n_clients, double alpha,
                                      Rng& rng) {
  Assignment out(n_clients);
  for (auto& members : indices_by_class(dataset)) {
    if (members.empty()) continue;
    rng.shuffle(members);
    auto proportions = rng.dirichlet(n_clients, alpha);
    deal_chunks(members, apportion(members.size(), proportions), out);
  }
  return out;
}

Assignment quantity_skew_assignment(const Dataset& dataset, std::size_t n_clients, double beta,
                                    Rng& rng) {
  Assignment out(n_clients);
  auto pool = rng.permutation(dataset.size());
  auto proportions = rng.dirichlet(n_clients, beta);
  deal_chunks(pool, apportion(pool.size(), proportions), out);
  return out;
}

std::vector<std::size_t> present_classes(const std::vector<std::vector<std::size_t>>& by_class) {
  std::vector<std::size_t> present;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (!by_class[c].empty()) present.push_back(c);
  }
  return present;
}

// Classes are laid out contiguously (sorted by label) and each is cut into
// shards; shard p goes to client column p mod n_clients. A class never has
// more shards than there are clients, so no client receives two shards of
// the same class.
Assignment pathological_assignment(const Dataset& dataset, std::size_t n_clients, int k,
                                   Rng& rng) {
  auto by_class = indices_by_class(dataset);
  auto classes = present_classes(by_class);
  const auto per_client = static_cast<std::size_t>(k);
  if (per_client > classes.size()) {
    throw InfeasiblePartitionError("pathological_label: k=" + std::to_string(k) +
                                   " exceeds the number of classes (" +
                                   std::to_string(classes.size()) + ")");
  }
  rng.shuffle(classes);
  const std::size_t total_shards = n_clients * per_client;
  auto shards_per_class = equal_counts(total_shards, classes.size());
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const auto& members = by_class[classes[i]];
    if (shards_per_class[i] > n_clients || shards_per_class[i] > members.size()) {
      throw InfeasiblePartitionError(
          "pathological_label: " + std::to_string(n_clients) + " clients x k=" +
          std::to_string(k) + " shards cannot be cut from " + std::to_string(classes.size()) +
          " classes without repeating a class within a client");
    }
  }

  auto columns = rng.permutation(n_clients);
  Assignment out(n_clients);
  std::size_t position = 0;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (shards_per_class[i] == 0) continue;
    auto members = by_class[classes[i]];
    rng.shuffle(members);
    auto sizes = equal_counts(members.size(), shards_per_class[i]);
    std::size_t offset = 0;
    for (std::size_t size : sizes) {
      auto& target = out[columns[position % n_clients]];
      target.insert(target.end(), members.begin() + static_cast<std::ptrdiff_t>(offset),
                    members.begin() + static_cast<std::ptrdiff_t>(offset + size));
      offset += size;
      ++position;
    }
  }
  return out;
}

Assignment label_quantity_assignment(const Dataset& dataset, std::size_t n_clients, int k,
                                     Rng& rng) {
  auto by_class = indices_by_class(dataset);
  auto classes = present_classes(by_class);
  const auto per_client = static_cast<std::size_t>(k);
  if (per_client > classes.size()) {
    throw InfeasiblePartitionError("label_quantity: k=" + std::to_string(k) +
                                   " exceeds the number of classes (" +
                                   std::to_string(classes.size()) + ")");
  }
  rng.shuffle(classes);
  std::vector<std::vector<std::size_t>> owners(classes.size());
  for (std::size_t c = 0; c < n_clients; ++c) {
    for (std::size_t j = 0; j < per_client; ++j) {
      owners[(c * per_client + j) % classes.size()].push_back(c);
    }
  }
  Assignment out(n_clients);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (owners[i].empty()) continue;
    auto members = by_class[classes[i]];
    if (members.size() < owners[i].size()) {
      throw InfeasiblePartitionError("label_quantity: class " + std::to_string(classes[i]) +
                                     " has " + std::to_string(members.size()) +
                                     " samples but " + std::to_string(owners[i].size()) +
                                     " owners");
    }
    rng.shuffle(members);
    auto sizes = equal_counts(members.size(), owners[i].size());
    std::size_t offset = 0;
    for (std::size_t o = 0; o < owners[i].size(); ++o) {
      auto& target = out[owners[i][o]];
      target.insert(target.end(), members.begin() + static_cast<std::ptrdiff_t>(offset),
                    members.begin() + static_cast<std::ptrdiff_t>(offset + sizes[o]));
      offset += sizes[o];
    }
  }
  return out;
}

bool has_empty_client(const Assignment& assignment) {
  return std::any_of(assignment.begin(), assignment.end(),
                     [](const auto& list) { return list.empty(); });
}

}  // namespace

Partition partition(const Dataset& dataset, std::size_t n_clients, const PartitionSpec& spec) {
  if (n_clients == 0) throw PreconditionError("partition: n_clients must be >= 1");
  spec.validate();
  dataset.validate();
  Rng rng = Rng::stream(spec.seed, "data/partition/" + to_string(spec.strategy));

  Partition out;
  int attempt = 0;
  for (; attempt < kMaxPartitionAttempts; ++attempt) {
    switch (spec.strategy) {
      case PartitionStrategy::kIid:
      case PartitionStrategy::kCovariateShift:
        out.assignment = iid_assignment(dataset, n_clients, rng);
        break;
      case PartitionStrategy::kDirichletLabel:
        out.assignment = dirichlet_label_assignment(dataset, n_clients, spec.alpha, rng);
        break;
      case PartitionStrategy::kQuantitySkew:
        out.assignment = quantity_skew_assignment(dataset, n_clients, spec.beta, rng);
        break;
      case PartitionStrategy::kPathologicalLabel:
        out.assignment = pathological_assignment(dataset, n_clients, spec.k, rng);
        break;
      case PartitionStrategy::kLabelQuantity:
        out.assignment = label_quantity_assignment(dataset, n_clients, spec.k, rng);
        break;
    }
    if (!has_empty_client(out.assignment)) break;
  }
  if (attempt == kMaxPartitionAttempts) {
    throw InfeasiblePartitionError(to_string(spec.strategy) + ": some client stayed empty after " +
                                   std::to_string(kMaxPartitionAttempts) +
                                   " attempts; use fewer clients or a larger dataset");
  }
  for (auto& list : out.assignment) std::sort(list.begin(), list.end());

  if (spec.strategy == PartitionStrategy::kCovariateShift) {
    out.feature_offsets.assign(n_clients, std::vector<double>(dataset.n_features()));
    for (auto& offset : out.feature_offsets) {
      for (auto& v : offset) v = rng.normal(0.0, spec.sigma);
    }
  }
  return out;
}

double tv_distance(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  const double total_a = static_cast<double>(std::accumulate(a.begin(), a.end(), std::size_t{0}));
  const double total_b = static_cast<double>(std::accumulate(b.begin(), b.end(), std::size_t{0}));
  if (total_a == 0.0 || total_b == 0.0) return total_a == total_b ? 0.0 : 1.0;
  double distance = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    distance += std::abs(static_cast<double>(a[i]) / total_a - static_cast<double>(b[i]) / total_b);
  }
  return 0.5 * distance;
}

SkewReport partition_stats(const Dataset& dataset, const Partition& partition) {
  SkewReport report;
  const auto classes = static_cast<std::size_t>(dataset.n_classes);
  for (const auto& list : partition.assignment) {
    report.sizes.push_back(list.size());
    std::vector<std::size_t> histogram(classes, 0);
    for (std::size_t i : list) ++histogram[static_cast<std::size_t>(dataset.labels[i])];
    report.label_histograms.push_back(std::move(histogram));
  }
  const std::size_t n = report.label_histograms.size();
  if (n >= 2) {
    double total = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        total += tv_distance(report.label_histograms[a], report.label_histograms[b]);
      }
    }
    report.mean_pairwise_tv = total / static_cast<double>(n * (n - 1) / 2);
  }
  return report;
}

DataView::DataView(const Dataset* base, std::vector<std::size_t> indices,
                   std::vector<double> offset)
    : base_(base), indices_(std::move(indices)), offset_(std::move(offset)) {
  if (base_ == nullptr) throw PreconditionError("DataView: null dataset");
  if (!offset_.empty() && offset_.size() != base_->n_features()) {
    throw ShapeError("DataView: offset length does not match feature count");
  }
}

void DataView::gather(std::span<const std::size_t> positions, Matrix& features,
                      std::vector<int>& labels) const {
  const std::size_t cols = n_features();
  features.rows = positions.size();
  features.cols = cols;
  features.data.resize(positions.size() * cols);
  labels.resize(positions.size());
  for (std::size_t r = 0; r < positions.size(); ++r) {
    const std::size_t source = indices_[positions[r]];
    auto src = base_->features.row(source);
    auto dst = features.row(r);
    std::copy(src.begin(), src.end(), dst.begin());
    if (!offset_.empty()) {
      for (std::size_t j = 0; j < cols; ++j) dst[j] += offset_[j];
    }
    labels[r] = base_->labels[source];
  }
}

void DataView::gather_all(Matrix& features, std::vector<int>& labels) const {
  std::vector<std::size_t> positions(indices_.size());
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  gather(positions, features, labels);
}

}  // namespace flsim
