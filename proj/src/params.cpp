#include "flsim/params.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "flsim/error.hpp"
#include "flsim/kernels.hpp"

namespace flsim {

std::size_t shape_product(std::span<const std::size_t> shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void ModelParams::add(std::string name, std::vector<std::size_t> shape,
                      std::vector<double> values) {
  if (contains(name)) throw ShapeError("duplicate tensor name '" + name + "'");
  if (shape_product(shape) != values.size()) {
    throw ShapeError("tensor '" + name + "' has " + std::to_string(values.size()) +
                     " values but its shape holds " + std::to_string(shape_product(shape)));
  }
  tensors_.push_back(Tensor{std::move(name), std::move(shape), std::move(values)});
}

void ModelParams::add_zeros(std::string name, std::vector<std::size_t> shape) {
  std::vector<double> values(shape_product(shape), 0.0);
  add(std::move(name), std::move(shape), std::move(values));
}

std::size_t ModelParams::element_count() const {
  std::size_t total = 0;
  for (const auto& t : tensors_) total += t.size();
  return total;
}

const Tensor& ModelParams::at(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw ShapeError("no tensor named '" + name + "'");
}

Tensor& ModelParams::at(const std::string& name) {
  return const_cast<Tensor&>(std::as_const(*this).at(name));
}

bool ModelParams::contains(const std::string& name) const {
  return std::any_of(tensors_.begin(), tensors_.end(),
                     [&](const Tensor& t) { return t.name == name; });
}

bool ModelParams::compatible_with(const ModelParams& other) const {
  if (tensors_.size() != other.tensors_.size()) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].name != other.tensors_[i].name) return false;
    if (tensors_[i].shape != other.tensors_[i].shape) return false;
  }
  return true;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams out = *this;
  for (auto& t : out.tensors_) std::fill(t.values.begin(), t.values.end(), 0.0);
  return out;
}

std::vector<double> ModelParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(element_count());
  for (const auto& t : tensors_) flat.insert(flat.end(), t.values.begin(), t.values.end());
  return flat;
}

void ModelParams::assign_flat(std::span<const double> flat) {
  if (flat.size() != element_count()) throw ShapeError("assign_flat: element count mismatch");
  std::size_t offset = 0;
  for (auto& t : tensors_) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), t.size(), t.values.begin());
    offset += t.size();
  }
}

void require_compatible(const ModelParams& a, const ModelParams& b, const char* context) {
  if (!a.compatible_with(b)) {
    throw ShapeError(std::string(context) + ": parameter sets are not compatible");
  }
}

void add_scaled(ModelParams& target, const ModelParams& source, double alpha) {
  require_compatible(target, source, "add_scaled");
  for (std::size_t i = 0; i < target.tensor_count(); ++i) {
    kernels::axpy(alpha, source[i].values, target[i].values);
  }
}

ModelParams difference(const ModelParams& a, const ModelParams& b) {
  require_compatible(a, b, "difference");
  ModelParams out = a;
  for (std::size_t i = 0; i < out.tensor_count(); ++i) {
    auto& values = out[i].values;
    const auto& rhs = b[i].values;
    for (std::size_t j = 0; j < values.size(); ++j) values[j] -= rhs[j];
  }
  return out;
}

void scale(ModelParams& target, double alpha) {
  for (auto& t : target) {
    for (auto& v : t.values) v *= alpha;
  }
}

double squared_distance(const ModelParams& a, const ModelParams& b) {
  require_compatible(a, b, "squared_distance");
  double total = 0.0;
  for (std::size_t i = 0; i < a.tensor_count(); ++i) {
    total += kernels::squared_distance(a[i].values, b[i].values);
  }
  return total;
}

double max_abs_difference(const ModelParams& a, const ModelParams& b) {
  require_compatible(a, b, "max_abs_difference");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.tensor_count(); ++i) {
    for (std::size_t j = 0; j < a[i].size(); ++j) {
      worst = std::max(worst, std::abs(a[i].values[j] - b[i].values[j]));
    }
  }
  return worst;
}

}  // namespace flsim
