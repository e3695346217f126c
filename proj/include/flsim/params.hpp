#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace flsim {

struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  bool operator==(const Tensor&) const = default;
};

std::size_t shape_product(std::span<const std::size_t> shape);

// Ordered, named collection of real tensors. The unit of exchange between
// server and clients and the object aggregation works on.
class ModelParams {
 public:
  ModelParams() = default;

  // Appends a tensor; names must be unique and values.size() must equal the
  // product of the shape.
  void add(std::string name, std::vector<std::size_t> shape, std::vector<double> values);
  void add_zeros(std::string name, std::vector<std::size_t> shape);

  std::size_t tensor_count() const { return tensors_.size(); }
  std::size_t element_count() const;
  bool empty() const { return tensors_.empty(); }

  const Tensor& operator[](std::size_t i) const { return tensors_[i]; }
  Tensor& operator[](std::size_t i) { return tensors_[i]; }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  bool contains(const std::string& name) const;

  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  // Names, order and shapes match exactly.
  bool compatible_with(const ModelParams& other) const;

  // Same structure, every value zero.
  ModelParams zeros_like() const;

  // Concatenation of all values in tensor order.
  std::vector<double> flatten() const;
  void assign_flat(std::span<const double> flat);

  bool operator==(const ModelParams&) const = default;

 private:
  std::vector<Tensor> tensors_;
};

// Throws ShapeError naming `context` when the two are not compatible.
void require_compatible(const ModelParams& a, const ModelParams& b, const char* context);

// Elementwise helpers built on the SIMD kernels.
void add_scaled(ModelParams& target, const ModelParams& source, double alpha);  // target += alpha*source
ModelParams difference(const ModelParams& a, const ModelParams& b);            // a - b
void scale(ModelParams& target, double alpha);
double squared_distance(const ModelParams& a, const ModelParams& b);
double max_abs_difference(const ModelParams& a, const ModelParams& b);

}  // namespace flsim
