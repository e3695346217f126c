#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "flsim/matrix.hpp"
#include "flsim/params.hpp"
#include "flsim/rng.hpp"

namespace flsim {

enum class ModelKind { kLinear, kMlp };
enum class Activation { kRelu, kTanh };

std::string to_string(ModelKind kind);
std::string to_string(Activation activation);

struct ModelArchitecture {
  ModelKind kind = ModelKind::kLinear;
  std::vector<std::size_t> layer_sizes;  // input, hidden..., output
  Activation activation = Activation::kRelu;

  static ModelArchitecture linear(std::size_t inputs, std::size_t classes);
  static ModelArchitecture mlp(std::size_t inputs, std::vector<std::size_t> hidden,
                               std::size_t classes, Activation activation = Activation::kRelu);

  std::size_t n_inputs() const { return layer_sizes.front(); }
  std::size_t n_classes() const { return layer_sizes.back(); }
  std::size_t n_layers() const { return layer_sizes.size() - 1; }
  std::size_t parameter_count() const;

  void validate() const;
};

struct OptimizerSpec {
  double learning_rate = 0.1;
  double weight_decay = 0.0;
  double momentum = 0.0;

  void validate() const;
};

// Glorot-uniform weights, zero biases. Tensors are named "layer<i>.weight"
// with shape (out, in) and "layer<i>.bias" with shape (out).
ModelParams init_params(const ModelArchitecture& arch, Rng& rng);
ModelParams init_params(const ModelArchitecture& arch, std::uint64_t seed);

Matrix forward(const ModelArchitecture& arch, const ModelParams& params, const Matrix& inputs);

// Optional extra objective term. The callback receives the current
// parameters, a fixed reference point and a coefficient, and returns the
// loss add-on together with its gradient.
struct RegularizerTerm {
  double loss = 0.0;
  ModelParams gradient;
};

using RegularizerFn = std::function<RegularizerTerm(
    const ModelParams& current, const ModelParams& reference, double coefficient)>;

struct Regularizer {
  RegularizerFn term;
  const ModelParams* reference = nullptr;
  double coefficient = 0.0;
};

// (mu / 2) * ||current - reference||^2 and its gradient mu * (current - reference).
RegularizerTerm proximal_term(const ModelParams& current, const ModelParams& reference, double mu);

struct LossAndGrad {
  double loss = 0.0;
  ModelParams gradient;
};

// Mean cross-entropy over the batch and its exact gradient.
LossAndGrad loss_and_grad(const ModelArchitecture& arch, const ModelParams& params,
                          const Matrix& inputs, std::span<const int> labels,
                          const Regularizer* regularizer = nullptr);

double loss(const ModelArchitecture& arch, const ModelParams& params, const Matrix& inputs,
            std::span<const int> labels);

// velocity = momentum * velocity + grad + weight_decay * params
// params  -= learning_rate * velocity
void sgd_step(ModelParams& params, const ModelParams& grad, const OptimizerSpec& opt,
              ModelParams& velocity);

// Argmax of the logits; ties go to the lowest class index.
std::vector<int> predict(const ModelArchitecture& arch, const ModelParams& params,
                         const Matrix& inputs);
std::vector<int> argmax_rows(const Matrix& logits);

}  // namespace flsim
