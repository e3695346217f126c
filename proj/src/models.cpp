#include "flsim/models.hpp"

#include <algorithm>
#include <cmath>

#include "flsim/error.hpp"
#include "flsim/kernels.hpp"

namespace flsim {

std::string to_string(ModelKind kind) { return kind == ModelKind::kLinear ? "linear" : "mlp"; }

std::string to_string(Activation activation) {
  return activation == Activation::kRelu ? "relu" : "tanh";
}

ModelArchitecture ModelArchitecture::linear(std::size_t inputs, std::size_t classes) {
  return ModelArchitecture{ModelKind::kLinear, {inputs, classes}, Activation::kRelu};
}

ModelArchitecture ModelArchitecture::mlp(std::size_t inputs, std::vector<std::size_t> hidden,
                                         std::size_t classes, Activation activation) {
  ModelArchitecture arch{ModelKind::kMlp, {inputs}, activation};
  arch.layer_sizes.insert(arch.layer_sizes.end(), hidden.begin(), hidden.end());
  arch.layer_sizes.push_back(classes);
  return arch;
}

std::size_t ModelArchitecture::parameter_count() const {
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    total += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
  }
  return total;
}

void ModelArchitecture::validate() const {
  if (layer_sizes.size() < 2) throw ShapeError("architecture needs at least 2 layer sizes");
  if (std::any_of(layer_sizes.begin(), layer_sizes.end(), [](std::size_t s) { return s == 0; })) {
    throw ShapeError("architecture layer sizes must be positive");
  }
  if (kind == ModelKind::kLinear && layer_sizes.size() != 2) {
    throw ShapeError("a linear model has no hidden layers");
  }
}

void OptimizerSpec::validate() const {
  if (!(learning_rate >= 0.0)) throw PreconditionError("learning rate must be >= 0");
  if (!(weight_decay >= 0.0)) throw PreconditionError("weight decay must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw PreconditionError("momentum must be in [0, 1)");
}

namespace {

std::string weight_name(std::size_t layer) { return "layer" + std::to_string(layer) + ".weight"; }
std::string bias_name(std::size_t layer) { return "layer" + std::to_string(layer) + ".bias"; }

void check_params(const ModelArchitecture& arch, const ModelParams& params) {
  if (params.tensor_count() != 2 * arch.n_layers()) {
    throw ShapeError("parameter set has " + std::to_string(params.tensor_count()) +
                     " tensors; the architecture expects " + std::to_string(2 * arch.n_layers()));
  }
  for (std::size_t l = 0; l < arch.n_layers(); ++l) {
    const auto& w = params[2 * l];
    const auto& b = params[2 * l + 1];
    const std::vector<std::size_t> w_shape{arch.layer_sizes[l + 1], arch.layer_sizes[l]};
    if (w.shape != w_shape || b.shape != std::vector<std::size_t>{arch.layer_sizes[l + 1]}) {
      throw ShapeError("layer " + std::to_string(l) + " tensors do not match the architecture");
    }
  }
}

void check_inputs(const ModelArchitecture& arch, const Matrix& inputs) {
  if (inputs.cols != arch.n_inputs()) {
    throw ShapeError("input has " + std::to_string(inputs.cols) + " columns; model expects " +
                     std::to_string(arch.n_inputs()));
  }
}

// out(b, o) = bias(o) + <weight(o, :), in(b, :)>
void dense_forward(const Tensor& weight, const Tensor& bias, const Matrix& in, Matrix& out) {
  const std::size_t n_out = bias.size();
  const std::size_t n_in = in.cols;
  out = Matrix(in.rows, n_out);
  for (std::size_t b = 0; b < in.rows; ++b) {
    auto x = in.row(b);
    for (std::size_t o = 0; o < n_out; ++o) {
      std::span<const double> w_row(weight.values.data() + o * n_in, n_in);
      out(b, o) = bias.values[o] + kernels::dot(w_row, x);
    }
  }
}

void activate(Activation activation, Matrix& m) {
  for (auto& v : m.data) v = activation == Activation::kRelu ? std::max(v, 0.0) : std::tanh(v);
}

struct ForwardTrace {
  std::vector<Matrix> inputs;  // input to each layer
  Matrix logits;
};

ForwardTrace run_forward(const ModelArchitecture& arch, const ModelParams& params,
                         const Matrix& inputs) {
  arch.validate();
  check_params(arch, params);
  check_inputs(arch, inputs);
  ForwardTrace trace;
  trace.inputs.reserve(arch.n_layers());
  trace.inputs.push_back(inputs);
  for (std::size_t l = 0; l < arch.n_layers(); ++l) {
    Matrix out;
    dense_forward(params[2 * l], params[2 * l + 1], trace.inputs.back(), out);
    if (l + 1 < arch.n_layers()) {
      activate(arch.activation, out);
      trace.inputs.push_back(std::move(out));
    } else {
      trace.logits = std::move(out);
    }
  }
  return trace;
}

// Stable log-sum-exp of one row.
double log_sum_exp(std::span<const double> z) {
  const double peak = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double v : z) total += std::exp(v - peak);
  return peak + std::log(total);
}

void check_labels(const ModelArchitecture& arch, const Matrix& inputs, std::span<const int> labels) {
  if (labels.size() != inputs.rows) throw ShapeError("label count does not match batch size");
  if (labels.empty()) throw PreconditionError("loss on an empty batch");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= arch.n_classes()) {
      throw PreconditionError("label " + std::to_string(y) + " outside the model's classes");
    }
  }
}

}  // namespace

ModelParams init_params(const ModelArchitecture& arch, Rng& rng) {
  arch.validate();
  ModelParams params;
  for (std::size_t l = 0; l < arch.n_layers(); ++l) {
    const std::size_t fan_in = arch.layer_sizes[l];
    const std::size_t fan_out = arch.layer_sizes[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> weights(fan_in * fan_out);
    for (auto& w : weights) w = rng.uniform(-bound, bound);
    params.add(weight_name(l), {fan_out, fan_in}, std::move(weights));
    params.add_zeros(bias_name(l), {fan_out});
  }
  return params;
}

ModelParams init_params(const ModelArchitecture& arch, std::uint64_t seed) {
  Rng rng(seed);
  return init_params(arch, rng);
}

Matrix forward(const ModelArchitecture& arch, const ModelParams& params, const Matrix& inputs) {
  return run_forward(arch, params, inputs).logits;
}

RegularizerTerm proximal_term(const ModelParams& current, const ModelParams& reference,
                              double mu) {
  RegularizerTerm term;
  term.gradient = difference(current, reference);
  term.loss = 0.5 * mu * squared_distance(current, reference);
  scale(term.gradient, mu);
  return term;
}

LossAndGrad loss_and_grad(const ModelArchitecture& arch, const ModelParams& params,
                          const Matrix& inputs, std::span<const int> labels,
                          const Regularizer* regularizer) {
  ForwardTrace trace = run_forward(arch, params, inputs);
  check_labels(arch, inputs, labels);

  const std::size_t batch = inputs.rows;
  const std::size_t classes = arch.n_classes();
  const double inv_batch = 1.0 / static_cast<double>(batch);

  LossAndGrad out;
  out.gradient = params.zeros_like();

  // dL/dlogits = (softmax - onehot) / batch
  Matrix delta(batch, classes);
  for (std::size_t b = 0; b < batch; ++b) {
    auto z = trace.logits.row(b);
    const double lse = log_sum_exp(z);
    const auto y = static_cast<std::size_t>(labels[b]);
    out.loss += lse - z[y];
    auto d = delta.row(b);
    for (std::size_t c = 0; c < classes; ++c) d[c] = std::exp(z[c] - lse) * inv_batch;
    d[y] -= inv_batch;
  }
  out.loss *= inv_batch;

  for (std::size_t l = arch.n_layers(); l-- > 0;) {
    const Matrix& layer_in = trace.inputs[l];
    const Tensor& weight = params[2 * l];
    auto& grad_w = out.gradient[2 * l].values;
    auto& grad_b = out.gradient[2 * l + 1].values;
    const std::size_t n_in = layer_in.cols;
    const std::size_t n_out = delta.cols;

    Matrix delta_in;
    if (l > 0) delta_in = Matrix(batch, n_in);
    for (std::size_t b = 0; b < batch; ++b) {
      auto a = layer_in.row(b);
      auto d = delta.row(b);
      for (std::size_t o = 0; o < n_out; ++o) {
        if (d[o] == 0.0) continue;
        grad_b[o] += d[o];
        kernels::axpy(d[o], a, std::span<double>(grad_w.data() + o * n_in, n_in));
        if (l > 0) {
          kernels::axpy(d[o], std::span<const double>(weight.values.data() + o * n_in, n_in),
                        delta_in.row(b));
        }
      }
    }
    if (l > 0) {
      // layer_in holds post-activation values; derive the activation slope from them
      for (std::size_t i = 0; i < delta_in.data.size(); ++i) {
        const double a = layer_in.data[i];
        delta_in.data[i] *= arch.activation == Activation::kRelu ? (a > 0.0 ? 1.0 : 0.0)
                                                                 : 1.0 - a * a;
      }
      delta = std::move(delta_in);
    }
  }

  if (regularizer != nullptr && regularizer->term) {
    if (regularizer->reference == nullptr) throw PreconditionError("regularizer without reference");
    RegularizerTerm extra = regularizer->term(params, *regularizer->reference,
                                              regularizer->coefficient);
    out.loss += extra.loss;
    add_scaled(out.gradient, extra.gradient, 1.0);
  }
  return out;
}

double loss(const ModelArchitecture& arch, const ModelParams& params, const Matrix& inputs,
            std::span<const int> labels) {
  Matrix logits = forward(arch, params, inputs);
  check_labels(arch, inputs, labels);
  double total = 0.0;
  for (std::size_t b = 0; b < inputs.rows; ++b) {
    auto z = logits.row(b);
    total += log_sum_exp(z) - z[static_cast<std::size_t>(labels[b])];
  }
  return total / static_cast<double>(inputs.rows);
}

void sgd_step(ModelParams& params, const ModelParams& grad, const OptimizerSpec& opt,
              ModelParams& velocity) {
  require_compatible(params, grad, "sgd_step");
  if (velocity.empty()) velocity = params.zeros_like();
  require_compatible(params, velocity, "sgd_step velocity");
  const auto& table = kernels::active();
  for (std::size_t i = 0; i < params.tensor_count(); ++i) {
    table.sgd_update(params[i].values.data(), velocity[i].values.data(), grad[i].values.data(),
                     params[i].size(), opt.learning_rate, opt.momentum, opt.weight_decay);
  }
}

std::vector<int> argmax_rows(const Matrix& logits) {
  std::vector<int> out(logits.rows, 0);
  for (std::size_t b = 0; b < logits.rows; ++b) {
    auto z = logits.row(b);
    std::size_t best = 0;
    for (std::size_t c = 1; c < z.size(); ++c) {
      if (z[c] > z[best]) best = c;
    }
    out[b] = static_cast<int>(best);
  }
  return out;
}

std::vector<int> predict(const ModelArchitecture& arch, const ModelParams& params,
                         const Matrix& inputs) {
  return argmax_rows(forward(arch, params, inputs));
}

}  // namespace flsim
