#include "flsim/trainer.hpp"

#include <algorithm>

#include "flsim/error.hpp"

namespace flsim {

void LocalWorkSpec::validate() const {
  if (amount < 1) throw PreconditionError("local work amount must be >= 1");
  if (batch_size < 1) throw PreconditionError("batch size must be >= 1");
}

LocalTrainer::LocalTrainer(ModelArchitecture arch, OptimizerSpec optimizer, LocalWorkSpec work,
                           Rng rng)
    : arch_(std::move(arch)), optimizer_(optimizer), work_(work), rng_(std::move(rng)) {
  arch_.validate();
  optimizer_.validate();
  work_.validate();
}

FitStats LocalTrainer::fit(ModelParams& params, const DataView& data, const StepHooks& hooks) {
  return fit(params, data, work_, hooks);
}

FitStats LocalTrainer::fit(ModelParams& params, const DataView& data, const LocalWorkSpec& work,
                           const StepHooks& hooks) {
  work.validate();
  if (data.empty()) throw PreconditionError("client_fit: empty training set");
  FitStats stats;
  const std::size_t n = data.size();
  const std::size_t batch = std::min(work.batch_size, n);

  if (work.mode == LocalWorkSpec::Mode::kEpochs) {
    for (std::size_t epoch = 0; epoch < work.amount; ++epoch) {
      auto order = rng_.permutation(n);
      for (std::size_t start = 0; start < n; start += batch) {
        const std::size_t stop = std::min(start + batch, n);
        step(params, data, std::span<const std::size_t>(order).subspan(start, stop - start),
             hooks, stats);
      }
    }
  } else {
    if (step_order_.size() != n) {
      step_order_.clear();
      step_cursor_ = 0;
    }
    for (std::size_t s = 0; s < work.amount; ++s) {
      if (step_cursor_ >= step_order_.size()) {
        step_order_ = rng_.permutation(n);
        step_cursor_ = 0;
      }
      const std::size_t stop = std::min(step_cursor_ + batch, n);
      step(params, data,
           std::span<const std::size_t>(step_order_).subspan(step_cursor_, stop - step_cursor_),
           hooks, stats);
      step_cursor_ = stop;
    }
  }
  return stats;
}

void LocalTrainer::step(ModelParams& params, const DataView& data,
                        std::span<const std::size_t> positions, const StepHooks& hooks,
                        FitStats& stats) {
  data.gather(positions, batch_x_, batch_y_);
  LossAndGrad lg = loss_and_grad(arch_, params, batch_x_, batch_y_, hooks.regularizer);
  if (hooks.gradient_offset != nullptr) add_scaled(lg.gradient, *hooks.gradient_offset, 1.0);
  sgd_step(params, lg.gradient, optimizer_, velocity_);
  ++stats.steps;
  stats.last_batch_loss = lg.loss;
  if (hooks.after_step) hooks.after_step(stats.steps, params, lg.loss);
}

}  // namespace flsim
