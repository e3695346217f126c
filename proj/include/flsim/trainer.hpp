#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "flsim/data.hpp"
#include "flsim/models.hpp"
#include "flsim/rng.hpp"

namespace flsim {

struct LocalWorkSpec {
  enum class Mode { kEpochs, kSteps };

  Mode mode = Mode::kEpochs;
  std::size_t amount = 1;
  std::size_t batch_size = 32;

  static LocalWorkSpec epochs(std::size_t n, std::size_t batch) {
    return {Mode::kEpochs, n, batch};
  }
  static LocalWorkSpec steps(std::size_t n, std::size_t batch) { return {Mode::kSteps, n, batch}; }

  void validate() const;
};

// Hooks that algorithms use to alter the local objective or the update.
struct StepHooks {
  const Regularizer* regularizer = nullptr;
  // Added to every mini-batch gradient before the optimizer step.
  const ModelParams* gradient_offset = nullptr;
  std::function<void(std::size_t step, const ModelParams& params, double batch_loss)> after_step;
};

struct FitStats {
  std::size_t steps = 0;
  double last_batch_loss = 0.0;
};

// Mini-batch SGD over a data view. Epoch mode reshuffles at the start of
// every epoch and keeps the trailing partial batch. Step mode walks one
// shuffled order and reshuffles when it runs out; the position persists
// across calls, so n calls of one step equal one call of n steps.
class LocalTrainer {
 public:
  LocalTrainer(ModelArchitecture arch, OptimizerSpec optimizer, LocalWorkSpec work, Rng rng);

  FitStats fit(ModelParams& params, const DataView& data, const StepHooks& hooks = {});
  FitStats fit(ModelParams& params, const DataView& data, const LocalWorkSpec& work,
               const StepHooks& hooks = {});

  // Clears optimizer state (momentum buffers).
  void reset_optimizer() { velocity_ = ModelParams(); }

  const ModelArchitecture& architecture() const { return arch_; }
  const OptimizerSpec& optimizer() const { return optimizer_; }
  const LocalWorkSpec& work() const { return work_; }

 private:
  void step(ModelParams& params, const DataView& data, std::span<const std::size_t> positions,
            const StepHooks& hooks, FitStats& stats);

  ModelArchitecture arch_;
  OptimizerSpec optimizer_;
  LocalWorkSpec work_;
  Rng rng_;
  ModelParams velocity_;
  std::vector<std::size_t> step_order_;
  std::size_t step_cursor_ = 0;
  Matrix batch_x_;
  std::vector<int> batch_y_;
};

}  // namespace flsim
