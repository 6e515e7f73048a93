#pragma once

#include "hmkg/hmkg_model.hpp"
#include "hmkg/run_config.hpp"

#include <span>
#include <vector>

namespace hmkg::harness {

struct LossAndGradient {
  double loss = 0.0;          // mean NLL survival loss over the batch
  model::HmkgParams gradient; // same layout as the parameters
};

// Mean loss and its exact gradient over a set of slides; records need bins.
LossAndGradient loss_and_gradient(const model::HmkgParams& params, std::span<const FeatureBag* const> bags,
                                  std::span<const SurvivalRecord> records, double censor_alpha);

double mean_loss(const model::HmkgParams& params, std::span<const FeatureBag* const> bags,
                 std::span<const SurvivalRecord> records, double censor_alpha);

struct TrainLog {
  double initial_loss = 0.0;        // full training-set loss before the first step
  std::vector<double> epoch_loss;   // mean mini-batch loss seen during each epoch
  double final_loss = 0.0;          // full training-set loss after the last epoch
};

struct TrainResult {
  model::HmkgParams params;
  TrainLog log;
};

// Mini-batch training from a seeded initialisation with seeded batch order.
// Throws TrainingError naming the epoch if the loss becomes non-finite.
TrainResult train(const RunConfig& config, std::span<const FeatureBag* const> bags,
                  std::span<const SurvivalRecord> records);

}  // namespace hmkg::harness
