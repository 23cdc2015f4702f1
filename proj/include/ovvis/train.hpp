#pragma once
// Video-level training on sampled short clips: Hungarian-matched loss, Adam
// updates, step decay (x0.1) at the 0.9 and 0.95 fractions of the schedule.
// Deterministic for a fixed config and seed.

#include <ostream>

#include "ovvis/config.hpp"
#include "ovvis/model.hpp"
#include "ovvis/synthetic_world.hpp"

namespace ovvis {

struct TrainResult {
  std::vector<double> losses;  // one entry per step
};

// Trains in place. The classification vocabulary during training is the base
// categories only; novel rows are withheld until evaluation. Throws
// NumericError naming the step index if the loss goes non-finite.
TrainResult train_model(Model& model, const Dataset& data, const TrainConfig& cfg,
                        std::ostream* log = nullptr);

}  // namespace ovvis
