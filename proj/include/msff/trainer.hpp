#pragma once

#include <string>
#include <vector>

#include "msff/checkpoint.hpp"
#include "msff/losses.hpp"
#include "msff/metrics.hpp"

namespace msff {

/// Raised when training hits a non-finite loss; the offending batch is dumped
/// next to the output directory first.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainRun {
  TrainState state;
  std::int64_t steps_run = 0;
  LossReport last;
  bool reached_target = false;
};

/// Full training loop: shuffled mini-batches of augmented patches, Eq.-style
/// weighted loss, Adam with a cosine-annealed learning rate. Writes
/// losses.csv ("epoch,step,l_tm,l_reg,total,lr") and checkpoints under
/// out_dir. Deterministic given (seed, config, dataset).
TrainRun train(const TrainConfig& cfg, const std::vector<Scene>& dataset,
               const std::string& out_dir);

/// Continues a loaded checkpoint; bitwise-equivalent to never having stopped.
TrainRun train_resume(TrainState state, const std::vector<Scene>& dataset,
                      const std::string& out_dir);

/// Pad-to-multiple inference and metrics over every scene with ground truth;
/// scenes without one are skipped with a warning.
MetricsReport evaluate(const MsffNet& net, const std::vector<Scene>& scenes, double mu = 5000.0,
                       double gamma = 2.2);

/// Deterministic per-epoch RNG stream derived from the run seed.
std::uint64_t epoch_stream_seed(std::uint64_t seed, int epoch);

}  // namespace msff
