#pragma once

#include <string>
#include <vector>

#include "symsurf/ioformats.hpp"
#include "symsurf/metrics.hpp"
#include "symsurf/model.hpp"

namespace symsurf {

struct TrainConfig {
    int iters = 20000;
    int rays_per_batch = 1024;
    SamplingConfig sampling{32, 32};
    LossWeights weights;
    ScheduleConfig schedule;  // total_iters is overwritten with `iters`
    std::uint64_t seed = 0;
    AblationSwitches ablation;
    int checkpoint_every = 5000;
    int validate_every = 2000;
    int log_every = 10;

    TrainConfig() { schedule.warmup_iters = 2500; }
    void validate() const;
};

struct TrainLogRow {
    int iter = 0;
    Scalar total = 0.0;
    Scalar colour = 0.0;   // weighted colour terms
    Scalar eikonal = 0.0;  // weighted eikonal terms
    Scalar lr = 0.0;       // ramped-group learning rate this step
};

struct TrainResult {
    Checkpoint checkpoint;  // final state, or last good state on abort
    std::vector<TrainLogRow> log;
    bool aborted = false;
    int final_iter = 0;
};

// Full model state as a checkpoint: parameters plus the folded symmetry
// frames and the iteration counter in the string map.
Checkpoint snapshot(const Model& model, int iter, std::uint64_t seed);
// Restores parameters and symmetry frames; throws on layout mismatch.
void restore(Model& model, const Checkpoint& checkpoint);
int checkpoint_iteration(const Checkpoint& checkpoint);

std::string train_log_csv(const std::vector<TrainLogRow>& log);

// Optimizes the model on the dataset's train split. When `out_dir` is
// non-empty, writes checkpoint.bin, train_log.csv, and periodic validation
// renders under it. A non-finite loss aborts with the last good checkpoint.
TrainResult train(Model& model, const Dataset& dataset, const TrainConfig& config,
                  const std::string& out_dir = {});

// Camera scaled to 1/factor resolution (intrinsics rescaled to match).
Camera downscale_camera(const Camera& camera, int factor);

// Renders every test frame and scores it against the dataset ground truth.
MetricsReport evaluate_model(const Model& model, const Dataset& dataset,
                             const SamplingConfig& sampling, std::uint64_t seed);

}  // namespace symsurf
