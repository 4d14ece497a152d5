#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "hlab/denoiser.hpp"
#include "hlab/diffusion.hpp"
#include "hlab/rng.hpp"

namespace hlab {

struct TrainConfig {
    int epochs = 1500;
    int batch_size = 64;
    double learning_rate = 1e-3;
    double p_drop = 0.1;  // per condition, independently
    std::uint64_t seed = 0;

    void validate() const;
};

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step = 0;
    std::vector<float> m;
    std::vector<float> v;
};

/// One scene prepared for training: N clean views in the diffusion range.
struct TrainScene {
    std::vector<float> views;  // N x pixels
};

/// One example: view `n` of scene `scene`, noised at `t` with per-view noise
/// `eps` (N x pixels).
struct TrainItem {
    int scene = 0;
    int n = 0;
    int t = 1;
    std::vector<float> eps;
};

/// Assembles the batch tensors for a set of items and masks.
ExampleBatch<float> build_batch(const DenoiserConfig& cfg, const NoiseSchedule& sched,
                                std::span<const TrainScene> scenes, std::span<const PoseDelta> poses,
                                std::span<const TrainItem> items, std::span<const ConditionMask> masks);

/// Draws masks (each condition dropped with probability p_drop), evaluates
/// the multi-view loss on the batch and applies one Adam update.
/// Throws NumericError on a non-finite loss.
double train_step(DenoiserParams& p, AdamState& opt, const NoiseSchedule& sched,
                  std::span<const TrainScene> scenes, std::span<const PoseDelta> poses,
                  std::span<const TrainItem> items, const TrainConfig& cfg, Stream& rng);

/// Samples step `step`'s items from the streams keyed by (seed, "batch", step).
std::vector<TrainItem> sample_items(const DenoiserConfig& cfg, int scene_count, int batch_size,
                                    std::uint64_t seed, std::int64_t step);

struct TrainLogRecord {
    std::int64_t step = 0;
    double loss = 0.0;
    std::uint64_t seed = 0;
};

/// Full training loop. steps = epochs * ceil(scenes / batch).
/// `on_step` sees every record (loss of the batch before its update).
std::vector<double> train(DenoiserParams& p, std::span<const TrainScene> scenes,
                          std::span<const PoseDelta> poses, const TrainConfig& cfg,
                          const std::function<void(const TrainLogRecord&)>& on_step = {},
                          std::int64_t max_steps = -1);

std::int64_t steps_for(const TrainConfig& cfg, int scene_count);

// ------------------------------------------------------------ gradient check

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t coordinates = 0;
};

/// Compares analytic gradients of the batch loss (double) against central
/// finite differences evaluated in long double, over `coords` parameter
/// coordinates drawn uniformly without replacement. Relative error per coordinate is
/// |a - n| / max(|a|, |n|, floor).
GradCheckResult grad_check(const BasicParams<double>& p, const ExampleBatch<double>& probe,
                           std::size_t coords = 256, double h = 1e-5, std::uint64_t seed = 0,
                           double floor = 1e-7);

/// A random probe batch with every condition present. x_t is built from a
/// random x0 and the target noise, as in training.
ExampleBatch<double> random_probe(const DenoiserConfig& cfg, int rows, std::uint64_t seed);

}  // namespace hlab
