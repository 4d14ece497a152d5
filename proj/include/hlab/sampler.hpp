#pragma once

#include <cstdint>

#include "hlab/denoiser.hpp"
#include "hlab/guidance.hpp"
#include "hlab/image.hpp"
#include "hlab/rng.hpp"

namespace hlab {

struct SampleOptions {
    GuidanceConfig guidance;
    int steps = 50;
};

/// Seed of instance k of input `input_id`:
/// hash_combine(hash_combine(run_seed, input_id), k).
std::uint64_t instance_seed(std::uint64_t run_seed, std::uint64_t input_id, std::uint64_t k);

/// Masks the guidance mode needs, in the order guided_eps expects.
std::vector<ConditionMask> branch_masks(GuidanceMode mode);

/// Noise estimate whose implied x0 (predict_x0) is the original x0 estimate
/// clipped to [-1, 1]. Unchanged where that estimate is already in range.
std::vector<float> clipped_eps(std::span<const float> x_t, const std::vector<float>& eps, int t,
                               const NoiseSchedule& sched);

/// Jointly denoises N views from x_T ~ N(0, I) drawn from `rng`. Every DDIM
/// step evaluates all branches of all views against the same x_t snapshot,
/// combines them per the guidance config, clips the implied x0 estimate to
/// [-1, 1] (clipped_eps) and then advances every view.
/// Returns the t = 0 views in [0,1], clamped. Throws NumericError with the
/// step on non-finite intermediates.
ViewSet sample_viewset(const DenoiserParams& p, const Image& ref, const SampleOptions& opt,
                       Stream rng);

}  // namespace hlab
