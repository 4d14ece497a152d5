#include "hlab/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "hlab/errors.hpp"

namespace hlab {

std::uint64_t instance_seed(std::uint64_t run_seed, std::uint64_t input_id, std::uint64_t k) {
    return hash_combine(hash_combine(run_seed, input_id), k);
}

std::vector<ConditionMask> branch_masks(GuidanceMode mode) {
    switch (mode) {
        case GuidanceMode::none: return {ConditionMask::full()};
        case GuidanceMode::baseline: return {ConditionMask::full(), ConditionMask::uncond()};
        case GuidanceMode::harmony:
            return {ConditionMask::full(), ConditionMask::mv_only(), ConditionMask::ref_only()};
    }
    return {ConditionMask::full()};
}

// Keeps a guided or poorly conditioned step from feeding the network inputs
// far outside anything it was trained on.
std::vector<float> clipped_eps(std::span<const float> x_t, const std::vector<float>& eps, int t,
                               const NoiseSchedule& sched) {
    const auto x0 = predict_x0(x_t, eps, t, sched);
    const double a = sched.sqrt_alpha_bar(t);
    const double s = sched.sqrt_one_minus(t);
    std::vector<float> out(eps.size());
    for (std::size_t k = 0; k < out.size(); ++k) {
        const double c = std::clamp(static_cast<double>(x0[k]), -1.0, 1.0);
        out[k] = static_cast<float>((x_t[k] - a * c) / s);
    }
    return out;
}

ViewSet sample_viewset(const DenoiserParams& p, const Image& ref, const SampleOptions& opt,
                       Stream rng) {
    opt.guidance.validate();
    const auto& c = p.config;
    if (ref.height != c.image_size || ref.width != c.image_size) {
        throw ShapeError("sample_viewset: reference image does not match the model size");
    }
    const auto sched = make_schedule(c.T, c.beta_start, c.beta_end);
    const auto ts = ddim_timesteps(c.T, opt.steps);

    std::vector<Image> placeholder(static_cast<std::size_t>(c.views), Image(c.image_size, c.image_size));
    ViewSet out = ViewSet::from_views(std::move(placeholder));

    NoisyViews x;
    x.views = c.views;
    x.pixels = c.pixels();
    x.values.resize(static_cast<std::size_t>(c.views) * c.pixels());
    for (auto& v : x.values) v = static_cast<float>(rng.normal());

    const BranchEvaluator eval(p, to_diffusion(ref), out.deltas);
    const auto masks = branch_masks(opt.guidance.mode);

    for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
        const int t = ts[i];
        const int t_prev = ts[i + 1];
        auto outs = eval.evaluate(x, t, masks);
        NoisyViews next = x;
        for (int n = 0; n < c.views; ++n) {
            auto& o = outs[static_cast<std::size_t>(n)];
            BranchOutputs b;
            b.eps_full = std::move(o[0]);
            if (opt.guidance.mode == GuidanceMode::baseline) b.eps_uncond = std::move(o[1]);
            if (opt.guidance.mode == GuidanceMode::harmony) {
                b.eps_mv = std::move(o[1]);
                b.eps_ref = std::move(o[2]);
            }
            const auto eps = clipped_eps(x.view(n), guided_eps(opt.guidance, b), t, sched);
            const auto stepped = ddim_step(x.view(n), eps, t, t_prev, sched);
            for (std::size_t k = 0; k < stepped.size(); ++k) {
                if (!std::isfinite(stepped[k])) {
                    throw NumericError("sample_viewset: non-finite value at DDIM step " + std::to_string(i) +
                                       " (t=" + std::to_string(t) + ", view " + std::to_string(n) + ")");
                }
            }
            std::copy(stepped.begin(), stepped.end(), next.view(n).begin());
        }
        x = std::move(next);
    }

    for (int n = 0; n < c.views; ++n) {
        out.views[static_cast<std::size_t>(n)] = from_diffusion(x.view(n), c.image_size, c.image_size);
    }
    return out;
}

}  // namespace hlab
