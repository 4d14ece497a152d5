#pragma once

#include <span>
#include <string>
#include <vector>

namespace hlab {

enum class GuidanceMode { none, baseline, harmony };

std::string to_string(GuidanceMode mode);
GuidanceMode parse_guidance_mode(const std::string& name);

/// Guidance scales. `s` drives the joint baseline; `s1` (consistency) and
/// `s2` (diversity) drive the decomposed rule. Scales not used by `mode` are
/// carried but ignored.
struct GuidanceConfig {
    GuidanceMode mode = GuidanceMode::harmony;
    double s = 1.0;
    double s1 = 2.0;
    double s2 = 1.0;

    /// Throws ConfigError on negative or non-finite scales used by `mode`.
    void validate() const;

    /// Number of denoiser branches this mode needs per view.
    int branch_count() const;
};

/// Noise predictions for one view under the four conditioning states.
struct BranchOutputs {
    std::vector<float> eps_full;    // reference + multi-view context
    std::vector<float> eps_mv;      // multi-view context only
    std::vector<float> eps_ref;     // reference only
    std::vector<float> eps_uncond;  // neither

    void check_shapes() const;
};

/// eps_cond + s (eps_cond - eps_uncond).
std::vector<float> cfg_combine(std::span<const float> eps_cond, std::span<const float> eps_uncond,
                               double s);

/// eps_full + s1 (eps_full - eps_mv) + s2 (eps_full - eps_ref).
std::vector<float> harmony_combine(const BranchOutputs& b, double s1, double s2);

/// Score of the implicit classifier for the reference condition:
/// -(eps_full - eps_mv) / sigma_t.
std::vector<float> implicit_score_ref(const BranchOutputs& b, double sigma_t);

/// Score of the implicit classifier for the multi-view condition:
/// -(eps_full - eps_ref) / sigma_t.
std::vector<float> implicit_score_mv(const BranchOutputs& b, double sigma_t);

/// Dispatches on cfg.mode. Branches not needed by the mode may be empty.
std::vector<float> guided_eps(const GuidanceConfig& cfg, const BranchOutputs& b);

}  // namespace hlab
