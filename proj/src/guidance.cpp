#include "hlab/guidance.hpp"

#include <cmath>

#include "hlab/errors.hpp"

namespace hlab {

std::string to_string(GuidanceMode mode) {
    switch (mode) {
        case GuidanceMode::none: return "none";
        case GuidanceMode::baseline: return "baseline";
        case GuidanceMode::harmony: return "harmony";
    }
    return "unknown";
}

GuidanceMode parse_guidance_mode(const std::string& name) {
    if (name == "none") return GuidanceMode::none;
    if (name == "baseline") return GuidanceMode::baseline;
    if (name == "harmony") return GuidanceMode::harmony;
    throw ConfigError("unknown guidance mode '" + name + "' (expected none|baseline|harmony)");
}

namespace {

void check_scale(double v, const char* name) {
    if (!std::isfinite(v) || v < 0.0) {
        throw ConfigError(std::string("guidance scale ") + name + " must be finite and >= 0");
    }
}

void check_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw ConfigError(std::string(what) + ": non-finite scale");
}

}  // namespace

void GuidanceConfig::validate() const {
    switch (mode) {
        case GuidanceMode::none: break;
        case GuidanceMode::baseline: check_scale(s, "s"); break;
        case GuidanceMode::harmony:
            check_scale(s1, "s1");
            check_scale(s2, "s2");
            break;
    }
}

int GuidanceConfig::branch_count() const {
    switch (mode) {
        case GuidanceMode::none: return 1;
        case GuidanceMode::baseline: return 2;
        case GuidanceMode::harmony: return 3;
    }
    return 1;
}

void BranchOutputs::check_shapes() const {
    require_same_size(eps_full.size(), eps_mv.size(), "BranchOutputs");
    require_same_size(eps_full.size(), eps_ref.size(), "BranchOutputs");
    require_same_size(eps_full.size(), eps_uncond.size(), "BranchOutputs");
}

std::vector<float> cfg_combine(std::span<const float> eps_cond, std::span<const float> eps_uncond,
                               double s) {
    require_same_size(eps_cond.size(), eps_uncond.size(), "cfg_combine");
    check_finite(s, "cfg_combine");
    // Accumulate in double, round once.
    std::vector<float> out(eps_cond.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double c = eps_cond[i];
        out[i] = static_cast<float>(c + s * (c - eps_uncond[i]));
    }
    return out;
}

std::vector<float> harmony_combine(const BranchOutputs& b, double s1, double s2) {
    require_same_size(b.eps_full.size(), b.eps_mv.size(), "harmony_combine");
    require_same_size(b.eps_full.size(), b.eps_ref.size(), "harmony_combine");
    check_finite(s1, "harmony_combine");
    check_finite(s2, "harmony_combine");
    std::vector<float> out(b.eps_full.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double f = b.eps_full[i];
        out[i] = static_cast<float>(f + s1 * (f - b.eps_mv[i]) + s2 * (f - b.eps_ref[i]));
    }
    return out;
}

namespace {

std::vector<float> implicit_score(std::span<const float> full, std::span<const float> partial,
                                  double sigma_t, const char* what) {
    require_same_size(full.size(), partial.size(), what);
    if (!(sigma_t > 0.0)) throw ConfigError(std::string(what) + ": sigma_t must be > 0");
    const double inv = -1.0 / sigma_t;
    std::vector<float> out(full.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<float>(inv * (static_cast<double>(full[i]) - partial[i]));
    }
    return out;
}

}  // namespace

std::vector<float> implicit_score_ref(const BranchOutputs& b, double sigma_t) {
    return implicit_score(b.eps_full, b.eps_mv, sigma_t, "implicit_score_ref");
}

std::vector<float> implicit_score_mv(const BranchOutputs& b, double sigma_t) {
    return implicit_score(b.eps_full, b.eps_ref, sigma_t, "implicit_score_mv");
}

std::vector<float> guided_eps(const GuidanceConfig& cfg, const BranchOutputs& b) {
    switch (cfg.mode) {
        case GuidanceMode::none: return b.eps_full;
        case GuidanceMode::baseline: return cfg_combine(b.eps_full, b.eps_uncond, cfg.s);
        case GuidanceMode::harmony: return harmony_combine(b, cfg.s1, cfg.s2);
    }
    return b.eps_full;
}

}  // namespace hlab
