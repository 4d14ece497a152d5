#pragma once

#include <span>
#include <vector>

namespace hlab {

/// Discrete DDPM noise schedule.
///
/// Index t runs over 0..T; alpha_bar[0] == 1 and beta[0] is unused (0).
/// Constants are accumulated in double and kept in double; tensors are float.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta;       // size T+1
    std::vector<double> alpha_bar;  // size T+1
    std::vector<double> sigma;      // sqrt(1 - alpha_bar), size T+1

    double sqrt_alpha_bar(int t) const;
    double sqrt_one_minus(int t) const { return sigma.at(static_cast<std::size_t>(t)); }
};

inline constexpr int kDefaultSteps = 100;
inline constexpr double kDefaultBetaStart = 1e-3;
inline constexpr double kDefaultBetaEnd = 0.2;

/// Linear beta schedule from beta_start to beta_end over T steps.
/// Throws ScheduleError on 2 > T > 10000 or betas outside 0 < start <= end < 1.
NoiseSchedule make_schedule(int T = kDefaultSteps, double beta_start = kDefaultBetaStart,
                            double beta_end = kDefaultBetaEnd);

/// sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
std::vector<float> forward_diffuse(std::span<const float> x0, int t, std::span<const float> eps,
                                   const NoiseSchedule& sched);

/// Mean squared error over all elements.
double simple_loss(std::span<const float> eps_true, std::span<const float> eps_pred);

/// Inverts forward_diffuse given a noise estimate. Raw, not clamped.
std::vector<float> predict_x0(std::span<const float> x_t, std::span<const float> eps_hat, int t,
                              const NoiseSchedule& sched);

/// Deterministic (eta = 0) DDIM update from t to t_prev.
std::vector<float> ddim_step(std::span<const float> x_t, std::span<const float> eps_hat, int t,
                             int t_prev, const NoiseSchedule& sched);

/// Descending timesteps for a uniform-stride DDIM trajectory, ending at 0.
/// For T=100 and 50 steps this is 100, 98, ..., 2, 0 (51 entries).
std::vector<int> ddim_timesteps(int T, int steps);

/// [0,1] image values to the diffusion range [-1,1] and back.
inline float to_diffusion_range(float v) { return 2.0f * v - 1.0f; }
inline float to_unit_range(float v) { return 0.5f * (v + 1.0f); }

}  // namespace hlab
