#include "hlab/diffusion.hpp"

#include <cmath>
#include <string>

#include "hlab/errors.hpp"

namespace hlab {

namespace {

void check_t(const NoiseSchedule& sched, int t, const char* what) {
    if (t < 0 || t > sched.T) {
        throw IndexError(std::string(what) + ": timestep " + std::to_string(t) +
                         " outside [0, " + std::to_string(sched.T) + "]");
    }
}

}  // namespace

double NoiseSchedule::sqrt_alpha_bar(int t) const {
    return std::sqrt(alpha_bar.at(static_cast<std::size_t>(t)));
}

NoiseSchedule make_schedule(int T, double beta_start, double beta_end) {
    if (T < 2 || T > 10000) {
        throw ScheduleError("make_schedule: T must lie in [2, 10000], got " + std::to_string(T));
    }
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
        throw ScheduleError("make_schedule: need 0 < beta_start <= beta_end < 1");
    }
    NoiseSchedule s;
    s.T = T;
    s.beta.assign(static_cast<std::size_t>(T) + 1, 0.0);
    s.alpha_bar.assign(static_cast<std::size_t>(T) + 1, 1.0);
    s.sigma.assign(static_cast<std::size_t>(T) + 1, 0.0);
    for (int t = 1; t <= T; ++t) {
        const double frac = static_cast<double>(t - 1) / static_cast<double>(T - 1);
        const auto i = static_cast<std::size_t>(t);
        s.beta[i] = beta_start + (beta_end - beta_start) * frac;
        s.alpha_bar[i] = s.alpha_bar[i - 1] * (1.0 - s.beta[i]);
        s.sigma[i] = std::sqrt(1.0 - s.alpha_bar[i]);
    }
    return s;
}

std::vector<float> forward_diffuse(std::span<const float> x0, int t, std::span<const float> eps,
                                   const NoiseSchedule& sched) {
    require_same_size(x0.size(), eps.size(), "forward_diffuse");
    check_t(sched, t, "forward_diffuse");
    const double a = sched.sqrt_alpha_bar(t);
    const double b = sched.sqrt_one_minus(t);
    std::vector<float> out(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) out[i] = static_cast<float>(a * x0[i] + b * eps[i]);
    return out;
}

double simple_loss(std::span<const float> eps_true, std::span<const float> eps_pred) {
    require_same_size(eps_true.size(), eps_pred.size(), "simple_loss");
    if (eps_true.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < eps_true.size(); ++i) {
        const double d = static_cast<double>(eps_true[i]) - eps_pred[i];
        acc += d * d;
    }
    return acc / static_cast<double>(eps_true.size());
}

std::vector<float> predict_x0(std::span<const float> x_t, std::span<const float> eps_hat, int t,
                              const NoiseSchedule& sched) {
    require_same_size(x_t.size(), eps_hat.size(), "predict_x0");
    check_t(sched, t, "predict_x0");
    if (t == 0) throw IndexError("predict_x0: t must be >= 1");
    const double a = sched.sqrt_alpha_bar(t);
    const double b = sched.sqrt_one_minus(t);
    std::vector<float> out(x_t.size());
    for (std::size_t i = 0; i < x_t.size(); ++i) out[i] = static_cast<float>((x_t[i] - b * eps_hat[i]) / a);
    return out;
}

std::vector<float> ddim_step(std::span<const float> x_t, std::span<const float> eps_hat, int t,
                             int t_prev, const NoiseSchedule& sched) {
    check_t(sched, t, "ddim_step");
    check_t(sched, t_prev, "ddim_step");
    if (!(t_prev < t)) {
        throw IndexError("ddim_step: need t_prev < t, got t=" + std::to_string(t) +
                         " t_prev=" + std::to_string(t_prev));
    }
    require_same_size(x_t.size(), eps_hat.size(), "ddim_step");
    const double a = sched.sqrt_alpha_bar(t);
    const double b = sched.sqrt_one_minus(t);
    const double a_prev = sched.sqrt_alpha_bar(t_prev);
    const double b_prev = sched.sqrt_one_minus(t_prev);
    std::vector<float> out(x_t.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x0 = (x_t[i] - b * eps_hat[i]) / a;
        out[i] = static_cast<float>(a_prev * x0 + b_prev * eps_hat[i]);
    }
    return out;
}

std::vector<int> ddim_timesteps(int T, int steps) {
    if (steps < 1 || steps > T) {
        throw ConfigError("ddim_timesteps: steps must lie in [1, T]");
    }
    std::vector<int> ts;
    ts.reserve(static_cast<std::size_t>(steps) + 1);
    for (int i = steps; i >= 0; --i) {
        // Integer rounding of i*T/steps; exact for divisors of T.
        ts.push_back(static_cast<int>((static_cast<long long>(i) * T + steps / 2) / steps));
    }
    return ts;
}

}  // namespace hlab
