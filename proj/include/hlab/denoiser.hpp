#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hlab/diffusion.hpp"
#include "hlab/guidance.hpp"
#include "hlab/image.hpp"

namespace hlab {

/// Shape of the toy noise predictor.
///
/// Per-view input row, in order:
///   noisy view x_t^(n)            pixels()
///   sinusoidal time embedding     time_dim
///   pose embedding of the delta   4 (sin/cos elevation, sin/cos azimuth)
///   reference pathway  y W_ref    ref_dim   (zero when dropped)
///   context pathway mean(x_t) W_mv mv_dim   (zero when dropped)
///   presence flags                2
/// followed by `hidden_layers` SiLU layers of width `hidden` and a linear
/// output of pixels() values.
///
/// The network F is wrapped in a fixed, parameter-free preconditioning:
///   eps_hat = c_skip(t) x_t + c_out(t) F(c_in(t) x_t, ...)
/// (see Precond). x_t and the context mean enter F scaled by c_in.
struct DenoiserConfig {
    int image_size = 16;
    int views = 8;
    int hidden = 256;
    int hidden_layers = 2;
    int time_dim = 16;
    int ref_dim = 64;
    int mv_dim = 64;
    // Schedule the model is trained against; sampling reuses it.
    int T = kDefaultSteps;
    double beta_start = kDefaultBetaStart;
    double beta_end = kDefaultBetaEnd;

    static constexpr int pose_dim = 4;
    static constexpr int flag_dim = 2;

    int pixels() const { return image_size * image_size * 3; }
    int ref_offset() const { return pixels() + time_dim + pose_dim; }
    int mv_offset() const { return ref_offset() + ref_dim; }
    int flag_offset() const { return mv_offset() + mv_dim; }
    int input_width() const { return flag_offset() + flag_dim; }

    void validate() const;
    bool operator==(const DenoiserConfig&) const = default;
};

/// Spread assumed by the skip path: the residual a good coarse estimate
/// leaves, not the raw pixel spread. Small values hand fine detail at low
/// noise to the analytic skip term, which F cannot reproduce per pixel.
inline constexpr double kDataStd = 0.2;
/// Pixel spread of clean images in the diffusion range, used to scale the input.
inline constexpr double kInputStd = 0.5;

/// With a = sqrt(abar_t), s = sqrt(1 - abar_t), v = a^2 kDataStd^2 + s^2 and
/// u = a^2 kInputStd^2 + s^2:
///   c_in = a kInputStd / u, c_skip = s / v, c_out = a kDataStd / sqrt(v).
/// c_in x_t is the linear posterior mean of x0 over kInputStd, so the input
/// fades out as x_t stops carrying signal and F then works from the
/// conditions alone. c_skip x_t is the best linear noise estimate from x_t.
/// loss_weight = 1 / abar_t turns the noise error into x0 error weighted by
/// 1 + SNR, which keeps high-noise steps from vanishing from the objective.
struct Precond {
    double c_in = 1.0;
    double c_skip = 0.0;
    double c_out = 1.0;
    double loss_weight = 1.0;
};
Precond preconditioning(const NoiseSchedule& sched, int t);

/// Which conditions are present. Dropped conditions are replaced by the null
/// token: zeroed features plus a cleared presence flag.
struct ConditionMask {
    bool use_ref = true;
    bool use_mv = true;

    static constexpr ConditionMask full() { return {true, true}; }
    static constexpr ConditionMask mv_only() { return {false, true}; }
    static constexpr ConditionMask ref_only() { return {true, false}; }
    static constexpr ConditionMask uncond() { return {false, false}; }
    bool operator==(const ConditionMask&) const = default;
};

/// One named parameter matrix inside the flat parameter vector.
struct ParamBlock {
    std::string name;
    int rows = 0;
    int cols = 0;
    std::size_t offset = 0;
    std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

/// Block order: W_ref, W_mv, then (W, b) per layer. Biases are 1 x cols.
std::vector<ParamBlock> param_layout(const DenoiserConfig& cfg);

template <class S>
struct BasicParams {
    DenoiserConfig config;
    std::vector<ParamBlock> layout;
    std::vector<S> values;
    std::uint32_t version = 1;

    const S* block(std::size_t i) const { return values.data() + layout[i].offset; }
    S* block(std::size_t i) { return values.data() + layout[i].offset; }
    std::size_t layer_count() const { return (layout.size() - 2) / 2; }
    const ParamBlock& weight_block(std::size_t layer) const { return layout[2 + 2 * layer]; }
};

using DenoiserParams = BasicParams<float>;

/// Deterministic uniform fan-in initialization; biases start at zero.
DenoiserParams init_denoiser(const DenoiserConfig& cfg, std::uint64_t seed);

template <class To, class From>
BasicParams<To> cast_params(const BasicParams<From>& p) {
    BasicParams<To> out;
    out.config = p.config;
    out.layout = p.layout;
    out.version = p.version;
    out.values.assign(p.values.begin(), p.values.end());
    return out;
}

/// Sinusoidal embedding of an integer timestep.
template <class S>
void time_embedding(int t, const DenoiserConfig& cfg, S* out);
/// sin/cos of the pose delta (degrees).
template <class S>
void pose_embedding(const PoseDelta& d, S* out);

/// Noisy views of one instance, N x pixels() in the diffusion range.
struct NoisyViews {
    int views = 0;
    int pixels = 0;
    std::vector<float> values;

    std::span<const float> view(int n) const {
        return {values.data() + static_cast<std::size_t>(n) * pixels, static_cast<std::size_t>(pixels)};
    }
    std::span<float> view(int n) {
        return {values.data() + static_cast<std::size_t>(n) * pixels, static_cast<std::size_t>(pixels)};
    }
};

/// Predicted noise of view n at step t. `ref` is the input view in the
/// diffusion range; `poses` are the per-view deltas.
std::vector<float> denoise(const DenoiserParams& p, const NoisyViews& xt,
                           std::span<const PoseDelta> poses, int n, int t,
                           std::span<const float> ref, ConditionMask mask);

/// The four conditioning states of view n from one shared evaluation.
BranchOutputs eval_branches(const DenoiserParams& p, const NoisyViews& xt,
                            std::span<const PoseDelta> poses, int n, int t,
                            std::span<const float> ref);

/// Batched branch evaluation for the sampler. The reference features are
/// computed once; each call evaluates the requested masks for every view
/// against one snapshot of x_t. Results equal denoise() bitwise.
class BranchEvaluator {
public:
    BranchEvaluator(const DenoiserParams& p, std::span<const float> ref,
                    std::vector<PoseDelta> poses);

    /// out[n][m] = prediction for view n under masks[m].
    std::vector<std::vector<std::vector<float>>> evaluate(const NoisyViews& xt, int t,
                                                          std::span<const ConditionMask> masks) const;

private:
    const DenoiserParams& params_;
    std::vector<float> ref_features_;
    std::vector<PoseDelta> poses_;
};

/// Forward pass over explicit input rows (B x input_width); used by training
/// and gradient checks. Caches activations for backward().
template <class S>
struct ForwardCache {
    int rows = 0;
    std::vector<S> input;                 // B x input_width
    std::vector<std::vector<S>> pre;      // per layer, pre-activation
    std::vector<std::vector<S>> act;      // per hidden layer, post-activation
    std::vector<S> output;                // B x pixels
};

template <class S>
void forward_rows(const BasicParams<S>& p, ForwardCache<S>& cache);

/// Gradient of the loss w.r.t. every parameter, given dL/doutput, plus
/// dL/dinput restricted to the reference and context feature columns.
template <class S>
void backward_rows(const BasicParams<S>& p, const ForwardCache<S>& cache, std::span<const S> dout,
                   std::vector<S>& grad, std::vector<S>& dcond);

/// A training / probe example: one view of one noised scene.
template <class S>
struct ExampleBatch {
    int rows = 0;
    std::vector<S> ref;       // rows x pixels, clean input view
    std::vector<S> context;   // rows x pixels, c_in * mean over views of x_t
    std::vector<S> target;    // rows x pixels, true noise of the view
    std::vector<ConditionMask> masks;
    // Remaining input columns (c_in x_t of the view, time and pose embeddings).
    std::vector<S> head;      // rows x (pixels + time_dim + pose_dim)
    std::vector<S> xt;        // rows x pixels, unscaled x_t of the view
    std::vector<S> c_skip;    // per row
    std::vector<S> c_out;     // per row
    std::vector<S> weight;    // per row loss weight; empty means 1
};

/// Mean squared error of the batch and, if `grad` is non-null, its gradient.
/// The loss is accumulated in long double when S is long double.
template <class S>
long double batch_loss(const BasicParams<S>& p, const ExampleBatch<S>& batch, std::vector<S>* grad);

}  // namespace hlab
