#include "hlab/denoiser.hpp"

#include <cmath>
#include <numbers>
#include <type_traits>

#include "hlab/dense.hpp"
#include "hlab/errors.hpp"
#include "hlab/rng.hpp"

namespace hlab {

void DenoiserConfig::validate() const {
    if (image_size < 1 || views < 2 || hidden < 1 || hidden_layers < 0 || time_dim < 2 ||
        time_dim % 2 != 0 || ref_dim < 1 || mv_dim < 1) {
        throw ConfigError("DenoiserConfig: inconsistent sizes");
    }
    if (T < 2) throw ConfigError("DenoiserConfig: T must be >= 2");
}

std::vector<ParamBlock> param_layout(const DenoiserConfig& cfg) {
    cfg.validate();
    std::vector<ParamBlock> blocks;
    std::size_t offset = 0;
    auto add = [&](std::string name, int rows, int cols) {
        blocks.push_back({std::move(name), rows, cols, offset});
        offset += blocks.back().size();
    };
    add("ref.W", cfg.pixels(), cfg.ref_dim);
    add("mv.W", cfg.pixels(), cfg.mv_dim);
    int in = cfg.input_width();
    for (int l = 0; l < cfg.hidden_layers; ++l) {
        add("layer" + std::to_string(l) + ".W", in, cfg.hidden);
        add("layer" + std::to_string(l) + ".b", 1, cfg.hidden);
        in = cfg.hidden;
    }
    add("out.W", in, cfg.pixels());
    add("out.b", 1, cfg.pixels());
    return blocks;
}

DenoiserParams init_denoiser(const DenoiserConfig& cfg, std::uint64_t seed) {
    DenoiserParams p;
    p.config = cfg;
    p.layout = param_layout(cfg);
    const auto& last = p.layout.back();
    p.values.assign(last.offset + last.size(), 0.0f);
    for (std::size_t i = 0; i < p.layout.size(); ++i) {
        const auto& b = p.layout[i];
        if (b.rows == 1 && b.name.ends_with(".b")) continue;
        Stream rng(seed, "init", i);
        const double bound = 1.0 / std::sqrt(static_cast<double>(b.rows));
        float* w = p.block(i);
        for (std::size_t k = 0; k < b.size(); ++k) {
            w[k] = static_cast<float>((2.0 * rng.uniform() - 1.0) * bound);
        }
    }
    return p;
}

template <class S>
void time_embedding(int t, const DenoiserConfig& cfg, S* out) {
    const int half = cfg.time_dim / 2;
    const double pos = static_cast<double>(t) * 1000.0 / cfg.T;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / half);
        out[i] = static_cast<S>(std::sin(pos * freq));
        out[half + i] = static_cast<S>(std::cos(pos * freq));
    }
}

template <class S>
void pose_embedding(const PoseDelta& d, S* out) {
    const double el = d.elevation * std::numbers::pi / 180.0;
    const double az = d.azimuth * std::numbers::pi / 180.0;
    out[0] = static_cast<S>(std::sin(el));
    out[1] = static_cast<S>(std::cos(el));
    out[2] = static_cast<S>(std::sin(az));
    out[3] = static_cast<S>(std::cos(az));
}

template void time_embedding<float>(int, const DenoiserConfig&, float*);
template void time_embedding<double>(int, const DenoiserConfig&, double*);
template void time_embedding<long double>(int, const DenoiserConfig&, long double*);
template void pose_embedding<float>(const PoseDelta&, float*);
template void pose_embedding<double>(const PoseDelta&, double*);
template void pose_embedding<long double>(const PoseDelta&, long double*);

// ------------------------------------------------------------ inference

namespace {

void check_inputs(const DenoiserParams& p, const NoisyViews& xt, std::span<const PoseDelta> poses,
                  int t) {
    const auto& c = p.config;
    if (xt.views != c.views || xt.pixels != c.pixels()) {
        throw ShapeError("denoiser: noisy views do not match the model configuration");
    }
    require_same_size(xt.values.size(), static_cast<std::size_t>(c.views) * c.pixels(), "denoiser views");
    require_same_size(poses.size(), static_cast<std::size_t>(c.views), "denoiser poses");
    if (t < 1 || t > c.T) {
        throw IndexError("denoiser: timestep " + std::to_string(t) + " outside [1, " + std::to_string(c.T) + "]");
    }
}

std::vector<float> reference_features(const DenoiserParams& p, std::span<const float> ref) {
    const auto& c = p.config;
    require_same_size(ref.size(), static_cast<std::size_t>(c.pixels()), "denoiser reference");
    std::vector<float> f(static_cast<std::size_t>(c.ref_dim), 0.0f);
    dense::accumulate(ref.data(), 1, c.pixels(), 0, p.block(0), 0, c.pixels(), c.ref_dim, f.data());
    return f;
}

std::vector<float> context_mean(const NoisyViews& xt, float c_in) {
    std::vector<float> ctx(static_cast<std::size_t>(xt.pixels), 0.0f);
    for (int m = 0; m < xt.views; ++m) {
        const auto v = xt.view(m);
        for (int i = 0; i < xt.pixels; ++i) ctx[static_cast<std::size_t>(i)] += v[static_cast<std::size_t>(i)];
    }
    const auto n = static_cast<float>(xt.views);
    for (auto& v : ctx) v = c_in * (v / n);
    return ctx;
}

// Evaluates every (view, mask) pair. Rows share the first-layer partial sum
// over the view-specific head columns; the accumulation order per row is the
// same as a full pass over the assembled input row.
std::vector<std::vector<std::vector<float>>> run_branches(const DenoiserParams& p,
                                                          const NoisyViews& xt,
                                                          std::span<const PoseDelta> poses, int t,
                                                          std::span<const float> ref_feat,
                                                          std::span<const int> views,
                                                          std::span<const ConditionMask> masks) {
    const auto& c = p.config;
    const int pix = c.pixels();
    const int head = c.ref_offset();
    const int in = c.input_width();
    const int layers = static_cast<int>(p.layer_count());
    const int out1 = p.weight_block(0).cols;
    const float* W1 = p.block(2);
    const float* b1 = p.block(3);

    const auto pc = preconditioning(make_schedule(c.T, c.beta_start, c.beta_end), t);
    const auto c_in = static_cast<float>(pc.c_in);
    const auto ctx = context_mean(xt, c_in);
    std::vector<float> mv_feat(static_cast<std::size_t>(c.mv_dim), 0.0f);
    dense::accumulate(ctx.data(), 1, pix, 0, p.block(1), 0, pix, c.mv_dim, mv_feat.data());

    std::vector<float> temb(static_cast<std::size_t>(c.time_dim));
    time_embedding(t, c, temb.data());

    const int nm = static_cast<int>(masks.size());
    const int rows = static_cast<int>(views.size()) * nm;
    std::vector<float> z(static_cast<std::size_t>(rows) * out1);

    std::vector<float> head_row(static_cast<std::size_t>(head));
    std::vector<float> partial(static_cast<std::size_t>(out1));
    std::vector<float> cond(static_cast<std::size_t>(in - head));
    for (std::size_t vi = 0; vi < views.size(); ++vi) {
        const int n = views[vi];
        const auto xv = xt.view(n);
        for (int i = 0; i < pix; ++i) head_row[static_cast<std::size_t>(i)] = c_in * xv[static_cast<std::size_t>(i)];
        std::copy(temb.begin(), temb.end(), head_row.begin() + pix);
        pose_embedding(poses[static_cast<std::size_t>(n)], head_row.data() + pix + c.time_dim);

        std::copy(b1, b1 + out1, partial.begin());
        dense::accumulate(head_row.data(), 1, head, 0, W1, 0, head, out1, partial.data());

        for (int m = 0; m < nm; ++m) {
            const auto mask = masks[static_cast<std::size_t>(m)];
            for (int j = 0; j < c.ref_dim; ++j) cond[static_cast<std::size_t>(j)] = mask.use_ref ? ref_feat[static_cast<std::size_t>(j)] : 0.0f;
            for (int j = 0; j < c.mv_dim; ++j) cond[static_cast<std::size_t>(c.ref_dim + j)] = mask.use_mv ? mv_feat[static_cast<std::size_t>(j)] : 0.0f;
            cond[static_cast<std::size_t>(c.ref_dim + c.mv_dim)] = mask.use_ref ? 1.0f : 0.0f;
            cond[static_cast<std::size_t>(c.ref_dim + c.mv_dim + 1)] = mask.use_mv ? 1.0f : 0.0f;

            float* zr = z.data() + (vi * nm + static_cast<std::size_t>(m)) * out1;
            std::copy(partial.begin(), partial.end(), zr);
            dense::accumulate(cond.data(), 1, in - head, 0, W1, head, in, out1, zr);
        }
    }

    // Remaining layers over all rows at once.
    std::vector<float> cur = std::move(z);
    int cur_dim = out1;
    for (int l = 1; l < layers; ++l) {
        // Activation of the previous layer (always hidden here).
        for (auto& v : cur) v = dense::silu(v);
        const auto& wb = p.weight_block(static_cast<std::size_t>(l));
        std::vector<float> next(static_cast<std::size_t>(rows) * wb.cols);
        dense::affine(cur.data(), rows, cur_dim, p.block(2 + 2 * static_cast<std::size_t>(l)),
                      p.block(3 + 2 * static_cast<std::size_t>(l)), wb.cols, next.data());
        cur = std::move(next);
        cur_dim = wb.cols;
    }

    std::vector<std::vector<std::vector<float>>> out(views.size());
    for (std::size_t vi = 0; vi < views.size(); ++vi) {
        out[vi].resize(static_cast<std::size_t>(nm));
        for (int m = 0; m < nm; ++m) {
            const float* r = cur.data() + (vi * nm + static_cast<std::size_t>(m)) * cur_dim;
            const auto xv = xt.view(views[vi]);
            auto& o = out[vi][static_cast<std::size_t>(m)];
            o.resize(static_cast<std::size_t>(cur_dim));
            for (int i = 0; i < cur_dim; ++i) {
                const auto ii = static_cast<std::size_t>(i);
                o[ii] = static_cast<float>(pc.c_skip * xv[ii] + pc.c_out * r[i]);
            }
        }
    }
    return out;
}

}  // namespace

Precond preconditioning(const NoiseSchedule& sched, int t) {
    const double a = sched.sqrt_alpha_bar(t);
    const double s = sched.sqrt_one_minus(t);
    const double v = a * a * kDataStd * kDataStd + s * s;
    const double u = a * a * kInputStd * kInputStd + s * s;
    return {a * kInputStd / u, s / v, a * kDataStd / std::sqrt(v), 1.0 / (a * a)};
}

std::vector<float> denoise(const DenoiserParams& p, const NoisyViews& xt,
                           std::span<const PoseDelta> poses, int n, int t,
                           std::span<const float> ref, ConditionMask mask) {
    check_inputs(p, xt, poses, t);
    if (n < 0 || n >= p.config.views) throw IndexError("denoise: view index out of range");
    const auto rf = reference_features(p, ref);
    const int views[] = {n};
    const ConditionMask masks[] = {mask};
    auto out = run_branches(p, xt, poses, t, rf, views, masks);
    return std::move(out[0][0]);
}

BranchOutputs eval_branches(const DenoiserParams& p, const NoisyViews& xt,
                            std::span<const PoseDelta> poses, int n, int t,
                            std::span<const float> ref) {
    check_inputs(p, xt, poses, t);
    if (n < 0 || n >= p.config.views) throw IndexError("eval_branches: view index out of range");
    const auto rf = reference_features(p, ref);
    const int views[] = {n};
    const ConditionMask masks[] = {ConditionMask::full(), ConditionMask::mv_only(),
                                   ConditionMask::ref_only(), ConditionMask::uncond()};
    auto out = run_branches(p, xt, poses, t, rf, views, masks);
    BranchOutputs b;
    b.eps_full = std::move(out[0][0]);
    b.eps_mv = std::move(out[0][1]);
    b.eps_ref = std::move(out[0][2]);
    b.eps_uncond = std::move(out[0][3]);
    return b;
}

BranchEvaluator::BranchEvaluator(const DenoiserParams& p, std::span<const float> ref,
                                 std::vector<PoseDelta> poses)
    : params_(p), ref_features_(reference_features(p, ref)), poses_(std::move(poses)) {
    require_same_size(poses_.size(), static_cast<std::size_t>(p.config.views), "BranchEvaluator poses");
}

std::vector<std::vector<std::vector<float>>> BranchEvaluator::evaluate(
    const NoisyViews& xt, int t, std::span<const ConditionMask> masks) const {
    check_inputs(params_, xt, poses_, t);
    std::vector<int> views(static_cast<std::size_t>(params_.config.views));
    for (int n = 0; n < params_.config.views; ++n) views[static_cast<std::size_t>(n)] = n;
    return run_branches(params_, xt, poses_, t, ref_features_, views, masks);
}

// ------------------------------------------------------------ training path

template <class S>
void forward_rows(const BasicParams<S>& p, ForwardCache<S>& cache) {
    const int layers = static_cast<int>(p.layer_count());
    const int rows = cache.rows;
    cache.pre.assign(static_cast<std::size_t>(layers), {});
    cache.act.assign(static_cast<std::size_t>(layers > 0 ? layers - 1 : 0), {});
    const S* prev = cache.input.data();
    int prev_dim = p.config.input_width();
    for (int l = 0; l < layers; ++l) {
        const auto& wb = p.weight_block(static_cast<std::size_t>(l));
        auto& pre = cache.pre[static_cast<std::size_t>(l)];
        pre.resize(static_cast<std::size_t>(rows) * wb.cols);
        dense::affine(prev, rows, prev_dim, p.block(2 + 2 * static_cast<std::size_t>(l)),
                      p.block(3 + 2 * static_cast<std::size_t>(l)), wb.cols, pre.data());
        if (l + 1 < layers) {
            auto& act = cache.act[static_cast<std::size_t>(l)];
            act.resize(pre.size());
            for (std::size_t i = 0; i < pre.size(); ++i) act[i] = dense::silu(pre[i]);
            prev = act.data();
        }
        prev_dim = wb.cols;
    }
    cache.output = cache.pre.back();
}

template <class S>
void backward_rows(const BasicParams<S>& p, const ForwardCache<S>& cache, std::span<const S> dout,
                   std::vector<S>& grad, std::vector<S>& dcond) {
    const auto& c = p.config;
    const int layers = static_cast<int>(p.layer_count());
    const int rows = cache.rows;
    std::vector<S> dz(dout.begin(), dout.end());
    std::vector<S> wt;
    for (int l = layers - 1; l >= 0; --l) {
        const auto li = static_cast<std::size_t>(l);
        const auto& wb = p.weight_block(li);
        const S* in = l == 0 ? cache.input.data() : cache.act[li - 1].data();
        dense::grad_weights(in, rows, wb.rows, dz.data(), wb.cols, grad.data() + wb.offset,
                            grad.data() + p.layout[2 + 2 * li + 1].offset);
        if (l > 0) {
            wt.resize(wb.size());
            dense::transpose(p.block(2 + 2 * li), wb.rows, wb.cols, wt.data());
            std::vector<S> da(static_cast<std::size_t>(rows) * wb.rows);
            dense::grad_input(dz.data(), rows, wb.cols, wt.data(), wb.rows, da.data());
            const auto& pre = cache.pre[li - 1];
            for (std::size_t i = 0; i < da.size(); ++i) da[i] *= dense::silu_grad(pre[i]);
            dz = std::move(da);
        } else {
            // Only the reference and context feature columns feed parameters.
            const int k0 = c.ref_offset();
            const int width = c.ref_dim + c.mv_dim;
            dcond.assign(static_cast<std::size_t>(rows) * width, S(0));
            const S* W = p.block(2);
            for (int r = 0; r < rows; ++r) {
                const S* dzr = dz.data() + static_cast<std::size_t>(r) * wb.cols;
                for (int j = 0; j < width; ++j) {
                    const S* wk = W + static_cast<std::size_t>(k0 + j) * wb.cols;
                    S acc = 0;
                    for (int o = 0; o < wb.cols; ++o) acc += dzr[o] * wk[o];
                    dcond[static_cast<std::size_t>(r) * width + j] = acc;
                }
            }
        }
    }
}

template <class S>
long double batch_loss(const BasicParams<S>& p, const ExampleBatch<S>& batch, std::vector<S>* grad) {
    const auto& c = p.config;
    const int rows = batch.rows;
    const int pix = c.pixels();
    const int in = c.input_width();
    const int head = c.ref_offset();
    require_same_size(batch.ref.size(), static_cast<std::size_t>(rows) * pix, "batch ref");
    require_same_size(batch.context.size(), static_cast<std::size_t>(rows) * pix, "batch context");
    require_same_size(batch.target.size(), static_cast<std::size_t>(rows) * pix, "batch target");
    require_same_size(batch.head.size(), static_cast<std::size_t>(rows) * head, "batch head");
    require_same_size(batch.masks.size(), static_cast<std::size_t>(rows), "batch masks");
    require_same_size(batch.xt.size(), static_cast<std::size_t>(rows) * pix, "batch x_t");
    require_same_size(batch.c_skip.size(), static_cast<std::size_t>(rows), "batch c_skip");
    require_same_size(batch.c_out.size(), static_cast<std::size_t>(rows), "batch c_out");

    std::vector<S> ref_feat(static_cast<std::size_t>(rows) * c.ref_dim, S(0));
    std::vector<S> mv_feat(static_cast<std::size_t>(rows) * c.mv_dim, S(0));
    dense::accumulate(batch.ref.data(), rows, pix, 0, p.block(0), 0, pix, c.ref_dim, ref_feat.data());
    dense::accumulate(batch.context.data(), rows, pix, 0, p.block(1), 0, pix, c.mv_dim, mv_feat.data());

    ForwardCache<S> cache;
    cache.rows = rows;
    cache.input.assign(static_cast<std::size_t>(rows) * in, S(0));
    for (int r = 0; r < rows; ++r) {
        const auto ri = static_cast<std::size_t>(r);
        S* row = cache.input.data() + ri * in;
        std::copy_n(batch.head.data() + ri * head, head, row);
        const auto m = batch.masks[ri];
        if (m.use_ref) std::copy_n(ref_feat.data() + ri * c.ref_dim, c.ref_dim, row + c.ref_offset());
        if (m.use_mv) std::copy_n(mv_feat.data() + ri * c.mv_dim, c.mv_dim, row + c.mv_offset());
        row[c.flag_offset()] = m.use_ref ? S(1) : S(0);
        row[c.flag_offset() + 1] = m.use_mv ? S(1) : S(0);
    }
    forward_rows(p, cache);

    // Accumulate in at least double; long double parameters keep their precision.
    using Acc = std::conditional_t<(sizeof(S) > sizeof(double)), long double, double>;
    const Acc count = static_cast<Acc>(rows) * pix;
    Acc loss = 0.0;
    std::vector<S> dout(cache.output.size());
    for (std::size_t i = 0; i < dout.size(); ++i) {
        const std::size_t r = i / static_cast<std::size_t>(pix);
        const Acc skip = batch.c_skip[r];
        const Acc out = batch.c_out[r];
        const Acc w = batch.weight.empty() ? Acc(1) : Acc(batch.weight[r]);
        const Acc d = skip * batch.xt[i] + out * cache.output[i] - batch.target[i];
        loss += w * d * d;
        dout[i] = static_cast<S>(Acc(2) / count * w * out * d);
    }
    loss /= count;
    if (!grad) return loss;

    grad->assign(p.values.size(), S(0));
    std::vector<S> dcond;
    backward_rows(p, cache, std::span<const S>(dout), *grad, dcond);

    const int width = c.ref_dim + c.mv_dim;
    std::vector<S> dref(static_cast<std::size_t>(rows) * c.ref_dim, S(0));
    std::vector<S> dmv(static_cast<std::size_t>(rows) * c.mv_dim, S(0));
    for (int r = 0; r < rows; ++r) {
        const auto ri = static_cast<std::size_t>(r);
        const auto m = batch.masks[ri];
        if (m.use_ref) std::copy_n(dcond.data() + ri * width, c.ref_dim, dref.data() + ri * c.ref_dim);
        if (m.use_mv) std::copy_n(dcond.data() + ri * width + c.ref_dim, c.mv_dim, dmv.data() + ri * c.mv_dim);
    }
    dense::grad_weights<S>(batch.ref.data(), rows, pix, dref.data(), c.ref_dim,
                           grad->data() + p.layout[0].offset, nullptr);
    dense::grad_weights<S>(batch.context.data(), rows, pix, dmv.data(), c.mv_dim,
                           grad->data() + p.layout[1].offset, nullptr);
    return loss;
}

template void forward_rows<float>(const BasicParams<float>&, ForwardCache<float>&);
template void forward_rows<double>(const BasicParams<double>&, ForwardCache<double>&);
template void forward_rows<long double>(const BasicParams<long double>&, ForwardCache<long double>&);
template void backward_rows<float>(const BasicParams<float>&, const ForwardCache<float>&,
                                   std::span<const float>, std::vector<float>&, std::vector<float>&);
template void backward_rows<double>(const BasicParams<double>&, const ForwardCache<double>&,
                                    std::span<const double>, std::vector<double>&, std::vector<double>&);
template long double batch_loss<float>(const BasicParams<float>&, const ExampleBatch<float>&, std::vector<float>*);
template long double batch_loss<double>(const BasicParams<double>&, const ExampleBatch<double>&, std::vector<double>*);
template long double batch_loss<long double>(const BasicParams<long double>&, const ExampleBatch<long double>&,
                                        std::vector<long double>*);

}  // namespace hlab
