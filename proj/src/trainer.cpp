#include "hlab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "hlab/errors.hpp"

namespace hlab {

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("TrainConfig: batch size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("TrainConfig: learning rate must be > 0");
    if (!(p_drop >= 0.0 && p_drop < 1.0)) throw ConfigError("TrainConfig: p_drop must lie in [0, 1)");
}

ExampleBatch<float> build_batch(const DenoiserConfig& cfg, const NoiseSchedule& sched,
                                std::span<const TrainScene> scenes, std::span<const PoseDelta> poses,
                                std::span<const TrainItem> items, std::span<const ConditionMask> masks) {
    require_same_size(items.size(), masks.size(), "build_batch masks");
    require_same_size(poses.size(), static_cast<std::size_t>(cfg.views), "build_batch poses");
    const int pix = cfg.pixels();
    const int head = cfg.ref_offset();
    const int rows = static_cast<int>(items.size());
    const auto upix = static_cast<std::size_t>(pix);

    ExampleBatch<float> b;
    b.rows = rows;
    b.ref.resize(static_cast<std::size_t>(rows) * upix);
    b.context.assign(static_cast<std::size_t>(rows) * upix, 0.0f);
    b.target.resize(static_cast<std::size_t>(rows) * upix);
    b.head.resize(static_cast<std::size_t>(rows) * head);
    b.xt.resize(static_cast<std::size_t>(rows) * upix);
    b.c_skip.resize(static_cast<std::size_t>(rows));
    b.c_out.resize(static_cast<std::size_t>(rows));
    b.weight.resize(static_cast<std::size_t>(rows));
    b.masks.assign(masks.begin(), masks.end());

    for (int r = 0; r < rows; ++r) {
        const auto ri = static_cast<std::size_t>(r);
        const auto& it = items[ri];
        const auto& sc = scenes[static_cast<std::size_t>(it.scene)];
        require_same_size(it.eps.size(), static_cast<std::size_t>(cfg.views) * upix, "train item noise");
        const double a = sched.sqrt_alpha_bar(it.t);
        const double s = sched.sqrt_one_minus(it.t);
        const auto pc = preconditioning(sched, it.t);
        const auto c_in = static_cast<float>(pc.c_in);
        b.c_skip[ri] = static_cast<float>(pc.c_skip);
        b.c_out[ri] = static_cast<float>(pc.c_out);
        b.weight[ri] = static_cast<float>(pc.loss_weight);
        float* xr = b.xt.data() + ri * upix;

        float* ctx = b.context.data() + ri * upix;
        float* hd = b.head.data() + ri * static_cast<std::size_t>(head);
        for (int m = 0; m < cfg.views; ++m) {
            const float* x0 = sc.views.data() + static_cast<std::size_t>(m) * upix;
            const float* e = it.eps.data() + static_cast<std::size_t>(m) * upix;
            for (std::size_t i = 0; i < upix; ++i) {
                // Same arithmetic as forward_diffuse.
                const auto xt = static_cast<float>(a * x0[i] + s * e[i]);
                ctx[i] += xt;
                if (m == it.n) {
                    xr[i] = xt;
                    hd[i] = c_in * xt;
                }
            }
        }
        const auto nv = static_cast<float>(cfg.views);
        for (std::size_t i = 0; i < upix; ++i) ctx[i] = c_in * (ctx[i] / nv);

        std::copy_n(sc.views.data(), upix, b.ref.data() + ri * upix);  // view 0 is the input view
        std::copy_n(it.eps.data() + static_cast<std::size_t>(it.n) * upix, upix, b.target.data() + ri * upix);
        time_embedding(it.t, cfg, hd + pix);
        pose_embedding(poses[static_cast<std::size_t>(it.n)], hd + pix + cfg.time_dim);
    }
    return b;
}

namespace {

void adam_update(std::vector<float>& params, std::span<const float> grad, AdamState& opt, double lr) {
    if (opt.m.size() != params.size()) {
        opt.m.assign(params.size(), 0.0f);
        opt.v.assign(params.size(), 0.0f);
        opt.step = 0;
    }
    ++opt.step;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
    const auto b1 = static_cast<float>(opt.beta1);
    const auto b2 = static_cast<float>(opt.beta2);
    const auto step = static_cast<float>(lr / bc1);
    const auto inv_bc2 = static_cast<float>(1.0 / bc2);
    const auto eps = static_cast<float>(opt.eps);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const float g = grad[i];
        opt.m[i] = b1 * opt.m[i] + (1.0f - b1) * g;
        opt.v[i] = b2 * opt.v[i] + (1.0f - b2) * g * g;
        params[i] -= step * opt.m[i] / (std::sqrt(opt.v[i] * inv_bc2) + eps);
    }
}

}  // namespace

double train_step(DenoiserParams& p, AdamState& opt, const NoiseSchedule& sched,
                  std::span<const TrainScene> scenes, std::span<const PoseDelta> poses,
                  std::span<const TrainItem> items, const TrainConfig& cfg, Stream& rng) {
    std::vector<ConditionMask> masks(items.size());
    for (auto& m : masks) {
        m.use_ref = !rng.bernoulli(cfg.p_drop);
        m.use_mv = !rng.bernoulli(cfg.p_drop);
    }
    const auto batch = build_batch(p.config, sched, scenes, poses, items, masks);
    std::vector<float> grad;
    const double loss = batch_loss(p, batch, &grad);
    if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "train_step: non-finite loss " << loss << " at optimizer step " << opt.step
            << " (batch of " << items.size() << ")";
        throw NumericError(msg.str());
    }
    adam_update(p.values, grad, opt, cfg.learning_rate);
    return loss;
}

std::vector<TrainItem> sample_items(const DenoiserConfig& cfg, int scene_count, int batch_size,
                                    std::uint64_t seed, std::int64_t step) {
    std::vector<TrainItem> items(static_cast<std::size_t>(batch_size));
    const auto noise_len = static_cast<std::size_t>(cfg.views) * cfg.pixels();
    for (int i = 0; i < batch_size; ++i) {
        Stream rng(hash_combine(seed, static_cast<std::uint64_t>(step)), "batch", static_cast<std::uint64_t>(i));
        auto& it = items[static_cast<std::size_t>(i)];
        it.scene = static_cast<int>(rng.below(static_cast<std::uint64_t>(scene_count)));
        it.n = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.views)));
        it.t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.T)));
        it.eps.resize(noise_len);
        for (auto& e : it.eps) e = static_cast<float>(rng.normal());
    }
    return items;
}

std::int64_t steps_for(const TrainConfig& cfg, int scene_count) {
    const std::int64_t per_epoch = (scene_count + cfg.batch_size - 1) / cfg.batch_size;
    return static_cast<std::int64_t>(cfg.epochs) * per_epoch;
}

std::vector<double> train(DenoiserParams& p, std::span<const TrainScene> scenes,
                          std::span<const PoseDelta> poses, const TrainConfig& cfg,
                          const std::function<void(const TrainLogRecord&)>& on_step,
                          std::int64_t max_steps) {
    cfg.validate();
    if (scenes.empty()) throw ConfigError("train: no scenes");
    const auto sched = make_schedule(p.config.T, p.config.beta_start, p.config.beta_end);
    std::int64_t steps = steps_for(cfg, static_cast<int>(scenes.size()));
    if (max_steps >= 0) steps = std::min(steps, max_steps);
    AdamState opt;
    std::vector<double> losses;
    losses.reserve(static_cast<std::size_t>(steps));
    for (std::int64_t s = 0; s < steps; ++s) {
        const auto items = sample_items(p.config, static_cast<int>(scenes.size()), cfg.batch_size, cfg.seed, s);
        Stream rng(cfg.seed, "dropout", static_cast<std::uint64_t>(s));
        const double loss = train_step(p, opt, sched, scenes, poses, items, cfg, rng);
        losses.push_back(loss);
        if (on_step) on_step({s, loss, cfg.seed});
    }
    return losses;
}

// ------------------------------------------------------------ gradient check

GradCheckResult grad_check(const BasicParams<double>& p, const ExampleBatch<double>& probe,
                           std::size_t coords, double h, std::uint64_t seed, double floor) {
    std::vector<double> grad;
    batch_loss(p, probe, &grad);

    // Partial Fisher-Yates for a uniform subset without replacement.
    std::vector<std::size_t> idx(p.values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    coords = std::min(coords, idx.size());
    Stream rng(seed, "grad-check");
    for (std::size_t i = 0; i < coords; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
        std::swap(idx[i], idx[j]);
    }

    // Finite differences run in extended precision so that rounding in the
    // loss stays well below the differences being measured.
    auto q = cast_params<long double>(p);
    ExampleBatch<long double> lp;
    lp.rows = probe.rows;
    lp.masks = probe.masks;
    auto widen = [](const std::vector<double>& v) { return std::vector<long double>(v.begin(), v.end()); };
    lp.ref = widen(probe.ref);
    lp.context = widen(probe.context);
    lp.target = widen(probe.target);
    lp.head = widen(probe.head);
    lp.xt = widen(probe.xt);
    lp.c_skip = widen(probe.c_skip);
    lp.c_out = widen(probe.c_out);
    lp.weight = widen(probe.weight);

    GradCheckResult res;
    res.coordinates = coords;
    for (std::size_t i = 0; i < coords; ++i) {
        const auto k = idx[i];
        const long double orig = q.values[k];
        const long double hi = orig + h;
        const long double lo = orig - h;
        q.values[k] = hi;
        const long double up = batch_loss<long double>(q, lp, nullptr);
        q.values[k] = lo;
        const long double down = batch_loss<long double>(q, lp, nullptr);
        q.values[k] = orig;
        const auto numeric = static_cast<double>((up - down) / (hi - lo));
        const double analytic = grad[k];
        const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
        res.max_rel_error = std::max(res.max_rel_error, std::abs(analytic - numeric) / denom);
    }
    return res;
}

ExampleBatch<double> random_probe(const DenoiserConfig& cfg, int rows, std::uint64_t seed) {
    const auto pix = static_cast<std::size_t>(cfg.pixels());
    const auto head = static_cast<std::size_t>(cfg.ref_offset());
    ExampleBatch<double> b;
    b.rows = rows;
    Stream rng(seed, "probe");
    auto fill = [&](std::vector<double>& v, std::size_t n) {
        v.resize(n);
        for (auto& x : v) x = rng.normal();
    };
    fill(b.ref, static_cast<std::size_t>(rows) * pix);
    fill(b.context, static_cast<std::size_t>(rows) * pix);
    fill(b.target, static_cast<std::size_t>(rows) * pix);  // the noise inside x_t
    b.head.resize(static_cast<std::size_t>(rows) * head);
    b.xt.resize(static_cast<std::size_t>(rows) * pix);
    b.c_skip.resize(static_cast<std::size_t>(rows));
    b.c_out.resize(static_cast<std::size_t>(rows));
    b.weight.resize(static_cast<std::size_t>(rows));
    const auto sched = make_schedule(cfg.T, cfg.beta_start, cfg.beta_end);
    for (int r = 0; r < rows; ++r) {
        const auto ri = static_cast<std::size_t>(r);
        double* hd = b.head.data() + ri * head;
        const int t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.T)));
        const auto pc = preconditioning(sched, t);
        b.c_skip[ri] = pc.c_skip;
        b.c_out[ri] = pc.c_out;
        b.weight[ri] = pc.loss_weight;
        const double a = sched.sqrt_alpha_bar(t);
        const double s = sched.sqrt_one_minus(t);
        for (std::size_t i = 0; i < pix; ++i) {
            const double x0 = kInputStd * rng.normal();
            b.xt[ri * pix + i] = a * x0 + s * b.target[ri * pix + i];
            hd[i] = pc.c_in * b.xt[ri * pix + i];
        }
        time_embedding(t, cfg, hd + pix);
        pose_embedding(PoseDelta{0.0, 360.0 * r / cfg.views}, hd + pix + cfg.time_dim);
    }
    b.masks.assign(static_cast<std::size_t>(rows), ConditionMask::full());
    return b;
}

}  // namespace hlab
