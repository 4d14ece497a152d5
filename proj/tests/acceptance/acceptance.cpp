// Acceptance run: one PASS/FAIL line per criterion. Exit status is nonzero
// if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "../support.hpp"
#include "hlab/checkpoint.hpp"
#include "hlab/denoiser.hpp"
#include "hlab/diffusion.hpp"
#include "hlab/guidance.hpp"
#include "hlab/harness.hpp"
#include "hlab/metrics.hpp"
#include "hlab/sampler.hpp"
#include "hlab/scene.hpp"
#include "hlab/trainer.hpp"

using namespace hlab;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = true;
    std::string detail;
};

// Appends a named check to the outcome's detail line.
void check(Outcome& o, bool ok, const std::string& what) {
    o.pass = o.pass && ok;
    if (!o.detail.empty()) o.detail += "; ";
    o.detail += what + (ok ? "" : " [failed]");
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool same_bits(const std::vector<float>& a, const std::vector<float>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * (i + j) + 1.0;
        i = j + 1;
    }
    return r;
}

// Pearson correlation of average ranks.
double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    const auto rx = ranks(x), ry = ranks(y);
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += rx[i] / n;
        my += ry[i] / n;
    }
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    return sxx == 0 || syy == 0 ? 0.0 : sxy / std::sqrt(sxx * syy);
}

// ------------------------------------------------------------ AC1

Outcome guidance_suite() {
    Outcome o;
    Stream rng(101, "ac1");
    const std::size_t n = 768;
    double reduce = 0, additive = 0, score = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        BranchOutputs b{testing::normals(n, rng), testing::normals(n, rng), testing::normals(n, rng),
                        testing::normals(n, rng)};
        const double s1 = 3 * rng.uniform(), s2 = 3 * rng.uniform();
        reduce = std::max(reduce, testing::max_rel(harmony_combine(b, 0.0, 0.0), b.eps_full));

        BranchOutputs same = b;
        same.eps_ref = same.eps_mv;
        additive = std::max(additive, testing::max_rel(harmony_combine(same, s1, s2),
                                                       cfg_combine(same.eps_full, same.eps_mv, s1 + s2)));

        const double sigma = std::array{0.1, 0.5, 0.99}[trial % 3];
        const auto r = implicit_score_ref(b, sigma), m = implicit_score_mv(b, sigma);
        std::vector<float> via(n);
        for (std::size_t i = 0; i < n; ++i) {
            via[i] = static_cast<float>(b.eps_full[i] - sigma * (s1 * r[i] + s2 * m[i]));
        }
        score = std::max(score, testing::max_rel(via, harmony_combine(b, s1, s2)));
    }
    check(o, reduce <= 1e-6, "zero scales " + fmt("%.2g", reduce));
    check(o, additive <= 1e-6, "equal branches add scales " + fmt("%.2g", additive));
    check(o, score <= 1e-6, "score form " + fmt("%.2g", score));
    return o;
}

// ------------------------------------------------------------ AC2

Outcome diffusion_suite() {
    Outcome o;
    const auto sched = make_schedule();
    Stream rng(202, "ac2");

    const std::size_t samples = 100000;
    double worst_var = 0, worst_mean = 0;
    for (int t : {1, 10, 50, 100}) {
        const std::vector<float> x0(samples, 0.5f);
        const auto eps = testing::normals(samples, rng);
        const auto xt = forward_diffuse(x0, t, eps, sched);
        double m = 0, q = 0;
        for (float v : xt) m += v;
        m /= samples;
        for (float v : xt) q += (v - m) * (v - m);
        q /= samples;
        const double a = sched.sqrt_alpha_bar(t), var = 1.0 - sched.alpha_bar[t];
        worst_var = std::max(worst_var, std::abs(q - var) / var);
        worst_mean = std::max(worst_mean, std::abs(m - 0.5 * a) / std::sqrt(var));
    }
    check(o, worst_var <= 0.03, "variance rel err " + fmt("%.3g", worst_var));
    check(o, worst_mean <= 0.03, "mean err / std " + fmt("%.3g", worst_mean));

    // 32-bit x_t bounds absolute accuracy by ulp(x_t) / sqrt(abar_t), so the
    // error is taken relative to max(1, |x_t| / sqrt(abar_t)).
    double trip = 0, trip_abs = 0;
    for (int t = 1; t <= sched.T; ++t) {
        std::vector<float> x0(768);
        for (auto& v : x0) v = static_cast<float>(2 * rng.uniform() - 1);
        const auto eps = testing::normals(x0.size(), rng);
        const auto xt = forward_diffuse(x0, t, eps, sched);
        const auto back = predict_x0(xt, eps, t, sched);
        for (std::size_t i = 0; i < x0.size(); ++i) {
            const double scale = std::max(1.0, std::abs(xt[i]) / sched.sqrt_alpha_bar(t));
            const double err = std::abs(double(back[i]) - x0[i]);
            trip = std::max(trip, err / scale);
            trip_abs = std::max(trip_abs, err);
        }
    }
    check(o, trip <= 1e-5, "round trip " + fmt("%.2g", trip) + " (absolute " + fmt("%.2g", trip_abs) + ")");

    // A whole DDIM trajectory twice, with a fixed noise predictor and with a
    // small sampled model.
    const auto x_init = testing::normals(768, rng);
    auto trajectory = [&] {
        auto x = x_init;
        const auto ts = ddim_timesteps(sched.T, 50);
        for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
            std::vector<float> e(x.size());
            for (std::size_t k = 0; k < x.size(); ++k) e[k] = std::sin(0.37f * x[k] + 0.01f * ts[i]);
            x = ddim_step(x, e, ts[i], ts[i + 1], sched);
        }
        return x;
    };
    bool det = same_bits(trajectory(), trajectory());
    DenoiserConfig small;
    small.hidden = 32;
    small.ref_dim = 8;
    small.mv_dim = 8;
    const auto p = init_denoiser(small, 3);
    Image ref(16, 16);
    for (auto& v : ref.values) v = static_cast<float>(rng.uniform());
    SampleOptions opt;
    opt.steps = 10;
    const auto a = sample_viewset(p, ref, opt, Stream(9, "sample"));
    const auto b = sample_viewset(p, ref, opt, Stream(9, "sample"));
    for (std::size_t n = 0; n < a.size(); ++n) det = det && same_bits(a.views[n].values, b.views[n].values);
    check(o, det, "DDIM bitwise determinism");
    return o;
}

// ------------------------------------------------------------ AC3

Outcome gradient_check() {
    Outcome o;
    const DenoiserConfig cfg;
    const auto p = cast_params<double>(init_denoiser(cfg, 31));
    auto probe = random_probe(cfg, 4, 32);
    probe.masks[1] = ConditionMask::mv_only();
    probe.masks[2] = ConditionMask::ref_only();
    probe.masks[3] = ConditionMask::uncond();
    const auto r = grad_check(p, probe, 256, 1e-5, 33);
    check(o, r.coordinates >= 200, std::to_string(r.coordinates) + " coordinates");
    check(o, r.max_rel_error < 1e-5, "max rel error " + fmt("%.2g", r.max_rel_error));
    return o;
}

// ------------------------------------------------------------ AC4

ViewSet random_viewset(Stream& rng, int views = 8) {
    std::vector<Image> v;
    for (int n = 0; n < views; ++n) v.push_back(testing::random_image(16, 16, rng));
    return ViewSet::from_views(v);
}

Outcome metric_suite() {
    Outcome o;
    Stream rng(404, "ac4");
    double e_psnr = 0, e_ssim = 0, e_d = 0, e_svar = 0, e_cd = 0;
    const auto enc = toy_encoder();
    const auto proto = class_prototype(enc, class_exemplars(SceneClass::stripes, 8));
    for (int i = 0; i < 100; ++i) {
        const auto x = testing::random_image(16, 16, rng), y = testing::random_image(16, 16, rng);
        e_psnr = std::max(e_psnr, std::abs(psnr(x, y) - testing::psnr_oracle(x, y)));
        e_ssim = std::max(e_ssim, std::abs(ssim(x, y) - testing::ssim_oracle(x, y)));

        const auto views = random_viewset(rng);
        const auto ref_e = testing::embed_oracle(x);
        double d = 0;
        std::vector<double> sims;
        for (const auto& v : views.views) {
            const auto e = testing::embed_oracle(v);
            d += (1.0 - testing::dot(ref_e, e)) / views.size();
            sims.push_back(testing::dot(proto.v, e));
        }
        double m = 0, q = 0;
        for (double s : sims) m += s / sims.size();
        for (double s : sims) q += (s - m) * (s - m) / sims.size();

        const double got_d = diversity(enc, x, views);
        const auto got_s = semantic_variance(enc, proto, views);
        e_d = std::max(e_d, std::abs(got_d - d));
        e_svar = std::max(e_svar, testing::rel_err(got_s.variance, q));
        e_cd = std::max(e_cd, testing::rel_err(cd_report(enc, x, {views}, proto).cd, d / q));
    }
    check(o, e_psnr < 1e-9, "psnr " + fmt("%.2g", e_psnr));
    check(o, e_ssim < 1e-9, "ssim " + fmt("%.2g", e_ssim));
    check(o, e_d < 1e-9, "D " + fmt("%.2g", e_d));
    check(o, e_svar < 1e-6, "S_Var rel " + fmt("%.2g", e_svar));
    check(o, e_cd < 1e-6, "CD rel " + fmt("%.2g", e_cd));

    int good = 0, total = 0;
    for (int trial = 0; trial < 25; ++trial) {
        const auto img = testing::random_image(16, 16, rng);
        const auto f = block_flow(img, testing::roll_x(img, 2));
        for (std::size_t i = 0; i < f.dx.size(); i += 4) {
            ++total;
            good += f.dx[i] == 2.0f && f.dy[i] == 0.0f;
        }
    }
    check(o, good >= 0.9 * total, "2 px shift on " + std::to_string(good) + "/" + std::to_string(total) + " blocks");

    const auto base = testing::random_image(16, 16, rng);
    auto rolled = [&](int step) {
        std::vector<Image> v;
        for (int n = 0; n < 16; ++n) v.push_back(testing::roll_x(base, step * n));
        return ViewSet::from_views(v);
    };
    const auto gt = rolled(2), gen = rolled(3), noisy = random_viewset(rng);
    check(o, e_flow(noisy, noisy) == 0.0 && e_flow(gt, gt) == 0.0, "e_flow identity 0");
    check(o, e_flow(gt, gen) == 1.0, "e_flow 2 vs 3 px = " + fmt("%.6g", e_flow(gt, gen)));
    return o;
}

// ------------------------------------------------------------ model runs

struct Context {
    fs::path work;
    fs::path checkpoint;  // reused when given
    fs::path train_data;
    fs::path test_data;
    DenoiserParams model;
    double train_seconds = -1;
};

void prepare_model(Context& c) {
    c.train_data = c.work / "data";
    c.test_data = c.work / "test";
    if (!fs::exists(c.test_data / "manifest.jsonl")) make_dataset(20, 1, c.test_data);
    if (!c.checkpoint.empty()) {
        c.model = load_checkpoint(c.checkpoint);
        return;
    }
    if (!fs::exists(c.train_data / "manifest.jsonl")) make_dataset(512, 0, c.train_data);
    TrainRunConfig tc;
    tc.dataset = c.train_data;
    tc.out_dir = c.work / "model";
    const auto t0 = Clock::now();
    c.checkpoint = run_train(tc);
    c.train_seconds = seconds_since(t0);
    c.model = load_checkpoint(c.checkpoint);
}

RunConfig base_run(const Context& c) {
    RunConfig r;
    r.dataset = c.test_data;
    r.checkpoint = c.checkpoint;
    r.out_dir = c.work / "runs";
    r.write_images = false;
    return r;
}

Outcome trend_reproduction(const Context& c) {
    Outcome o;
    if (c.train_seconds >= 0) {
        check(o, c.train_seconds <= 600, "training " + fmt("%.0f", c.train_seconds) + " s");
    } else {
        o.detail = "training skipped (checkpoint given)";
    }
    SweepGrid grid;
    for (double s1 : {0.0, 1.0, 2.0, 3.0}) grid.points.push_back({GuidanceMode::harmony, 0.0, s1, 1.0});
    for (double s2 : {0.0, 0.6, 1.2}) grid.points.push_back({GuidanceMode::harmony, 0.0, 2.0, s2});
    grid.seeds = {0, 1, 2, 3, 4};
    const auto data = load_dataset(c.test_data, 20);
    const auto res = sweep(data, c.model, grid, base_run(c));

    auto find = [&](std::uint64_t seed, double s1, double s2) {
        for (const auto& r : res.rows) {
            if (r.seed == seed && r.point.s1 == s1 && r.point.s2 == s2) return r.report;
        }
        throw std::runtime_error("missing sweep row");
    };
    int rho_ok = 0, cd_ok = 0;
    std::string rhos, cds;
    for (auto seed : grid.seeds) {
        std::vector<double> xs, ys;
        for (double s1 : {0.0, 1.0, 2.0, 3.0}) {
            xs.push_back(s1);
            ys.push_back(find(seed, s1, 1.0).psnr);
        }
        const double rho = spearman(xs, ys);
        rho_ok += rho >= 0.8;
        const double cd1 = find(seed, 2.0, 1.0).cd, cd0 = find(seed, 2.0, 0.0).cd;
        cd_ok += cd1 > cd0;
        rhos += (rhos.empty() ? "" : ",") + fmt("%.2f", rho);
        cds += (cds.empty() ? "" : ",") + fmt("%.3g", cd1) + ">" + fmt("%.3g", cd0);
    }
    check(o, rho_ok >= 4, "spearman(s1, psnr) >= 0.8 on " + std::to_string(rho_ok) + "/5 seeds [" + rhos + "]");
    check(o, cd_ok >= 4, "cd(s2=1) > cd(s2=0) on " + std::to_string(cd_ok) + "/5 seeds [" + cds + "]");
    return o;
}

struct ModeStats {
    double diverse_fraction = 0;
    std::vector<double> front_psnr;  // views adjacent to the input, per instance
};

ModeStats mode_stats(const Context& c, const Dataset& data, double s1, std::uint64_t seed) {
    auto cfg = base_run(c);
    cfg.guidance = {GuidanceMode::harmony, 1.0, s1, 1.0};
    cfg.instances = 8;
    cfg.seed = seed;
    const auto& sc = data.config;
    const int back = sc.views / 2;
    std::map<int, std::set<int>> colors;
    ModeStats st;
    evaluate(data, cfg, model_generator(c.model, cfg.guidance, cfg.steps), [&](int id, int, const ViewSet& vs) {
        colors[id].insert(nearest_palette(estimate_back_albedo(sc, vs.views[back], back)));
        const auto& gt = data.entries[static_cast<std::size_t>(id)].views;
        for (int n : {1, sc.views - 1}) st.front_psnr.push_back(psnr(vs.views[n], gt.views[n]));
    });
    int diverse = 0;
    for (const auto& [id, set] : colors) diverse += set.size() >= 2;
    st.diverse_fraction = static_cast<double>(diverse) / colors.size();
    return st;
}

Outcome multi_modality(const Context& c) {
    Outcome o;
    const auto data = load_dataset(c.test_data, 20);
    int ok = 0;
    std::string per_seed;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto h = mode_stats(c, data, 2.0, seed);
        const auto z = mode_stats(c, data, 0.0, seed);
        const double mh = median(h.front_psnr), mz = median(z.front_psnr);
        const bool pass = h.diverse_fraction >= 0.6 && mh > mz;
        ok += pass;
        per_seed += (per_seed.empty() ? "" : ", ") + fmt("%.2f", h.diverse_fraction) + " diverse, psnr " +
                    fmt("%.2f", mh) + " vs " + fmt("%.2f", mz);
    }
    check(o, ok >= 4, std::to_string(ok) + "/5 seeds [" + per_seed + "]");
    return o;
}

Outcome reproducibility(const Context& c) {
    Outcome o;
    auto cfg = base_run(c);
    cfg.run_id = "repro";
    cfg.write_images = true;
    const auto t0 = Clock::now();
    run_eval(cfg);
    const double first = seconds_since(t0);
    const auto a = read_file(cfg.out_dir / cfg.run_id / "report.json");
    const auto t1 = Clock::now();
    run_eval(cfg);
    const double second = seconds_since(t1);
    const auto b = read_file(cfg.out_dir / cfg.run_id / "report.json");
    check(o, !a.empty() && a == b, "report.json byte-identical (" + std::to_string(a.size()) + " bytes)");
    check(o, std::max(first, second) < 300, "eval " + fmt("%.1f", first) + " s, " + fmt("%.1f", second) + " s");
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Runs the acceptance criteria"};
    Context ctx;
    ctx.work = "acceptance_work";
    std::string checkpoint;
    app.add_option("--work", ctx.work, "Scratch directory for datasets, model and runs");
    app.add_option("--checkpoint", checkpoint, "Reuse a trained model instead of training one");
    CLI11_PARSE(app, argc, argv);
    ctx.checkpoint = checkpoint;
    fs::create_directories(ctx.work);

    struct Criterion {
        const char* id;
        const char* name;
        double limit;  // seconds, 0 for none
        std::function<Outcome()> run;
    };
    bool model_ready = false;
    auto with_model = [&](auto f) {
        return [&, f] {
            if (!model_ready) {
                prepare_model(ctx);
                model_ready = true;
            }
            return f(ctx);
        };
    };
    const std::vector<Criterion> criteria = {
        {"AC1", "guidance algebra", 5, guidance_suite},
        {"AC2", "diffusion core", 30, diffusion_suite},
        {"AC3", "gradient check", 60, gradient_check},
        {"AC4", "metric oracles", 60, metric_suite},
        {"AC5", "trend reproduction", 0, with_model(trend_reproduction)},
        {"AC6", "multi-modality", 0, with_model(multi_modality)},
        {"AC7", "reproducibility", 0, with_model(reproducibility)},
    };

    bool all = true;
    for (const auto& c : criteria) {
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("error: ") + e.what();
        }
        const double secs = seconds_since(t0);
        if (c.limit > 0 && secs >= c.limit) check(o, false, "runtime limit " + fmt("%.0f", c.limit) + " s");
        all = all && o.pass;
        std::printf("%s %s  %s: %s (%.1f s)\n", c.id, o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    return all ? 0 : 1;
}
