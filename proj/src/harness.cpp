#include "hlab/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hlab/checkpoint.hpp"
#include "hlab/errors.hpp"
#include "hlab/sampler.hpp"

namespace hlab {

namespace fs = std::filesystem;
using nlohmann::json;

void RunConfig::validate(int T) const {
    guidance.validate();
    if (steps < 1 || steps > T) {
        throw ConfigError("steps must be in [1, " + std::to_string(T) + "], got " + std::to_string(steps));
    }
    if (instances < 1) throw ConfigError("instances must be >= 1");
    if (inputs < 0) throw ConfigError("inputs must be >= 0");
    if (exemplars < 1) throw ConfigError("exemplars must be >= 1");
    if (run_id.empty()) throw ConfigError("run id must not be empty");
}

json to_json(const GuidanceConfig& g) {
    return {{"mode", to_string(g.mode)}, {"s", g.s}, {"s1", g.s1}, {"s2", g.s2}};
}

json to_json(const RunConfig& cfg) {
    return {{"dataset", cfg.dataset.generic_string()},
            {"checkpoint", cfg.checkpoint.generic_string()},
            {"guidance", to_json(cfg.guidance)},
            {"steps", cfg.steps},
            {"instances", cfg.instances},
            {"inputs", cfg.inputs},
            {"seed", cfg.seed},
            {"out_dir", cfg.out_dir.generic_string()},
            {"run_id", cfg.run_id},
            {"exemplars", cfg.exemplars},
            {"write_images", cfg.write_images}};
}

json to_json(const MetricReport& r) {
    return {{"psnr", r.psnr},
            {"ssim", r.ssim},
            {"psnr_avg", r.psnr_avg},
            {"ssim_avg", r.ssim_avg},
            {"e_flow", r.e_flow},
            {"d", r.d},
            {"s_var", r.s_var},
            {"cd", r.cd},
            {"inputs", r.inputs},
            {"instances", r.instances},
            {"excluded_instances", r.excluded_instances},
            {"degenerate", r.degenerate}};
}

namespace {

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path.string());
    f << text;
    if (!f) throw IoError("write failed: " + path.string());
}

double mean_view(const ViewSet& gt, const ViewSet& gen, double (*metric)(const Image&, const Image&)) {
    double acc = 0.0;
    for (std::size_t n = 0; n < gt.size(); ++n) acc += metric(gt.views[n], gen.views[n]);
    return acc / static_cast<double>(gt.size());
}

double ssim_default(const Image& a, const Image& b) { return ssim(a, b); }

void check_model_matches(const DenoiserParams& p, const SceneConfig& sc) {
    if (p.config.image_size != sc.size || p.config.views != sc.views) {
        throw ConfigError("checkpoint expects " + std::to_string(p.config.views) + " views of " +
                          std::to_string(p.config.image_size) + " px; dataset has " +
                          std::to_string(sc.views) + " views of " + std::to_string(sc.size) + " px");
    }
}

}  // namespace

InstanceGenerator model_generator(const DenoiserParams& p, const GuidanceConfig& g, int steps) {
    return [&p, g, steps](const DatasetEntry& input, int, std::uint64_t seed) {
        SampleOptions opt{g, steps};
        return sample_viewset(p, input.views.views.at(0), opt, Stream(seed, "sample"));
    };
}

std::map<SceneClass, Embedding> class_prototypes(const EncoderSpec& enc, int exemplars,
                                                 const SceneConfig& scene) {
    std::map<SceneClass, Embedding> out;
    for (auto cls : kSceneClasses) out[cls] = class_prototype(enc, class_exemplars(cls, exemplars, scene));
    return out;
}

EvalResult evaluate(const Dataset& data, const RunConfig& cfg, const InstanceGenerator& gen,
                    const std::function<void(int, int, const ViewSet&)>& on_instance) {
    if (cfg.instances < 1) throw ConfigError("instances must be >= 1");
    std::size_t count = data.entries.size();
    if (cfg.inputs > 0) count = std::min(count, static_cast<std::size_t>(cfg.inputs));
    if (count == 0) throw ConfigError("evaluate: empty eval split");

    const auto enc = toy_encoder();
    const auto protos = class_prototypes(enc, cfg.exemplars, data.config);

    EvalResult res;
    auto& rep = res.report;
    int with_cd = 0;
    for (std::size_t i = 0; i < count; ++i) {
        const auto& entry = data.entries[i];
        const auto& gt = entry.views;
        if (gt.size() == 0) throw IoError("evaluate: input " + std::to_string(entry.id) + " has no GT views");

        std::vector<ViewSet> samples;
        InputRecord in;
        in.input_id = entry.id;
        in.cls = to_string(entry.cls);
        for (int k = 0; k < cfg.instances; ++k) {
            const auto seed = instance_seed(cfg.seed, static_cast<std::uint64_t>(entry.id),
                                            static_cast<std::uint64_t>(k));
            auto vs = gen(entry, k, seed);
            if (vs.size() != gt.size()) throw ShapeError("evaluate: generated view count differs from GT");
            if (on_instance) on_instance(entry.id, k, vs);

            InstanceRecord r;
            r.input_id = entry.id;
            r.instance = k;
            r.seed = seed;
            r.psnr = mean_view(gt, vs, psnr);
            r.ssim = mean_view(gt, vs, ssim_default);
            r.e_flow = e_flow(gt, vs);
            res.instances.push_back(r);
            samples.push_back(std::move(vs));
        }

        const std::size_t first = res.instances.size() - static_cast<std::size_t>(cfg.instances);
        const auto& proto = protos.at(entry.cls);
        CdReport cd;
        bool any_cd = true;
        try {
            cd = cd_report(enc, gt.views[0], samples, proto);
        } catch (const DegenerateError&) {
            any_cd = false;
            // Still report D and S_Var per instance.
            const auto ref = embed(enc, gt.views[0]);
            for (const auto& vs : samples) {
                std::vector<Embedding> e;
                for (const auto& v : vs.views) e.push_back(embed(enc, v));
                CdInstance ci;
                ci.diversity = diversity(ref, e);
                ci.stats = semantic_variance(enc, proto, vs);
                cd.instances.push_back(ci);
            }
            cd.excluded = cfg.instances;
        }

        int best = 0;
        for (int k = 0; k < cfg.instances; ++k) {
            auto& r = res.instances[first + static_cast<std::size_t>(k)];
            const auto& ci = cd.instances[static_cast<std::size_t>(k)];
            r.d = ci.diversity;
            r.s_var = ci.stats.variance;
            r.cd = ci.cd;
            in.psnr_avg += r.psnr;
            in.ssim_avg += r.ssim;
            in.e_flow += r.e_flow;
            in.d += r.d;
            in.s_var += r.s_var;
            if (r.psnr > res.instances[first + static_cast<std::size_t>(best)].psnr) best = k;
        }
        const double inv = 1.0 / cfg.instances;
        in.psnr_avg *= inv;
        in.ssim_avg *= inv;
        in.e_flow *= inv;
        in.d *= inv;
        in.s_var *= inv;
        in.best_instance = best;
        in.psnr_best = res.instances[first + static_cast<std::size_t>(best)].psnr;
        in.ssim_best = res.instances[first + static_cast<std::size_t>(best)].ssim;
        if (any_cd) in.cd = cd.cd;
        in.excluded_instances = cd.excluded;

        rep.psnr += in.psnr_best;
        rep.ssim += in.ssim_best;
        rep.psnr_avg += in.psnr_avg;
        rep.ssim_avg += in.ssim_avg;
        rep.e_flow += in.e_flow;
        rep.d += in.d;
        rep.s_var += in.s_var;
        if (in.cd) {
            rep.cd += *in.cd;
            ++with_cd;
        }
        rep.excluded_instances += in.excluded_instances;
        res.inputs.push_back(in);
    }

    const double inv = 1.0 / static_cast<double>(count);
    rep.psnr *= inv;
    rep.ssim *= inv;
    rep.psnr_avg *= inv;
    rep.ssim_avg *= inv;
    rep.e_flow *= inv;
    rep.d *= inv;
    rep.s_var *= inv;
    if (with_cd > 0) rep.cd /= with_cd;
    rep.degenerate = with_cd == 0;
    rep.inputs = static_cast<int>(count);
    rep.instances = cfg.instances;
    return res;
}

std::string report_json(const RunConfig& cfg, const EvalResult& res) {
    json j;
    j["config"] = to_json(cfg);
    j["metrics"] = to_json(res.report);
    j["psnr_convention"] = "best";
    json inputs = json::array();
    for (const auto& in : res.inputs) {
        inputs.push_back({{"input", in.input_id},
                          {"class", in.cls},
                          {"best_instance", in.best_instance},
                          {"psnr_best", in.psnr_best},
                          {"ssim_best", in.ssim_best},
                          {"psnr_avg", in.psnr_avg},
                          {"ssim_avg", in.ssim_avg},
                          {"e_flow", in.e_flow},
                          {"d", in.d},
                          {"s_var", in.s_var},
                          {"cd", opt_json(in.cd)},
                          {"excluded_instances", in.excluded_instances}});
    }
    j["inputs"] = std::move(inputs);
    json inst = json::array();
    for (const auto& r : res.instances) {
        inst.push_back({{"input", r.input_id},
                        {"instance", r.instance},
                        {"seed", r.seed},
                        {"psnr", r.psnr},
                        {"ssim", r.ssim},
                        {"e_flow", r.e_flow},
                        {"d", r.d},
                        {"s_var", r.s_var},
                        {"cd", opt_json(r.cd)}});
    }
    j["instances"] = std::move(inst);
    return j.dump(2) + "\n";
}

std::string report_csv(const EvalResult& res) {
    const auto& r = res.report;
    return "psnr,ssim,e_flow,d,s_var,cd,excluded_instances\n" + num(r.psnr) + "," + num(r.ssim) + "," +
           num(r.e_flow) + "," + num(r.d) + "," + num(r.s_var) + "," + num(r.cd) + "," +
           std::to_string(r.excluded_instances) + "\n";
}

EvalResult run_eval(const RunConfig& cfg) {
    if (cfg.checkpoint.empty() || !fs::exists(cfg.checkpoint)) {
        throw IoError("checkpoint not found: '" + cfg.checkpoint.string() + "'");
    }
    const auto params = load_checkpoint(cfg.checkpoint);
    cfg.validate(params.config.T);
    const auto data = load_dataset(cfg.dataset, cfg.inputs);
    check_model_matches(params, data.config);

    const fs::path dir = cfg.out_dir / cfg.run_id;
    fs::create_directories(dir);
    write_text(dir / "config.json", to_json(cfg).dump(2) + "\n");

    std::function<void(int, int, const ViewSet&)> sink;
    if (cfg.write_images) {
        sink = [&dir](int input, int k, const ViewSet& vs) {
            const fs::path d = dir / std::to_string(input) / std::to_string(k);
            fs::create_directories(d);
            for (std::size_t n = 0; n < vs.size(); ++n) write_png(d / (std::to_string(n) + ".png"), vs.views[n]);
        };
    }
    auto res = evaluate(data, cfg, model_generator(params, cfg.guidance, cfg.steps), sink);
    write_text(dir / "report.json", report_json(cfg, res));
    write_text(dir / "report.csv", report_csv(res));
    return res;
}

// ------------------------------------------------------------ training

std::vector<TrainScene> train_scenes(const Dataset& data) {
    std::vector<TrainScene> out;
    out.reserve(data.entries.size());
    for (const auto& e : data.entries) {
        TrainScene s;
        for (const auto& v : e.views.views) {
            const auto d = to_diffusion(v);
            s.views.insert(s.views.end(), d.begin(), d.end());
        }
        out.push_back(std::move(s));
    }
    return out;
}

DenoiserParams train_model(const Dataset& data, const DenoiserConfig& model, const TrainConfig& train,
                           const std::function<void(const TrainLogRecord&)>& on_step) {
    model.validate();
    if (model.image_size != data.config.size || model.views != data.config.views) {
        throw ConfigError("model shape does not match the dataset scenes");
    }
    if (data.entries.empty()) throw ConfigError("train: dataset is empty");
    auto p = init_denoiser(model, train.seed);
    const auto scenes = train_scenes(data);
    hlab::train(p, scenes, data.entries[0].views.deltas, train, on_step);
    return p;
}

json to_json(const TrainRunConfig& cfg) {
    const auto& m = cfg.model;
    const auto& t = cfg.train;
    return {{"dataset", cfg.dataset.generic_string()},
            {"out_dir", cfg.out_dir.generic_string()},
            {"scenes", cfg.scenes},
            {"model",
             {{"image_size", m.image_size},
              {"views", m.views},
              {"hidden", m.hidden},
              {"hidden_layers", m.hidden_layers},
              {"time_dim", m.time_dim},
              {"ref_dim", m.ref_dim},
              {"mv_dim", m.mv_dim},
              {"T", m.T},
              {"beta_start", m.beta_start},
              {"beta_end", m.beta_end}}},
            {"train",
             {{"epochs", t.epochs},
              {"batch_size", t.batch_size},
              {"learning_rate", t.learning_rate},
              {"p_drop", t.p_drop},
              {"seed", t.seed}}}};
}

fs::path run_train(const TrainRunConfig& cfg) {
    cfg.model.validate();
    cfg.train.validate();
    if (cfg.scenes < 0) throw ConfigError("scenes must be >= 0");
    const auto data = load_dataset(cfg.dataset, cfg.scenes);
    fs::create_directories(cfg.out_dir);
    write_text(cfg.out_dir / "config.json", to_json(cfg).dump(2) + "\n");

    std::ofstream log(cfg.out_dir / "train_log.jsonl", std::ios::binary);
    if (!log) throw IoError("cannot write " + (cfg.out_dir / "train_log.jsonl").string());
    const auto p = train_model(data, cfg.model, cfg.train, [&log](const TrainLogRecord& r) {
        log << json{{"step", r.step}, {"loss", r.loss}, {"seed", r.seed}}.dump() << "\n";
    });
    const auto ckpt = cfg.out_dir / "model.ckpt";
    save_checkpoint(ckpt, p);
    return ckpt;
}

// ------------------------------------------------------------ sweeps

GuidanceConfig SweepPoint::guidance() const {
    GuidanceConfig g;
    g.mode = mode;
    g.s = s;
    g.s1 = s1;
    g.s2 = s2;
    return g;
}

SweepGrid SweepGrid::defaults() {
    SweepGrid g;
    for (double s : {0.5, 1.0, 1.5}) g.points.push_back({GuidanceMode::baseline, s, 0.0, 0.0});
    for (double s1 : {0.0, 1.0, 2.0, 3.0}) g.points.push_back({GuidanceMode::harmony, 0.0, s1, 1.0});
    for (double s2 : {0.0, 0.6, 0.8, 1.0, 1.2}) {
        SweepPoint p{GuidanceMode::harmony, 0.0, 2.0, s2};
        if (std::find(g.points.begin(), g.points.end(), p) == g.points.end()) g.points.push_back(p);
    }
    g.seeds = {0, 1, 2, 3, 4};
    return g;
}

void SweepGrid::validate() const {
    if (points.empty()) throw ConfigError("sweep grid has no points");
    if (seeds.empty()) throw ConfigError("sweep grid has no seeds");
    for (const auto& p : points) p.guidance().validate();
}

SweepResult sweep(const Dataset& data, const DenoiserParams& p, const SweepGrid& grid,
                  const RunConfig& base) {
    grid.validate();
    SweepResult res;
    for (const auto& pt : grid.points) {
        SweepSummaryRow sum;
        sum.point = pt;
        for (auto seed : grid.seeds) {
            RunConfig cfg = base;
            cfg.guidance = pt.guidance();
            cfg.seed = seed;
            cfg.validate(p.config.T);
            const auto r = evaluate(data, cfg, model_generator(p, cfg.guidance, cfg.steps)).report;
            res.rows.push_back({pt, seed, r});
            auto& m = sum.mean;
            m.psnr += r.psnr;
            m.ssim += r.ssim;
            m.psnr_avg += r.psnr_avg;
            m.ssim_avg += r.ssim_avg;
            m.e_flow += r.e_flow;
            m.d += r.d;
            m.s_var += r.s_var;
            m.cd += r.cd;
            m.excluded_instances += r.excluded_instances;
            m.degenerate = m.degenerate || r.degenerate;
            m.inputs = r.inputs;
            m.instances = r.instances;
            ++sum.seeds;
        }
        auto& m = sum.mean;
        const double inv = 1.0 / sum.seeds;
        m.psnr *= inv;
        m.ssim *= inv;
        m.psnr_avg *= inv;
        m.ssim_avg *= inv;
        m.e_flow *= inv;
        m.d *= inv;
        m.s_var *= inv;
        m.cd *= inv;
        res.summary.push_back(sum);
    }
    return res;
}

namespace {

std::string point_cols(const SweepPoint& p) {
    return to_string(p.mode) + "," + num(p.s) + "," + num(p.s1) + "," + num(p.s2);
}

std::string metric_cols(const MetricReport& r) {
    return num(r.psnr) + "," + num(r.ssim) + "," + num(r.psnr_avg) + "," + num(r.ssim_avg) + "," +
           num(r.e_flow) + "," + num(r.d) + "," + num(r.s_var) + "," + num(r.cd) + "," +
           std::to_string(r.excluded_instances);
}

}  // namespace

std::string sweep_csv(const SweepResult& res) {
    std::ostringstream os;
    os << "mode,s,s1,s2,seed,psnr,ssim,psnr_avg,ssim_avg,e_flow,d,s_var,cd,excluded_instances\n";
    for (const auto& r : res.rows) os << point_cols(r.point) << "," << r.seed << "," << metric_cols(r.report) << "\n";
    return os.str();
}

std::string sweep_summary_csv(const SweepResult& res) {
    std::ostringstream os;
    // psnr/ssim are the best-instance values; *_avg average over instances.
    os << "mode,s,s1,s2,seeds,psnr_best,ssim_best,psnr_avg,ssim_avg,e_flow,d,s_var,cd,excluded_instances\n";
    for (const auto& r : res.summary) os << point_cols(r.point) << "," << r.seeds << "," << metric_cols(r.mean) << "\n";
    return os.str();
}

SweepResult run_sweep(const SweepGrid& grid, const RunConfig& base) {
    grid.validate();
    if (base.checkpoint.empty() || !fs::exists(base.checkpoint)) {
        throw IoError("checkpoint not found: '" + base.checkpoint.string() + "'");
    }
    const auto params = load_checkpoint(base.checkpoint);
    const auto data = load_dataset(base.dataset, base.inputs);
    check_model_matches(params, data.config);

    const fs::path dir = base.out_dir / base.run_id;
    fs::create_directories(dir);
    json cfg = to_json(base);
    cfg.erase("guidance");
    cfg.erase("seed");
    json pts = json::array();
    for (const auto& p : grid.points) pts.push_back(to_json(p.guidance()));
    cfg["grid"] = {{"points", pts}, {"seeds", grid.seeds}};
    write_text(dir / "config.json", cfg.dump(2) + "\n");

    auto res = sweep(data, params, grid, base);
    write_text(dir / "sweep.csv", sweep_csv(res));
    write_text(dir / "sweep_summary.csv", sweep_summary_csv(res));
    return res;
}

}  // namespace hlab
