// hlab: dataset generation, training, sampling and evaluation for the toy
// multi-view guidance lab.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hlab/checkpoint.hpp"
#include "hlab/errors.hpp"
#include "hlab/harness.hpp"
#include "hlab/sampler.hpp"
#include "hlab/scene.hpp"

namespace fs = std::filesystem;
using namespace hlab;

namespace {

struct GuidanceFlags {
    std::string mode = "harmony";
    GuidanceConfig g;

    void add(CLI::App* cmd) {
        cmd->add_option("--mode", mode, "guidance: none | baseline | harmony")->capture_default_str();
        cmd->add_option("--s", g.s, "baseline scale")->capture_default_str();
        cmd->add_option("--s1", g.s1, "harmony scale on the input-view term (consistency)")->capture_default_str();
        cmd->add_option("--s2", g.s2, "harmony scale on the multi-view term (diversity)")->capture_default_str();
    }
    GuidanceConfig resolve() const {
        GuidanceConfig out = g;
        out.mode = parse_guidance_mode(mode);
        return out;
    }
};

void add_run_flags(CLI::App* cmd, RunConfig& cfg, GuidanceFlags* gf) {
    cmd->add_option("--dataset", cfg.dataset, "dataset directory")->required();
    cmd->add_option("--checkpoint", cfg.checkpoint, "model checkpoint")->required();
    if (gf) gf->add(cmd);
    cmd->add_option("--steps", cfg.steps, "DDIM steps")->capture_default_str();
    cmd->add_option("--instances", cfg.instances, "instances per input")->capture_default_str();
    cmd->add_option("--inputs", cfg.inputs, "number of eval inputs (0 = all)")->capture_default_str();
    cmd->add_option("--seed", cfg.seed, "run seed")->capture_default_str();
    cmd->add_option("--out", cfg.out_dir, "output root")->capture_default_str();
    cmd->add_option("--run-id", cfg.run_id, "run directory name under --out")->capture_default_str();
    cmd->add_option("--exemplars", cfg.exemplars, "exemplars per class prototype")->capture_default_str();
}

void print_report(const MetricReport& r) {
    std::printf("psnr %.4f  ssim %.4f  e_flow %.4f  d %.5f  s_var %.3g  cd %.4f  excluded %d\n", r.psnr,
                r.ssim, r.e_flow, r.d, r.s_var, r.cd, r.excluded_instances);
}

SweepPoint parse_pair(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw ConfigError("expected S1:S2, got '" + text + "'");
    return {GuidanceMode::harmony, 0.0, std::stod(text.substr(0, colon)), std::stod(text.substr(colon + 1))};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"toy multi-view diffusion guidance lab"};
    app.require_subcommand(1);

    // gen-data
    int count = 512;
    std::uint64_t data_seed = 0;
    fs::path data_out = "data";
    SceneConfig scene;
    auto* gen = app.add_subcommand("gen-data", "render a procedural turntable dataset");
    gen->add_option("--count", count, "number of scenes")->capture_default_str();
    gen->add_option("--seed", data_seed, "dataset seed")->capture_default_str();
    gen->add_option("--out", data_out, "output directory")->capture_default_str();
    gen->add_option("--views", scene.views, "views per scene")->capture_default_str();
    gen->add_option("--size", scene.size, "image size")->capture_default_str();
    gen->add_option("--col-width", scene.col_width, "texture columns per view step")->capture_default_str();

    // train
    TrainRunConfig tr;
    auto* train = app.add_subcommand("train", "train the denoiser");
    train->add_option("--dataset", tr.dataset, "dataset directory")->required();
    train->add_option("--out", tr.out_dir, "output directory")->capture_default_str();
    train->add_option("--scenes", tr.scenes, "scenes to use (0 = all)")->capture_default_str();
    train->add_option("--epochs", tr.train.epochs)->capture_default_str();
    train->add_option("--batch-size", tr.train.batch_size)->capture_default_str();
    train->add_option("--lr", tr.train.learning_rate)->capture_default_str();
    train->add_option("--p-drop", tr.train.p_drop, "per-condition dropout probability")->capture_default_str();
    train->add_option("--seed", tr.train.seed)->capture_default_str();
    train->add_option("--hidden", tr.model.hidden)->capture_default_str();
    train->add_option("--hidden-layers", tr.model.hidden_layers)->capture_default_str();
    train->add_option("--time-dim", tr.model.time_dim)->capture_default_str();
    train->add_option("--ref-dim", tr.model.ref_dim)->capture_default_str();
    train->add_option("--mv-dim", tr.model.mv_dim)->capture_default_str();
    train->add_option("--T", tr.model.T, "diffusion steps")->capture_default_str();
    train->add_option("--beta-start", tr.model.beta_start)->capture_default_str();
    train->add_option("--beta-end", tr.model.beta_end)->capture_default_str();

    // sample
    RunConfig sc;
    sc.run_id = "sample";
    GuidanceFlags sg;
    int sample_input = 0;
    auto* sample = app.add_subcommand("sample", "sample viewsets for one input");
    add_run_flags(sample, sc, &sg);
    sample->add_option("--input", sample_input, "dataset scene id used as reference")->capture_default_str();

    // eval
    RunConfig ec;
    ec.run_id = "eval";
    GuidanceFlags eg;
    bool no_images = false;
    auto* eval = app.add_subcommand("eval", "sample and score the eval split");
    add_run_flags(eval, ec, &eg);
    eval->add_flag("--no-images", no_images, "skip writing PNGs");

    // sweep
    RunConfig wc;
    wc.run_id = "sweep";
    std::vector<double> baseline_s;
    std::vector<std::string> harmony_pairs;
    std::vector<std::uint64_t> seeds;
    auto* sweep = app.add_subcommand("sweep", "evaluate a guidance grid over seeds");
    add_run_flags(sweep, wc, nullptr);
    sweep->add_option("--baseline-s", baseline_s, "baseline scales (default 0.5 1 1.5)");
    sweep->add_option("--harmony", harmony_pairs, "harmony S1:S2 pairs (default: s1 grid at s2=1, s2 grid at s1=2)");
    sweep->add_option("--seeds", seeds, "seeds (default 0..4)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            make_dataset(count, data_seed, data_out, scene);
            std::printf("wrote %d scenes to %s\n", count, data_out.string().c_str());
        } else if (train->parsed()) {
            const auto ckpt = run_train(tr);
            std::printf("wrote %s\n", ckpt.string().c_str());
        } else if (sample->parsed()) {
            sc.guidance = sg.resolve();
            if (!fs::exists(sc.checkpoint)) throw IoError("checkpoint not found: '" + sc.checkpoint.string() + "'");
            const auto p = load_checkpoint(sc.checkpoint);
            sc.validate(p.config.T);
            const auto data = load_dataset(sc.dataset);
            const DatasetEntry* entry = nullptr;
            for (const auto& e : data.entries) {
                if (e.id == sample_input) entry = &e;
            }
            if (!entry) throw ConfigError("no scene with id " + std::to_string(sample_input));
            const fs::path dir = sc.out_dir / sc.run_id;
            fs::create_directories(dir);
            auto resolved = to_json(sc);
            resolved["input"] = sample_input;
            std::ofstream(dir / "config.json") << resolved.dump(2) << "\n";
            const SampleOptions opt{sc.guidance, sc.steps};
            for (int k = 0; k < sc.instances; ++k) {
                const auto seed = instance_seed(sc.seed, static_cast<std::uint64_t>(sample_input),
                                                static_cast<std::uint64_t>(k));
                const auto vs = sample_viewset(p, entry->views.views[0], opt, Stream(seed, "sample"));
                const fs::path d = dir / std::to_string(sample_input) / std::to_string(k);
                fs::create_directories(d);
                for (std::size_t n = 0; n < vs.size(); ++n) write_png(d / (std::to_string(n) + ".png"), vs.views[n]);
            }
            std::printf("wrote %d instances to %s\n", sc.instances, dir.string().c_str());
        } else if (eval->parsed()) {
            ec.guidance = eg.resolve();
            ec.write_images = !no_images;
            const auto res = run_eval(ec);
            print_report(res.report);
        } else if (sweep->parsed()) {
            SweepGrid grid = SweepGrid::defaults();
            if (!baseline_s.empty() || !harmony_pairs.empty()) {
                grid.points.clear();
                for (double s : baseline_s) grid.points.push_back({GuidanceMode::baseline, s, 0.0, 0.0});
                for (const auto& h : harmony_pairs) grid.points.push_back(parse_pair(h));
            }
            if (!seeds.empty()) grid.seeds = seeds;
            const auto res = run_sweep(grid, wc);
            std::fputs(sweep_summary_csv(res).c_str(), stdout);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
