#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hlab/denoiser.hpp"
#include "hlab/guidance.hpp"
#include "hlab/metrics.hpp"
#include "hlab/scene.hpp"
#include "hlab/trainer.hpp"

namespace hlab {

struct RunConfig {
    std::filesystem::path dataset;
    std::filesystem::path checkpoint;
    GuidanceConfig guidance;
    int steps = 50;
    int instances = 4;
    int inputs = 20;  // eval split size; 0 = every scene in the dataset
    std::uint64_t seed = 0;
    std::filesystem::path out_dir = "out";
    std::string run_id = "run";
    int exemplars = 64;  // per class, for the semantic prototypes
    bool write_images = true;

    void validate(int T) const;
};

nlohmann::json to_json(const RunConfig& cfg);
nlohmann::json to_json(const GuidanceConfig& g);
nlohmann::json to_json(const MetricReport& r);

/// Metrics of one sampled instance.
struct InstanceRecord {
    int input_id = 0;
    int instance = 0;
    std::uint64_t seed = 0;
    double psnr = 0.0;  // mean over views
    double ssim = 0.0;
    double e_flow = 0.0;
    double d = 0.0;
    double s_var = 0.0;
    std::optional<double> cd;
};

struct InputRecord {
    int input_id = 0;
    std::string cls;
    int best_instance = 0;
    double psnr_best = 0.0;
    double ssim_best = 0.0;
    double psnr_avg = 0.0;
    double ssim_avg = 0.0;
    double e_flow = 0.0;
    double d = 0.0;
    double s_var = 0.0;
    std::optional<double> cd;
    int excluded_instances = 0;
};

struct EvalResult {
    MetricReport report;
    std::vector<InputRecord> inputs;
    std::vector<InstanceRecord> instances;
};

/// Produces the viewset for (input, instance). The default samples from the
/// model; tests substitute oracles.
using InstanceGenerator = std::function<ViewSet(const DatasetEntry& input, int instance, std::uint64_t seed)>;

InstanceGenerator model_generator(const DenoiserParams& p, const GuidanceConfig& g, int steps);

/// Class prototypes from procedurally rendered exemplars.
std::map<SceneClass, Embedding> class_prototypes(const EncoderSpec& enc, int exemplars,
                                                 const SceneConfig& scene = {});

/// Evaluates the first cfg.inputs scenes of `data`. `on_instance`, when
/// set, receives every generated viewset (e.g. to write PNGs).
EvalResult evaluate(const Dataset& data, const RunConfig& cfg, const InstanceGenerator& gen,
                    const std::function<void(int input_id, int instance, const ViewSet&)>& on_instance = {});

/// Loads checkpoint and dataset, evaluates, and writes
/// out_dir/run_id/{config.json, report.json, report.csv} plus, if enabled,
/// out_dir/run_id/<input>/<instance>/<view>.png.
EvalResult run_eval(const RunConfig& cfg);

/// Serializations written by run_eval.
std::string report_json(const RunConfig& cfg, const EvalResult& res);
std::string report_csv(const EvalResult& res);

// ------------------------------------------------------------ training

/// Clean views of each dataset scene in the diffusion range.
std::vector<TrainScene> train_scenes(const Dataset& data);

/// Initializes from train.seed and trains on every scene of `data`.
DenoiserParams train_model(const Dataset& data, const DenoiserConfig& model, const TrainConfig& train,
                           const std::function<void(const TrainLogRecord&)>& on_step = {});

struct TrainRunConfig {
    std::filesystem::path dataset;
    std::filesystem::path out_dir = "model";
    int scenes = 0;  // 0 = all
    DenoiserConfig model;
    TrainConfig train;
};

nlohmann::json to_json(const TrainRunConfig& cfg);

/// Writes out_dir/{model.ckpt, train_log.jsonl, config.json}; returns the
/// checkpoint path.
std::filesystem::path run_train(const TrainRunConfig& cfg);

// ------------------------------------------------------------ sweeps

struct SweepPoint {
    GuidanceMode mode = GuidanceMode::harmony;
    double s = 0.0;
    double s1 = 0.0;
    double s2 = 0.0;

    GuidanceConfig guidance() const;
    bool operator==(const SweepPoint&) const = default;
};

struct SweepGrid {
    std::vector<SweepPoint> points;
    std::vector<std::uint64_t> seeds;

    /// Baseline s in {0.5, 1, 1.5}; harmony s1 in {0,1,2,3} at s2 = 1 and
    /// s2 in {0, 0.6, 0.8, 1.0, 1.2} at s1 = 2 (duplicates removed).
    static SweepGrid defaults();
    void validate() const;
};

struct SweepRow {
    SweepPoint point;
    std::uint64_t seed = 0;
    MetricReport report;
};

struct SweepSummaryRow {
    SweepPoint point;
    int seeds = 0;
    MetricReport mean;  // per-metric mean over seeds
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::vector<SweepSummaryRow> summary;
};

SweepResult sweep(const Dataset& data, const DenoiserParams& p, const SweepGrid& grid,
                  const RunConfig& base);

/// Loads inputs, runs the grid and writes sweep.csv, sweep_summary.csv and
/// config.json under out_dir/run_id.
SweepResult run_sweep(const SweepGrid& grid, const RunConfig& base);

std::string sweep_csv(const SweepResult& res);
std::string sweep_summary_csv(const SweepResult& res);

}  // namespace hlab
