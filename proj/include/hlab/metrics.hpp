#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hlab/image.hpp"

namespace hlab {

// ------------------------------------------------------------ fidelity

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) over all RGB samples, capped at kPsnrCap.
double psnr(const Image& a, const Image& b);

struct SsimOptions {
    int window = 8;
    int stride = 4;
    double c1 = 0.01 * 0.01;
    double c2 = 0.03 * 0.03;
};

/// Mean local SSIM of the luma channels over a strided grid of square
/// windows (population statistics per window).
double ssim(const Image& a, const Image& b, const SsimOptions& opt = {});

// ------------------------------------------------------------ flow

/// Exhaustive block matching: for each block of `a`, the displacement within
/// +-radius (periodic boundary) minimizing the RGB sum of absolute
/// differences against `b`. Ties go to the smallest |dx|+|dy|, then the
/// smallest dx, then the smallest dy.
FlowField block_flow(const Image& a, const Image& b, int block = 4, int radius = 4);

/// Mean L1 distance between flow vectors over pixels valid in both fields.
double flow_l1(const FlowField& f, const FlowField& g);

/// Mean over cyclic adjacent pairs (n, n+1 mod N) of flow_l1 between the
/// block flows of the reference and generated view sequences.
double e_flow(const ViewSet& gt, const ViewSet& gen);

// ------------------------------------------------------------ embeddings

/// Unit-norm feature vector.
struct Embedding {
    std::vector<double> v;
    double dot(const Embedding& o) const;
};

/// A named deterministic image encoder. `features` returns the raw
/// (unnormalized) feature vector; embed() normalizes it.
struct EncoderSpec {
    std::string name;
    std::size_t dims = 0;
    std::function<std::vector<double>(const Image&)> features;
};

/// 3x3x3 RGB histogram (27, fractions) followed by 4x4 mean-pooled luma (16).
EncoderSpec toy_encoder();

/// Throws DegenerateError for an all-zero feature vector.
Embedding embed(const EncoderSpec& enc, const Image& img);
Embedding normalize_features(std::vector<double> features);

double cosine(const Embedding& a, const Embedding& b);

/// Normalized mean of exemplar embeddings; stands in for a text embedding of
/// the class name.
Embedding class_prototype(const EncoderSpec& enc, const std::vector<Image>& exemplars);

// ------------------------------------------------------------ CD score

/// (1/N) sum_n [1 - cos(E(ref), E(view_n))].
double diversity(const EncoderSpec& enc, const Image& ref, const ViewSet& views);
double diversity(const Embedding& ref, const std::vector<Embedding>& views);

struct SemanticStats {
    std::vector<double> sims;
    double mean = 0.0;
    double variance = 0.0;  // population (1/N)
};

SemanticStats semantic_variance(const EncoderSpec& enc, const Embedding& prototype,
                                const ViewSet& views);
SemanticStats semantic_stats(std::vector<double> sims);

inline constexpr double kMinSemanticVariance = 1e-12;

/// D / S_Var. Throws DegenerateError when S_Var < kMinSemanticVariance.
double cd_score(double diversity_value, const SemanticStats& stats);

struct CdInstance {
    double diversity = 0.0;
    SemanticStats stats;
    std::optional<double> cd;  // empty when degenerate
};

struct CdReport {
    double cd = 0.0;  // mean over non-degenerate instances
    int excluded = 0;
    std::vector<CdInstance> instances;
};

/// Per-instance CD, averaged over non-degenerate instances. Throws
/// DegenerateError when every instance is degenerate.
CdReport cd_report(const EncoderSpec& enc, const Image& ref, const std::vector<ViewSet>& instances,
                   const Embedding& prototype);

// ------------------------------------------------------------ reports

struct MetricReport {
    double psnr = 0.0;  // best-matched instance per input
    double ssim = 0.0;
    double psnr_avg = 0.0;  // mean over instances
    double ssim_avg = 0.0;
    double e_flow = 0.0;
    double d = 0.0;
    double s_var = 0.0;
    double cd = 0.0;
    int inputs = 0;
    int instances = 0;
    int excluded_instances = 0;
    bool degenerate = false;
};

}  // namespace hlab
