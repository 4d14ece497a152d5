#include "hlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <tuple>

#include "hlab/errors.hpp"

namespace hlab {

namespace {

void require_same_shape(const Image& a, const Image& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": image shapes differ");
    }
}

int wrap(int v, int m) { return ((v % m) + m) % m; }

}  // namespace

double psnr(const Image& a, const Image& b) {
    require_same_shape(a, b, "psnr");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        const double d = static_cast<double>(a.values[i]) - b.values[i];
        acc += d * d;
    }
    if (acc == 0.0) return kPsnrCap;
    const double mse = acc / static_cast<double>(a.values.size());
    return std::clamp(10.0 * std::log10(1.0 / mse), 0.0, kPsnrCap);
}

double ssim(const Image& a, const Image& b, const SsimOptions& opt) {
    require_same_shape(a, b, "ssim");
    if (a.height < opt.window || a.width < opt.window) {
        throw ShapeError("ssim: image smaller than the window");
    }
    const auto ga = a.gray();
    const auto gb = b.gray();
    const double area = static_cast<double>(opt.window) * opt.window;
    double total = 0.0;
    int count = 0;
    for (int y0 = 0; y0 + opt.window <= a.height; y0 += opt.stride) {
        for (int x0 = 0; x0 + opt.window <= a.width; x0 += opt.stride) {
            double sa = 0.0, sb = 0.0;
            for (int y = y0; y < y0 + opt.window; ++y) {
                for (int x = x0; x < x0 + opt.window; ++x) {
                    const auto i = static_cast<std::size_t>(y) * a.width + x;
                    sa += ga[i];
                    sb += gb[i];
                }
            }
            const double ma = sa / area;
            const double mb = sb / area;
            double va = 0.0, vb = 0.0, cov = 0.0;
            for (int y = y0; y < y0 + opt.window; ++y) {
                for (int x = x0; x < x0 + opt.window; ++x) {
                    const auto i = static_cast<std::size_t>(y) * a.width + x;
                    const double da = ga[i] - ma;
                    const double db = gb[i] - mb;
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
            }
            va /= area;
            vb /= area;
            cov /= area;
            const double num = (2.0 * ma * mb + opt.c1) * (2.0 * cov + opt.c2);
            const double den = (ma * ma + mb * mb + opt.c1) * (va + vb + opt.c2);
            total += num / den;
            ++count;
        }
    }
    return total / count;
}

FlowField block_flow(const Image& a, const Image& b, int block, int radius) {
    require_same_shape(a, b, "block_flow");
    if (block < 1 || block > std::min(a.height, a.width)) {
        throw ShapeError("block_flow: block size must lie in [1, min(H, W)]");
    }
    if (radius < 0) throw ShapeError("block_flow: radius must be >= 0");
    const int h = a.height;
    const int w = a.width;
    FlowField flow(h, w);
    for (int by = 0; by < h; by += block) {
        for (int bx = 0; bx < w; bx += block) {
            const int ey = std::min(by + block, h);
            const int ex = std::min(bx + block, w);
            // (sad, |dx|+|dy|, dx, dy), compared lexicographically.
            std::tuple<double, int, int, int> best{std::numeric_limits<double>::infinity(), 0, 0, 0};
            for (int dy = -radius; dy <= radius; ++dy) {
                for (int dx = -radius; dx <= radius; ++dx) {
                    double sad = 0.0;
                    for (int y = by; y < ey; ++y) {
                        const int yb = wrap(y + dy, h);
                        for (int x = bx; x < ex; ++x) {
                            const int xb = wrap(x + dx, w);
                            for (int c = 0; c < Image::channels; ++c) {
                                sad += std::abs(static_cast<double>(a.at(y, x, c)) - b.at(yb, xb, c));
                            }
                        }
                    }
                    const std::tuple<double, int, int, int> cand{sad, std::abs(dx) + std::abs(dy), dx, dy};
                    if (cand < best) best = cand;
                }
            }
            for (int y = by; y < ey; ++y) {
                for (int x = bx; x < ex; ++x) {
                    const auto i = flow.index(y, x);
                    flow.dx[i] = static_cast<float>(std::get<2>(best));
                    flow.dy[i] = static_cast<float>(std::get<3>(best));
                    flow.valid[i] = 1;
                }
            }
        }
    }
    return flow;
}

double flow_l1(const FlowField& f, const FlowField& g) {
    if (f.height != g.height || f.width != g.width) throw ShapeError("flow_l1: field shapes differ");
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < f.dx.size(); ++i) {
        if (!f.valid[i] || !g.valid[i]) continue;
        acc += std::abs(static_cast<double>(f.dx[i]) - g.dx[i]) +
               std::abs(static_cast<double>(f.dy[i]) - g.dy[i]);
        ++n;
    }
    return n == 0 ? 0.0 : acc / static_cast<double>(n);
}

double e_flow(const ViewSet& gt, const ViewSet& gen) {
    if (gt.size() != gen.size()) throw ShapeError("e_flow: view counts differ");
    if (gt.size() < 2) throw ShapeError("e_flow: need at least 2 views");
    const std::size_t n = gt.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = (i + 1) % n;
        require_same_shape(gt.views[i], gen.views[i], "e_flow");
        const auto fg = block_flow(gt.views[i], gt.views[j]);
        const auto fs = block_flow(gen.views[i], gen.views[j]);
        acc += flow_l1(fg, fs);
    }
    return acc / static_cast<double>(n);
}

// ------------------------------------------------------------ embeddings

double Embedding::dot(const Embedding& o) const {
    require_same_size(v.size(), o.v.size(), "Embedding::dot");
    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) acc += v[i] * o.v[i];
    return acc;
}

EncoderSpec toy_encoder() {
    EncoderSpec enc;
    enc.name = "toy-hist27-pool16";
    enc.dims = 43;
    enc.features = [](const Image& img) {
        std::vector<double> f(43, 0.0);
        const double pixels = static_cast<double>(img.height) * img.width;
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                int bin = 0;
                for (int c = 0; c < 3; ++c) {
                    const int q = std::clamp(static_cast<int>(img.at(y, x, c) * 3.0f), 0, 2);
                    bin = bin * 3 + q;
                }
                f[static_cast<std::size_t>(bin)] += 1.0 / pixels;
            }
        }
        const auto g = img.gray();
        for (int cy = 0; cy < 4; ++cy) {
            const int y0 = cy * img.height / 4;
            const int y1 = (cy + 1) * img.height / 4;
            for (int cx = 0; cx < 4; ++cx) {
                const int x0 = cx * img.width / 4;
                const int x1 = (cx + 1) * img.width / 4;
                double acc = 0.0;
                for (int y = y0; y < y1; ++y) {
                    for (int x = x0; x < x1; ++x) acc += g[static_cast<std::size_t>(y) * img.width + x];
                }
                const double area = static_cast<double>(y1 - y0) * (x1 - x0);
                f[27 + static_cast<std::size_t>(cy) * 4 + cx] = area > 0 ? acc / area : 0.0;
            }
        }
        return f;
    };
    return enc;
}

Embedding normalize_features(std::vector<double> features) {
    double norm = 0.0;
    for (double v : features) norm += v * v;
    norm = std::sqrt(norm);
    if (!(norm > 0.0) || !std::isfinite(norm)) {
        throw DegenerateError("embedding: zero or non-finite feature vector");
    }
    for (double& v : features) v /= norm;
    return Embedding{std::move(features)};
}

Embedding embed(const EncoderSpec& enc, const Image& img) {
    auto f = enc.features(img);
    if (enc.dims != 0) require_same_size(f.size(), enc.dims, "embed");
    return normalize_features(std::move(f));
}

double cosine(const Embedding& a, const Embedding& b) { return a.dot(b); }

Embedding class_prototype(const EncoderSpec& enc, const std::vector<Image>& exemplars) {
    if (exemplars.empty()) throw ShapeError("class_prototype: no exemplars");
    std::vector<double> mean;
    for (const auto& img : exemplars) {
        const auto e = embed(enc, img);
        if (mean.empty()) mean.assign(e.v.size(), 0.0);
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += e.v[i];
    }
    for (double& v : mean) v /= static_cast<double>(exemplars.size());
    return normalize_features(std::move(mean));
}

// ------------------------------------------------------------ CD score

double diversity(const Embedding& ref, const std::vector<Embedding>& views) {
    if (views.empty()) throw ShapeError("diversity: no views");
    double acc = 0.0;
    for (const auto& v : views) acc += 1.0 - cosine(ref, v);
    return acc / static_cast<double>(views.size());
}

double diversity(const EncoderSpec& enc, const Image& ref, const ViewSet& views) {
    std::vector<Embedding> es;
    es.reserve(views.size());
    for (const auto& v : views.views) es.push_back(embed(enc, v));
    return diversity(embed(enc, ref), es);
}

SemanticStats semantic_stats(std::vector<double> sims) {
    if (sims.empty()) throw ShapeError("semantic_variance: no views");
    SemanticStats s;
    s.sims = std::move(sims);
    const double n = static_cast<double>(s.sims.size());
    double acc = 0.0;
    for (double v : s.sims) acc += v;
    s.mean = acc / n;
    double var = 0.0;
    for (double v : s.sims) var += (v - s.mean) * (v - s.mean);
    s.variance = var / n;
    return s;
}

SemanticStats semantic_variance(const EncoderSpec& enc, const Embedding& prototype,
                                const ViewSet& views) {
    std::vector<double> sims;
    sims.reserve(views.size());
    for (const auto& v : views.views) sims.push_back(cosine(prototype, embed(enc, v)));
    return semantic_stats(std::move(sims));
}

double cd_score(double diversity_value, const SemanticStats& stats) {
    if (stats.variance < 0.0) throw ShapeError("cd_score: negative semantic variance");
    if (stats.variance < kMinSemanticVariance) {
        throw DegenerateError("cd_score: semantic variance below 1e-12");
    }
    return diversity_value / stats.variance;
}

CdReport cd_report(const EncoderSpec& enc, const Image& ref, const std::vector<ViewSet>& instances,
                   const Embedding& prototype) {
    if (instances.empty()) throw ShapeError("cd_report: no instances");
    CdReport rep;
    const auto ref_e = embed(enc, ref);
    double acc = 0.0;
    int used = 0;
    for (const auto& inst : instances) {
        std::vector<Embedding> es;
        std::vector<double> sims;
        for (const auto& v : inst.views) {
            es.push_back(embed(enc, v));
            sims.push_back(cosine(prototype, es.back()));
        }
        CdInstance ci;
        ci.diversity = diversity(ref_e, es);
        ci.stats = semantic_stats(std::move(sims));
        try {
            ci.cd = cd_score(ci.diversity, ci.stats);
            acc += *ci.cd;
            ++used;
        } catch (const DegenerateError&) {
            ++rep.excluded;
        }
        rep.instances.push_back(std::move(ci));
    }
    if (used == 0) throw DegenerateError("cd_report: every instance has degenerate semantic variance");
    rep.cd = acc / used;
    return rep;
}

}  // namespace hlab
