#include "hlab/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>

#include "hlab/errors.hpp"
#include "hlab/rng.hpp"

namespace hlab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kReliefSeed = 0x7e11efULL;
constexpr std::uint64_t kExemplarSeed = 0xe8e3b1a2ULL;
constexpr float kReliefLow = 0.05f;
constexpr double kReliefLowFraction = 0.65;
constexpr float kColorJitter = 0.08f;

struct ClassColors {
    Rgb a;
    Rgb b;
};

// Front color families per class; seeds jitter around these.
ClassColors class_colors(SceneClass c) {
    switch (c) {
        case SceneClass::stripes: return {{0.92f, 0.92f, 0.88f}, {0.18f, 0.18f, 0.22f}};
        case SceneClass::checker: return {{0.95f, 0.55f, 0.10f}, {0.45f, 0.12f, 0.60f}};
        case SceneClass::blob: return {{0.10f, 0.60f, 0.60f}, {0.95f, 0.50f, 0.72f}};
    }
    return {};
}

Rgb jitter(const Rgb& base, Stream& rng) {
    Rgb out;
    for (int c = 0; c < 3; ++c) {
        const double d = (2.0 * rng.uniform() - 1.0) * kColorJitter;
        out[c] = std::clamp(static_cast<float>(base[c] + d), 0.0f, 1.0f);
    }
    return out;
}

int wrap(int v, int m) { return ((v % m) + m) % m; }

}  // namespace

std::string to_string(SceneClass c) {
    switch (c) {
        case SceneClass::stripes: return "stripes";
        case SceneClass::checker: return "checker";
        case SceneClass::blob: return "blob";
    }
    return "unknown";
}

SceneClass parse_scene_class(const std::string& name) {
    for (auto c : kSceneClasses) {
        if (to_string(c) == name) return c;
    }
    throw ConfigError("unknown scene class '" + name + "'");
}

void SceneConfig::validate() const {
    if (views < 2) throw ConfigError("SceneConfig: need at least 2 views");
    if (size < 4 || col_width < 1) throw ConfigError("SceneConfig: size >= 4 and col_width >= 1");
    if (size > texture_width()) throw ConfigError("SceneConfig: view wider than the texture");
    if (texture_width() % 4 != 0) throw ConfigError("SceneConfig: texture width must split into quarters");
}

const std::array<Rgb, kPaletteSize>& back_palette() {
    static const std::array<Rgb, kPaletteSize> palette = {{
        {0.85f, 0.15f, 0.15f},  // red
        {0.15f, 0.75f, 0.20f},  // green
        {0.15f, 0.25f, 0.85f},  // blue
        {0.90f, 0.85f, 0.15f},  // yellow
    }};
    return palette;
}

bool Scene::is_back_column(int col) const {
    const int w = config.texture_width();
    const int c = wrap(col, w);
    return c >= w / 4 && c < 3 * w / 4;
}

Scene gen_scene(std::uint64_t seed, SceneClass cls, const SceneConfig& config) {
    config.validate();
    Scene s;
    s.config = config;
    s.seed = seed;
    s.cls = cls;

    Stream front(seed, "front");
    Stream back(seed, "back");
    s.back_color = static_cast<int>(back.below(kPaletteSize));

    const auto colors = class_colors(cls);
    s.front_a = jitter(colors.a, front);
    s.front_b = jitter(colors.b, front);

    const int h = config.size;
    const int w = config.texture_width();
    const int half = w / 2;
    const int phase_x = static_cast<int>(front.below(4));
    const int phase_y = static_cast<int>(front.below(4));
    // Blob geometry in front-local texel coordinates.
    const double blob_cx = half / 2.0 + (front.uniform() * 4.0 - 2.0);
    const double blob_cy = h / 2.0 + (front.uniform() * 4.0 - 2.0);
    const double blob_r = 3.0 + front.uniform() * 2.0;

    s.texture = Image(h, w);
    const Rgb& back_rgb = back_palette()[static_cast<std::size_t>(s.back_color)];
    for (int row = 0; row < h; ++row) {
        for (int col = 0; col < w; ++col) {
            const Rgb* px = &back_rgb;
            if (!s.is_back_column(col)) {
                // f runs 0..half-1 left to right across the front half.
                const int f = wrap(col + w / 4, w);
                bool use_a = true;
                switch (cls) {
                    case SceneClass::stripes: use_a = ((f + phase_x) / 2) % 2 == 0; break;
                    case SceneClass::checker:
                        use_a = (((f + phase_x) / 4) + ((row + phase_y) / 4)) % 2 == 0;
                        break;
                    case SceneClass::blob: {
                        const double dx = f + 0.5 - blob_cx;
                        const double dy = row + 0.5 - blob_cy;
                        use_a = dx * dx + dy * dy > blob_r * blob_r;
                        break;
                    }
                }
                px = use_a ? &s.front_a : &s.front_b;
            }
            for (int c = 0; c < 3; ++c) s.texture.at(row, col, c) = (*px)[c];
        }
    }
    return s;
}

int view_column(const SceneConfig& config, int n, int x) {
    // Mirrored so that content moves +col_width pixels from view n to n+1.
    return wrap(n * config.col_width + config.size / 2 - 1 - x, config.texture_width());
}

float surface_relief(const SceneConfig& config, int row, int col) {
    const int w = config.texture_width();
    Stream rng(kReliefSeed, "relief", static_cast<std::uint64_t>(row) * w + wrap(col, w));
    return rng.uniform() < kReliefLowFraction ? kReliefLow : 1.0f;
}

float shading_factor(const SceneConfig& config, int n, int y, int x) {
    const double offset_deg = (config.size / 2.0 - x - 0.5) * config.column_degrees();
    const double cosine = 0.5 + 0.5 * std::cos(offset_deg * std::numbers::pi / 180.0);
    return static_cast<float>(cosine) * surface_relief(config, y, view_column(config, n, x));
}

namespace {

void check_view_index(const SceneConfig& config, int n) {
    if (n < 0 || n >= config.views) {
        throw IndexError("view index " + std::to_string(n) + " outside [0, " +
                         std::to_string(config.views) + ")");
    }
}

}  // namespace

Image render_view(const Scene& scene, int n) {
    const auto& cfg = scene.config;
    check_view_index(cfg, n);
    Image img(cfg.size, cfg.size);
    for (int y = 0; y < cfg.size; ++y) {
        for (int x = 0; x < cfg.size; ++x) {
            const int col = view_column(cfg, n, x);
            const float f = shading_factor(cfg, n, y, x);
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = scene.texture.at(y, col, c) * f;
        }
    }
    return img;
}

ViewSet render_viewset(const Scene& scene) {
    std::vector<Image> views;
    views.reserve(static_cast<std::size_t>(scene.config.views));
    for (int n = 0; n < scene.config.views; ++n) views.push_back(render_view(scene, n));
    return ViewSet::from_views(std::move(views));
}

Image unshade(const SceneConfig& config, const Image& view, int n) {
    check_view_index(config, n);
    Image out = view;
    for (int y = 0; y < view.height; ++y) {
        for (int x = 0; x < view.width; ++x) {
            const float f = shading_factor(config, n, y, x);
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = view.at(y, x, c) / f;
        }
    }
    return out;
}

Rgb estimate_back_albedo(const SceneConfig& config, const Image& view, int n) {
    check_view_index(config, n);
    const int w = config.texture_width();
    bool any_back = false;
    for (int x = 0; x < view.width; ++x) {
        const int col = view_column(config, n, x);
        if (col >= w / 4 && col < 3 * w / 4) any_back = true;
    }
    std::array<double, 3> num{};
    double den = 0.0;
    for (int y = 0; y < view.height; ++y) {
        for (int x = 0; x < view.width; ++x) {
            const int col = view_column(config, n, x);
            if (any_back && !(col >= w / 4 && col < 3 * w / 4)) continue;
            const double f = shading_factor(config, n, y, x);
            for (int c = 0; c < 3; ++c) num[c] += f * view.at(y, x, c);
            den += f * f;
        }
    }
    Rgb out{};
    for (int c = 0; c < 3; ++c) out[c] = static_cast<float>(num[c] / den);
    return out;
}

int nearest_palette(const Rgb& color) {
    int best = 0;
    double best_d = 1e300;
    for (int k = 0; k < kPaletteSize; ++k) {
        const auto& p = back_palette()[static_cast<std::size_t>(k)];
        double d = 0.0;
        for (int c = 0; c < 3; ++c) d += (color[c] - p[c]) * (color[c] - p[c]);
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    return best;
}

FlowField gt_flow(const SceneConfig& config, int n) {
    check_view_index(config, n);
    FlowField flow(config.size, config.size);
    for (int y = 0; y < config.size; ++y) {
        for (int x = 0; x < config.size; ++x) {
            const auto i = flow.index(y, x);
            if (x + config.col_width < config.size) {
                flow.dx[i] = static_cast<float>(config.col_width);
                flow.valid[i] = 1;
            } else {
                flow.valid[i] = 0;  // content leaves the crop
            }
        }
    }
    return flow;
}

// ---------------------------------------------------------------- datasets

std::uint64_t dataset_scene_seed(std::uint64_t dataset_seed, int index) {
    return hash_combine(hash_combine(dataset_seed, label_hash("scene")),
                        static_cast<std::uint64_t>(index));
}

SceneClass dataset_scene_class(int index) {
    return kSceneClasses[static_cast<std::size_t>(index) % kSceneClasses.size()];
}

namespace {

std::string scene_dir_name(int id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "scene_%05d", id);
    return buf;
}

std::string view_file_name(int n) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "view_%02d.png", n);
    return buf;
}

json config_json(const SceneConfig& c) {
    return json{{"views", c.views}, {"size", c.size}, {"col_width", c.col_width}};
}

SceneConfig config_from_json(const json& j) {
    SceneConfig c;
    c.views = j.at("views").get<int>();
    c.size = j.at("size").get<int>();
    c.col_width = j.at("col_width").get<int>();
    c.validate();
    return c;
}

}  // namespace

void make_dataset(int count, std::uint64_t seed, const fs::path& out, const SceneConfig& config) {
    if (count < 1) throw ConfigError("make_dataset: count must be >= 1");
    config.validate();
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw IoError("make_dataset: cannot create " + out.string() + ": " + ec.message());

    std::ofstream manifest(out / "manifest.jsonl", std::ios::binary | std::ios::trunc);
    if (!manifest) throw IoError("make_dataset: cannot write manifest in " + out.string());

    for (int i = 0; i < count; ++i) {
        const auto scene_seed = dataset_scene_seed(seed, i);
        const auto cls = dataset_scene_class(i);
        const Scene scene = gen_scene(scene_seed, cls, config);
        const auto dir = scene_dir_name(i);
        fs::create_directories(out / dir, ec);
        if (ec) throw IoError("make_dataset: cannot create " + (out / dir).string());
        json files = json::array();
        for (int n = 0; n < config.views; ++n) {
            const auto rel = dir + "/" + view_file_name(n);
            write_png(out / rel, render_view(scene, n));
            files.push_back(rel);
        }
        const json rec{{"scene", i},
                       {"seed", scene_seed},
                       {"class", to_string(cls)},
                       {"back_color", scene.back_color},
                       {"files", files}};
        manifest << rec.dump() << '\n';
    }
    if (!manifest) throw IoError("make_dataset: write failed for manifest");

    std::ofstream meta(out / "dataset.json", std::ios::binary | std::ios::trunc);
    meta << json{{"count", count}, {"seed", seed}, {"scene", config_json(config)}}.dump(2) << '\n';
    if (!meta) throw IoError("make_dataset: write failed for dataset.json");
}

Dataset load_dataset(const fs::path& root, int limit) {
    std::ifstream meta(root / "dataset.json");
    if (!meta) throw IoError("load_dataset: missing " + (root / "dataset.json").string());
    Dataset ds;
    try {
        const json m = json::parse(meta);
        ds.config = config_from_json(m.at("scene"));
        ds.seed = m.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw IoError(std::string("load_dataset: bad dataset.json: ") + e.what());
    }

    std::ifstream manifest(root / "manifest.jsonl");
    if (!manifest) throw IoError("load_dataset: missing manifest.jsonl in " + root.string());
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        if (limit > 0 && static_cast<int>(ds.entries.size()) >= limit) break;
        DatasetEntry e;
        try {
            const json rec = json::parse(line);
            e.id = rec.at("scene").get<int>();
            e.seed = rec.at("seed").get<std::uint64_t>();
            e.cls = parse_scene_class(rec.at("class").get<std::string>());
            e.back_color = rec.at("back_color").get<int>();
            e.files = rec.at("files").get<std::vector<std::string>>();
        } catch (const json::exception& ex) {
            throw IoError(std::string("load_dataset: bad manifest record: ") + ex.what());
        }
        std::vector<Image> views;
        for (const auto& f : e.files) views.push_back(read_png(root / f));
        e.views = ViewSet::from_views(std::move(views));
        ds.entries.push_back(std::move(e));
    }
    if (ds.entries.empty()) throw IoError("load_dataset: no scenes in " + root.string());
    return ds;
}

std::vector<Image> class_exemplars(SceneClass cls, int count, const SceneConfig& config) {
    std::vector<Image> out;
    out.reserve(static_cast<std::size_t>(std::max(count, 0)));
    for (int k = 0; k < count; ++k) {
        const auto seed = hash_combine(hash_combine(kExemplarSeed, label_hash(to_string(cls))),
                                       static_cast<std::uint64_t>(k));
        const Scene s = gen_scene(seed, cls, config);
        out.push_back(render_view(s, k % config.views));
    }
    return out;
}

}  // namespace hlab
