#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hlab/image.hpp"

namespace hlab {

enum class SceneClass { stripes, checker, blob };

inline constexpr std::array<SceneClass, 3> kSceneClasses = {SceneClass::stripes,
                                                            SceneClass::checker, SceneClass::blob};

std::string to_string(SceneClass c);
SceneClass parse_scene_class(const std::string& name);

/// Geometry of the toy turntable: `views` cameras spaced evenly in azimuth
/// around a cylinder whose texture is views * col_width columns wide; each
/// view is a size x size crop of `size` columns.
struct SceneConfig {
    int views = 8;
    int size = 16;
    int col_width = 4;

    int texture_width() const { return views * col_width; }
    double column_degrees() const { return 360.0 / texture_width(); }
    void validate() const;
};

/// Back-side palette. The back half of every texture is one of these colors.
inline constexpr int kPaletteSize = 4;
using Rgb = std::array<float, 3>;
const std::array<Rgb, kPaletteSize>& back_palette();

struct Scene {
    SceneConfig config;
    std::uint64_t seed = 0;
    SceneClass cls = SceneClass::stripes;
    int back_color = 0;  // index into back_palette()
    Rgb front_a{};
    Rgb front_b{};
    Image texture;  // albedo, size x texture_width

    /// True for texture columns on the back half (azimuth in [90, 270)).
    bool is_back_column(int col) const;
};

/// Deterministic scene from a seed. The back color comes from its own
/// stream and is independent of every front attribute.
Scene gen_scene(std::uint64_t seed, SceneClass cls, const SceneConfig& config = {});

/// Texture column shown at pixel column x of view n.
int view_column(const SceneConfig& config, int n, int x);

/// Combined per-pixel shading of view n: cosine falloff across the crop times
/// a fixed surface relief map that travels with the texture. Rendered pixels
/// are albedo * shading, so dividing by this inverts the renderer exactly.
float shading_factor(const SceneConfig& config, int n, int y, int x);

/// The relief value of texel (row, col); shared by all scenes.
float surface_relief(const SceneConfig& config, int row, int col);

Image render_view(const Scene& scene, int n);
ViewSet render_viewset(const Scene& scene);

/// Divide out shading_factor; returns albedo estimates.
Image unshade(const SceneConfig& config, const Image& view, int n);

/// Least-squares albedo color of the view's back-half pixels, given the known
/// shading; for a view with no back pixels the whole view is used.
Rgb estimate_back_albedo(const SceneConfig& config, const Image& view, int n);

/// Index of the nearest palette color (Euclidean RGB).
int nearest_palette(const Rgb& color);

/// Ground-truth flow from view n to view n+1 (mod N): every pixel whose
/// content stays visible moves col_width pixels right; the rest are invalid.
FlowField gt_flow(const SceneConfig& config, int n);
inline FlowField gt_flow(const Scene& scene, int n) { return gt_flow(scene.config, n); }

// ---------------------------------------------------------------- datasets

struct DatasetEntry {
    int id = 0;
    std::uint64_t seed = 0;
    SceneClass cls = SceneClass::stripes;
    int back_color = 0;
    std::vector<std::string> files;  // relative to the dataset root
    ViewSet views;                   // filled by load_dataset
};

struct Dataset {
    SceneConfig config;
    std::uint64_t seed = 0;
    std::vector<DatasetEntry> entries;
};

/// Seed of scene i in a dataset generated from `dataset_seed`.
std::uint64_t dataset_scene_seed(std::uint64_t dataset_seed, int index);
/// Classes cycle stripes, checker, blob.
SceneClass dataset_scene_class(int index);

/// Writes scene_XXXXX/view_YY.png for `count` scenes plus manifest.jsonl
/// (one JSON record per scene, in id order) and dataset.json.
void make_dataset(int count, std::uint64_t seed, const std::filesystem::path& out,
                  const SceneConfig& config = {});

/// Loads manifest and PNGs; `limit` > 0 caps the number of scenes read.
Dataset load_dataset(const std::filesystem::path& root, int limit = 0);

/// Clean renders of `count` scenes of one class, for class prototypes. Uses a
/// fixed seed family disjoint from dataset seeds.
std::vector<Image> class_exemplars(SceneClass cls, int count, const SceneConfig& config = {});

}  // namespace hlab
