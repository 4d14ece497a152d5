#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace hlab {

/// RGB image, row-major HWC, values in [0,1].
struct Image {
    int height = 0;
    int width = 0;
    std::vector<float> values;

    static constexpr int channels = 3;

    Image() = default;
    Image(int h, int w, float fill = 0.0f)
        : height(h), width(w), values(static_cast<std::size_t>(h) * w * channels, fill) {}

    std::size_t size() const { return values.size(); }
    std::size_t index(int y, int x, int c) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    float& at(int y, int x, int c) { return values[index(y, x, c)]; }
    float at(int y, int x, int c) const { return values[index(y, x, c)]; }

    bool same_shape(const Image& o) const { return height == o.height && width == o.width; }
    bool all_finite() const;

    /// Luma with weights 0.299 / 0.587 / 0.114, row-major H*W.
    std::vector<double> gray() const;
};

/// Camera offset of a target view relative to the input view, in degrees.
struct PoseDelta {
    double elevation = 0.0;
    double azimuth = 0.0;
};

/// N images at evenly spaced azimuths around the object; view 0 sits at
/// azimuth 0 and coincides with the input view.
struct ViewSet {
    std::vector<Image> views;
    std::vector<double> azimuths;  // degrees
    double elevation = 30.0;
    std::vector<PoseDelta> deltas;

    std::size_t size() const { return views.size(); }

    /// Builds the evenly spaced pose metadata for `views`. Requires >= 2 views.
    static ViewSet from_views(std::vector<Image> views, double elevation = 30.0);
    void validate() const;
};

/// Dense per-pixel displacement field between two images, in pixels.
struct FlowField {
    int height = 0;
    int width = 0;
    std::vector<float> dx;
    std::vector<float> dy;
    std::vector<unsigned char> valid;

    FlowField() = default;
    FlowField(int h, int w)
        : height(h), width(w),
          dx(static_cast<std::size_t>(h) * w, 0.0f),
          dy(static_cast<std::size_t>(h) * w, 0.0f),
          valid(static_cast<std::size_t>(h) * w, 1) {}

    std::size_t index(int y, int x) const { return static_cast<std::size_t>(y) * width + x; }
};

/// 8-bit RGB PNG I/O. Values are rounded to the nearest of 256 levels.
void write_png(const std::filesystem::path& path, const Image& img);
Image read_png(const std::filesystem::path& path);

/// Quantize to 8 bits and back, as a PNG round trip would.
Image quantize8(const Image& img);

/// Flattened image in the diffusion range [-1,1].
std::vector<float> to_diffusion(const Image& img);
/// Inverse of to_diffusion, clamped to [0,1].
Image from_diffusion(std::span<const float> v, int height, int width);

}  // namespace hlab
