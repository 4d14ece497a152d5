#include "hlab/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "hlab/diffusion.hpp"
#include "hlab/errors.hpp"

namespace hlab {

bool Image::all_finite() const {
    return std::all_of(values.begin(), values.end(), [](float v) { return std::isfinite(v); });
}

std::vector<double> Image::gray() const {
    std::vector<double> g(static_cast<std::size_t>(height) * width);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            g[static_cast<std::size_t>(y) * width + x] =
                0.299 * at(y, x, 0) + 0.587 * at(y, x, 1) + 0.114 * at(y, x, 2);
        }
    }
    return g;
}

ViewSet ViewSet::from_views(std::vector<Image> views, double elevation) {
    ViewSet vs;
    const auto n = views.size();
    vs.views = std::move(views);
    vs.elevation = elevation;
    for (std::size_t i = 0; i < n; ++i) {
        const double az = 360.0 * static_cast<double>(i) / static_cast<double>(n);
        vs.azimuths.push_back(az);
        vs.deltas.push_back({0.0, az});
    }
    vs.validate();
    return vs;
}

void ViewSet::validate() const {
    if (views.size() < 2) throw ShapeError("ViewSet: need at least 2 views");
    require_same_size(views.size(), deltas.size(), "ViewSet deltas");
    require_same_size(views.size(), azimuths.size(), "ViewSet azimuths");
    if (azimuths.front() != 0.0) throw ShapeError("ViewSet: view 0 must sit at azimuth 0");
    for (const auto& v : views) {
        if (!v.same_shape(views.front())) throw ShapeError("ViewSet: views differ in shape");
    }
}

namespace {

std::uint8_t to_byte(float v) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void write_png(const std::filesystem::path& path, const Image& img) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("write_png: cannot open " + path.string());

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("write_png: libpng init failed");
    }
    std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width) * 3);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("write_png: libpng error writing " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < 3; ++c) row[static_cast<std::size_t>(x) * 3 + c] = to_byte(img.at(y, x, c));
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image read_png(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("read_png: cannot open " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("read_png: libpng init failed");
    }
    Image img;
    std::vector<std::uint8_t> row;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("read_png: libpng error reading " + path.string());
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    img = Image(h, w);
    row.resize(png_get_rowbytes(png, info));
    for (int y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                img.at(y, x, c) = static_cast<float>(row[static_cast<std::size_t>(x) * 3 + c]) / 255.0f;
            }
        }
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

Image quantize8(const Image& img) {
    Image out = img;
    for (auto& v : out.values) v = static_cast<float>(to_byte(v)) / 255.0f;
    return out;
}

std::vector<float> to_diffusion(const Image& img) {
    std::vector<float> out(img.values.size());
    std::transform(img.values.begin(), img.values.end(), out.begin(), to_diffusion_range);
    return out;
}

Image from_diffusion(std::span<const float> v, int height, int width) {
    Image img(height, width);
    require_same_size(v.size(), img.size(), "from_diffusion");
    for (std::size_t i = 0; i < v.size(); ++i) {
        img.values[i] = std::clamp(to_unit_range(v[i]), 0.0f, 1.0f);
    }
    return img;
}

}  // namespace hlab
