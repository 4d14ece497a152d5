#pragma once

#include <cmath>
#include <algorithm>
#include <cstdint>
#include <vector>

#include "hlab/image.hpp"
#include "hlab/rng.hpp"

namespace testing {

inline std::vector<float> normals(std::size_t n, hlab::Stream& rng) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    return v;
}

inline hlab::Image random_image(int h, int w, hlab::Stream& rng) {
    hlab::Image img(h, w);
    for (auto& x : img.values) x = static_cast<float>(rng.uniform());
    return img;
}

inline hlab::Image roll_x(const hlab::Image& a, int dx) {
    hlab::Image out(a.height, a.width);
    for (int y = 0; y < a.height; ++y) {
        for (int x = 0; x < a.width; ++x) {
            const int sx = ((x - dx) % a.width + a.width) % a.width;
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = a.at(y, sx, c);
        }
    }
    return out;
}

inline double psnr_oracle(const hlab::Image& a, const hlab::Image& b) {
    double se = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        const double d = static_cast<double>(a.values[i]) - b.values[i];
        se += d * d;
    }
    const double mse = se / a.values.size();
    return mse == 0.0 ? 99.0 : std::min(99.0, -10.0 * std::log10(mse));
}

// One-pass moment sums per window.
inline double ssim_oracle(const hlab::Image& a, const hlab::Image& b) {
    auto luma = [](const hlab::Image& im, int y, int x) {
        return 0.299 * im.at(y, x, 0) + 0.587 * im.at(y, x, 1) + 0.114 * im.at(y, x, 2);
    };
    const double c1 = 1e-4, c2 = 9e-4;
    double total = 0.0;
    int windows = 0;
    for (int y0 = 0; y0 + 8 <= a.height; y0 += 4) {
        for (int x0 = 0; x0 + 8 <= a.width; x0 += 4) {
            double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
            for (int y = y0; y < y0 + 8; ++y) {
                for (int x = x0; x < x0 + 8; ++x) {
                    const double p = luma(a, y, x), q = luma(b, y, x);
                    sa += p;
                    sb += q;
                    saa += p * p;
                    sbb += q * q;
                    sab += p * q;
                }
            }
            const double n = 64.0;
            const double ma = sa / n, mb = sb / n;
            const double va = saa / n - ma * ma, vb = sbb / n - mb * mb, cov = sab / n - ma * mb;
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++windows;
        }
    }
    return total / windows;
}


// Toy encoder recomputed with plain loops: 27-bin RGB histogram (fractions)
// then 4x4 mean-pooled luma, L2-normalized.
inline std::vector<double> embed_oracle(const hlab::Image& im) {
    std::vector<double> f(43, 0.0);
    for (int y = 0; y < im.height; ++y) {
        for (int x = 0; x < im.width; ++x) {
            int bin = 0;
            for (int c = 0; c < 3; ++c) {
                int q = static_cast<int>(im.at(y, x, c) * 3.0f);
                q = q < 0 ? 0 : (q > 2 ? 2 : q);
                bin = bin * 3 + q;
            }
            f[bin] += 1.0 / (im.height * im.width);
            const double l = 0.299 * im.at(y, x, 0) + 0.587 * im.at(y, x, 1) + 0.114 * im.at(y, x, 2);
            f[27 + (y * 4 / im.height) * 4 + x * 4 / im.width] += l * 16.0 / (im.height * im.width);
        }
    }
    double n = 0.0;
    for (double v : f) n += v * v;
    for (auto& v : f) v /= std::sqrt(n);
    return f;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12});
}

/// Max over elements of |a-b| / max(|a|, |b|, 1).
inline double max_rel(const std::vector<float>& a, const std::vector<float>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a[i], y = b[i];
        m = std::max(m, std::abs(x - y) / std::max({std::abs(x), std::abs(y), 1.0}));
    }
    return m;
}

}  // namespace testing
