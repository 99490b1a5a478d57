#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "flowrecon/common.hpp"

namespace flowrecon {

// Pixel grid over [0, eps*H] x [0, eps*K]; pixel (h,k) sits at
// (eps/2 + h*eps, eps/2 + k*eps). Rasters are row-major with the x index h
// running fastest: idx = k*H + h.
struct GridSpec {
    int H = 0;          // pixel count along x
    int K = 0;          // pixel count along y
    double eps = 0.0;   // pixel pitch, cm

    GridSpec() = default;
    GridSpec(int h_count, int k_count, double pitch) : H(h_count), K(k_count), eps(pitch) {
        require(H >= 1 && K >= 1, "invalid-grid", "GridSpec needs at least one pixel per axis");
        require(pitch > 0.0 && std::isfinite(pitch), "invalid-grid", "GridSpec pitch must be positive");
    }

    std::size_t size() const { return static_cast<std::size_t>(H) * static_cast<std::size_t>(K); }
    std::size_t idx(int h, int k) const { return static_cast<std::size_t>(k) * H + h; }
    double x(int h) const { return eps * (0.5 + h); }
    double y(int k) const { return eps * (0.5 + k); }
    Vec2 center(int h, int k) const { return {x(h), y(k)}; }
    double extent_x() const { return eps * H; }
    double extent_y() const { return eps * K; }

    bool operator==(const GridSpec&) const = default;
};

struct ScalarField {
    GridSpec spec;
    std::vector<double> v;

    ScalarField() = default;
    explicit ScalarField(const GridSpec& s, double fill = 0.0) : spec(s), v(s.size(), fill) {}

    double& at(int h, int k) { return v[spec.idx(h, k)]; }
    double at(int h, int k) const { return v[spec.idx(h, k)]; }
};

// Two-channel velocity raster (cm/s); channels share one GridSpec.
struct VectorField2 {
    GridSpec spec;
    std::vector<double> ux;
    std::vector<double> uy;

    VectorField2() = default;
    explicit VectorField2(const GridSpec& s) : spec(s), ux(s.size(), 0.0), uy(s.size(), 0.0) {}

    Vec2 at(int h, int k) const {
        const std::size_t i = spec.idx(h, k);
        return {ux[i], uy[i]};
    }
    void set(int h, int k, const Vec2& u) {
        const std::size_t i = spec.idx(h, k);
        ux[i] = u.x;
        uy[i] = u.y;
    }
};

// Pixel centers in raster order: k outer, h inner.
inline std::vector<Vec2> pixel_coords(const GridSpec& spec) {
    std::vector<Vec2> pts;
    pts.reserve(spec.size());
    for (int k = 0; k < spec.K; ++k)
        for (int h = 0; h < spec.H; ++h)
            pts.push_back(spec.center(h, k));
    return pts;
}

namespace detail {

// Locate the bilinear cell for a physical point. Queries outside the center
// lattice clamp to the border cell (velocity is zero-extended outside the
// flow domain anyway, so constant extension is harmless).
struct BilinearLocator {
    int h0, k0;
    double fx, fy;  // fractions in [0,1]
};

inline BilinearLocator locate(const GridSpec& spec, const Vec2& p) {
    require(is_finite(p), "invalid-point", "bilinear sample at non-finite point");
    double sx = p.x / spec.eps - 0.5;
    double sy = p.y / spec.eps - 0.5;
    const double max_sx = spec.H > 1 ? spec.H - 1.0 : 0.0;
    const double max_sy = spec.K > 1 ? spec.K - 1.0 : 0.0;
    sx = std::clamp(sx, 0.0, max_sx);
    sy = std::clamp(sy, 0.0, max_sy);
    int h0 = std::min(static_cast<int>(sx), spec.H - 2 >= 0 ? spec.H - 2 : 0);
    int k0 = std::min(static_cast<int>(sy), spec.K - 2 >= 0 ? spec.K - 2 : 0);
    h0 = std::max(h0, 0);
    k0 = std::max(k0, 0);
    return {h0, k0, sx - h0, sy - k0};
}

}  // namespace detail

inline double sample_bilinear(const ScalarField& f, const Vec2& p) {
    const auto L = detail::locate(f.spec, p);
    const int h1 = std::min(L.h0 + 1, f.spec.H - 1);
    const int k1 = std::min(L.k0 + 1, f.spec.K - 1);
    const double v00 = f.at(L.h0, L.k0), v10 = f.at(h1, L.k0);
    const double v01 = f.at(L.h0, k1), v11 = f.at(h1, k1);
    return (1 - L.fy) * ((1 - L.fx) * v00 + L.fx * v10) + L.fy * ((1 - L.fx) * v01 + L.fx * v11);
}

inline Vec2 sample_bilinear(const VectorField2& f, const Vec2& p) {
    const auto L = detail::locate(f.spec, p);
    const int h1 = std::min(L.h0 + 1, f.spec.H - 1);
    const int k1 = std::min(L.k0 + 1, f.spec.K - 1);
    const std::size_t i00 = f.spec.idx(L.h0, L.k0), i10 = f.spec.idx(h1, L.k0);
    const std::size_t i01 = f.spec.idx(L.h0, k1), i11 = f.spec.idx(h1, k1);
    const double w00 = (1 - L.fy) * (1 - L.fx), w10 = (1 - L.fy) * L.fx;
    const double w01 = L.fy * (1 - L.fx), w11 = L.fy * L.fx;
    return {w00 * f.ux[i00] + w10 * f.ux[i10] + w01 * f.ux[i01] + w11 * f.ux[i11],
            w00 * f.uy[i00] + w10 * f.uy[i10] + w01 * f.uy[i01] + w11 * f.uy[i11]};
}

// Discrete L2 norm of a sample set: sqrt((1/M) sum |F(x_m)|^2).
inline double discrete_l2(std::span<const Vec2> samples) {
    require(!samples.empty(), "empty-samples", "discrete_l2 of an empty sample list");
    double acc = 0.0;
    for (const Vec2& s : samples) acc += norm_sq(s);
    return std::sqrt(acc / static_cast<double>(samples.size()));
}

inline double discrete_l2(std::span<const double> samples) {
    require(!samples.empty(), "empty-samples", "discrete_l2 of an empty sample list");
    double acc = 0.0;
    for (double s : samples) acc += s * s;
    return std::sqrt(acc / static_cast<double>(samples.size()));
}

// Squared grid norm of the channel-wise difference of two rasters,
// (1/(H*K)) sum |a - b|^2. This is the misfit the pipeline monitors.
inline double grid_misfit_sq(const VectorField2& a, const VectorField2& b) {
    require(a.spec == b.spec, "shape-mismatch", "grid_misfit_sq needs matching grids");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.ux.size(); ++i) {
        const double dx = a.ux[i] - b.ux[i];
        const double dy = a.uy[i] - b.uy[i];
        acc += dx * dx + dy * dy;
    }
    return acc / static_cast<double>(a.spec.size());
}

}  // namespace flowrecon
