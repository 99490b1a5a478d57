#pragma once

#include "flowrecon/grid.hpp"

namespace flowrecon {

// Per-pixel mapping c on the image domain, stored as identity plus a
// trainable displacement (cm). Target coordinates c(x) are derived; storing
// the displacement keeps the identity and pure translations exact. Off-grid
// queries interpolate the displacement bilinearly and add the query point.
struct MappingField {
    GridSpec spec;
    std::vector<double> disp_x, disp_y;

    MappingField() = default;
    explicit MappingField(const GridSpec& s) : spec(s), disp_x(s.size(), 0.0), disp_y(s.size(), 0.0) {}

    static MappingField identity(const GridSpec& s) { return MappingField(s); }

    Vec2 at(int h, int k) const {
        const std::size_t i = spec.idx(h, k);
        return {spec.x(h) + disp_x[i], spec.y(k) + disp_y[i]};
    }
    Vec2 displacement(int h, int k) const {
        const std::size_t i = spec.idx(h, k);
        return {disp_x[i], disp_y[i]};
    }
    void set_displacement(int h, int k, const Vec2& d) {
        const std::size_t i = spec.idx(h, k);
        disp_x[i] = d.x;
        disp_y[i] = d.y;
    }
    void set_target(int h, int k, const Vec2& t) {
        set_displacement(h, k, {t.x - spec.x(h), t.y - spec.y(k)});
    }

    // Materialized target channels (the serialized representation).
    std::vector<double> target_x() const {
        std::vector<double> t(spec.size());
        for (int k = 0; k < spec.K; ++k)
            for (int h = 0; h < spec.H; ++h) t[spec.idx(h, k)] = spec.x(h) + disp_x[spec.idx(h, k)];
        return t;
    }
    std::vector<double> target_y() const {
        std::vector<double> t(spec.size());
        for (int k = 0; k < spec.K; ++k)
            for (int h = 0; h < spec.H; ++h) t[spec.idx(h, k)] = spec.y(k) + disp_y[spec.idx(h, k)];
        return t;
    }

    bool all_finite() const {
        for (double v : disp_x)
            if (!std::isfinite(v)) return false;
        for (double v : disp_y)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline bool inside_extent(const GridSpec& spec, const Vec2& p) {
    return p.x >= 0.0 && p.x <= spec.extent_x() && p.y >= 0.0 && p.y <= spec.extent_y();
}

// Samples `field` at c(x) for every pixel x; zero outside the physical
// extent, clamped bilinear inside.
inline VectorField2 compose_field(const VectorField2& field, const MappingField& c) {
    require(field.spec == c.spec, "shape-mismatch", "compose_field needs matching grids");
    require(c.all_finite(), "invalid-mapping", "compose_field: non-finite mapping coordinates");
    VectorField2 out(field.spec);
    for (int k = 0; k < field.spec.K; ++k)
        for (int h = 0; h < field.spec.H; ++h) {
            const Vec2 q = c.at(h, k);
            if (inside_extent(field.spec, q)) out.set(h, k, sample_bilinear(field, q));
        }
    return out;
}

inline ScalarField compose_field(const ScalarField& field, const MappingField& c) {
    require(field.spec == c.spec, "shape-mismatch", "compose_field needs matching grids");
    require(c.all_finite(), "invalid-mapping", "compose_field: non-finite mapping coordinates");
    ScalarField out(field.spec);
    for (int k = 0; k < field.spec.K; ++k)
        for (int h = 0; h < field.spec.H; ++h) {
            const Vec2 q = c.at(h, k);
            if (inside_extent(field.spec, q)) out.at(h, k) = sample_bilinear(field, q);
        }
    return out;
}

}  // namespace flowrecon
