#pragma once

#include <functional>

#include "flowrecon/mask.hpp"

namespace flowrecon {

enum class GeometryKind { straight_channel, converging_channel, aorta_like };

inline const char* geometry_name(GeometryKind k) {
    switch (k) {
        case GeometryKind::straight_channel: return "straight_channel";
        case GeometryKind::converging_channel: return "converging_channel";
        default: return "aorta_like";
    }
}

// Parametric geometry on a pixel grid. Channel kinds run along x (inlet on
// the left border); the aorta-like tube runs along y (inlet on the bottom).
struct Geometry {
    GeometryKind kind = GeometryKind::converging_channel;
    GridSpec extent;
    double y_center = 0.0;      // channel centerline (cm), snapped to pixel rows
    double inlet_width = 0.0;   // cm
    double outlet_width = 0.0;  // cm (converging; equals inlet_width for straight)
    double tube_radius = 0.0;   // cm (aorta-like half-width)
    double bend_amplitude = 0.0;  // cm (aorta-like sideways bulge)

    // Defaults: converging channel on 40x40 cm (20 cm tapering to 10 cm),
    // straight channel 20 cm wide, aorta-like tube of radius 2 cm on 8x8 cm.
    static Geometry preset(GeometryKind kind, int resolution) {
        Geometry g;
        g.kind = kind;
        if (kind == GeometryKind::aorta_like) {
            g.extent = GridSpec(resolution, resolution, 8.0 / resolution);
            g.tube_radius = 2.0;
            g.bend_amplitude = 1.2;
        } else {
            g.extent = GridSpec(resolution, resolution, 40.0 / resolution);
            g.y_center = 20.0;
            g.inlet_width = 20.0;
            g.outlet_width = kind == GeometryKind::converging_channel ? 10.0 : 20.0;
        }
        return g;
    }
};

struct GeometryBuild {
    Geometry geo;
    DomainMask mask;
    Border inlet_border = Border::left;
    Border outlet_border = Border::right;
    // analytic wall curves, one point per pixel column (channels) or row
    // (aorta-like), in cm
    std::vector<Vec2> wall_a, wall_b;
};

namespace detail {

// Snap a value to the nearest pixel-center coordinate so axis-aligned walls
// pass exactly through pixel centers.
inline double snap_to_center(const GridSpec& g, double coord) {
    const double idx = std::round(coord / g.eps - 0.5);
    return g.eps * (idx + 0.5);
}

}  // namespace detail

inline GeometryBuild make_geometry(const Geometry& geo) {
    const GridSpec& g = geo.extent;
    GeometryBuild build;
    build.geo = geo;
    build.mask = DomainMask(g);
    if (geo.kind == GeometryKind::aorta_like) {
        require(geo.tube_radius > 0 && geo.tube_radius < g.extent_x() / 2, "invalid-geometry",
                "aorta tube radius must fit the extent");
        require(geo.bend_amplitude >= 0 &&
                    geo.bend_amplitude + geo.tube_radius < g.extent_x() / 2,
                "invalid-geometry", "aorta bend leaves the extent");
        build.inlet_border = Border::bottom;
        build.outlet_border = Border::top;
        const double x0 = detail::snap_to_center(g, g.extent_x() / 2 - geo.tube_radius) +
                          geo.tube_radius;
        auto center = [&](double y) {
            const double s = std::sin(M_PI * y / g.extent_y());
            return x0 + geo.bend_amplitude * s * s;
        };
        for (int k = 0; k < g.K; ++k) {
            const double xc = center(g.y(k));
            build.wall_a.push_back({xc - geo.tube_radius, g.y(k)});
            build.wall_b.push_back({xc + geo.tube_radius, g.y(k)});
            for (int h = 0; h < g.H; ++h)
                if (std::abs(g.x(h) - xc) <= geo.tube_radius + 1e-9) build.mask.set(h, k, true);
        }
    } else {
        require(geo.inlet_width > 0 && geo.outlet_width > 0, "invalid-geometry",
                "channel widths must be positive");
        require(geo.y_center - geo.inlet_width / 2 >= 0 &&
                    geo.y_center + geo.inlet_width / 2 <= g.extent_y(),
                "invalid-geometry", "channel leaves the extent");
        const double y_lo0 = detail::snap_to_center(g, geo.y_center - geo.inlet_width / 2);
        const double y_c = y_lo0 + geo.inlet_width / 2;
        auto half_width = [&](double x) {
            const double t = x / g.extent_x();
            return 0.5 * (geo.inlet_width + (geo.outlet_width - geo.inlet_width) * t);
        };
        for (int h = 0; h < g.H; ++h) {
            const double hw = half_width(g.x(h));
            build.wall_a.push_back({g.x(h), y_c - hw});
            build.wall_b.push_back({g.x(h), y_c + hw});
            for (int k = 0; k < g.K; ++k)
                if (std::abs(g.y(k) - y_c) <= hw + 1e-9) build.mask.set(h, k, true);
        }
    }
    require(build.mask.inside_count() > 0, "invalid-geometry", "geometry rasterized to empty mask");
    return build;
}

// Parabolic inlet condition: peak v at the chain centroid, zero at the chain
// endpoints, directed along the inward border normal.
inline std::function<Vec2(Vec2)> inlet_profile(const Chain& chain, const GridSpec& g, double v) {
    require(chain.pixels.size() >= 2, "degenerate-chain", "inlet_profile needs a real chain");
    const Vec2 q = chain.centroid(g);
    const double half = chain.length(g) / 2.0;
    const Vec2 dir = -1.0 * outward_normal(chain.border);
    return [q, half, dir, v](Vec2 x) {
        const double r2 = norm_sq(q - x) / (half * half);
        return v * (1.0 - r2) * dir;
    };
}

struct SynthConfig {
    double v_peak = 5.0;      // cm/s
    double nu = 0.035;        // cm^2/s
    int max_steps = 60000;    // pseudo-time budget
    double steady_tol = 1e-8; // max face-velocity change per step, cm/s
    double div_tol = 1e-7;    // max cell divergence of the converged field, 1/s
};

namespace detail {

enum class CellType : std::uint8_t { solid, wall, fluid, inlet, outlet };

// Steady incompressible solver: staggered faces, first-order upwind
// advection, explicit pseudo-time marching, pressure projection each step.
// Free cells are the mask interior plus inlet-border cells; wall-chain cells
// are frozen so the no-slip line runs through wall-pixel centers.
class McSolver {
public:
    McSolver(const GeometryBuild& build, const SynthConfig& cfg)
        : g_(build.mask.spec), cfg_(cfg) {
        const DomainMask& mask = build.mask;
        cells_.assign(g_.size(), CellType::solid);
        const EdgeInfo edges = detect_edges(mask);
        for (int k = 0; k < g_.K; ++k)
            for (int h = 0; h < g_.H; ++h) {
                const std::size_t i = g_.idx(h, k);
                if (!mask.inside[i]) continue;
                if (edges.interior[i]) {
                    cells_[i] = CellType::fluid;
                    continue;
                }
                const Border b = border_of(g_, h, k);
                if (b == build.inlet_border)
                    cells_[i] = CellType::inlet;
                else if (b == build.outlet_border)
                    cells_[i] = CellType::outlet;
                else
                    cells_[i] = CellType::wall;
            }
        u_.assign(static_cast<std::size_t>(g_.H + 1) * g_.K, 0.0);
        v_.assign(static_cast<std::size_t>(g_.H) * (g_.K + 1), 0.0);
        p_.assign(g_.size(), 0.0);

        // inlet profile from the mask's own inlet chain
        auto chains = partition_chains(g_, edges);
        const Chain* inlet_chain = nullptr;
        for (const auto& c : chains)
            if (c.border == build.inlet_border &&
                (!inlet_chain || c.pixels.size() > inlet_chain->pixels.size()))
                inlet_chain = &c;
        require(inlet_chain != nullptr, "invalid-geometry", "no inlet chain on the inlet border");
        profile_ = inlet_profile(*inlet_chain, g_, cfg.v_peak);
        inlet_border_ = build.inlet_border;
        outlet_border_ = build.outlet_border;
    }

    VectorField2 solve() {
        apply_inlet();
        init_extruded();
        apply_outlet();
        double dt = time_step();
        int steps = 0;
        for (; steps < cfg_.max_steps; ++steps) {
            const double change = advance(dt);
            if (!std::isfinite(change))
                fail("numeric-error", "reference solver diverged at step " + std::to_string(steps));
            if (change < cfg_.steady_tol) break;
            if (steps % 200 == 0) dt = time_step();
        }
        require(steps < cfg_.max_steps, "non-convergence",
                "reference solver did not reach steady state within the iteration budget");
        require(max_divergence() <= cfg_.div_tol, "non-convergence",
                "reference solver divergence residual above tolerance");
        return to_centers();
    }

    double max_divergence() const {
        double worst = 0.0;
        for (int k = 0; k < g_.K; ++k)
            for (int h = 0; h < g_.H; ++h) {
                if (!is_pcell(h, k)) continue;
                const double div = (u(h + 1, k) - u(h, k) + v(h, k + 1) - v(h, k)) / g_.eps;
                worst = std::max(worst, std::abs(div));
            }
        return worst;
    }

private:
    double& u(int i, int k) { return u_[static_cast<std::size_t>(k) * (g_.H + 1) + i]; }
    double u(int i, int k) const { return u_[static_cast<std::size_t>(k) * (g_.H + 1) + i]; }
    double& v(int h, int j) { return v_[static_cast<std::size_t>(j) * g_.H + h]; }
    double v(int h, int j) const { return v_[static_cast<std::size_t>(j) * g_.H + h]; }

    CellType cell(int h, int k) const {
        if (h < 0 || h >= g_.H || k < 0 || k >= g_.K) return CellType::solid;
        return cells_[g_.idx(h, k)];
    }
    bool is_pcell(int h, int k) const {
        const CellType c = cell(h, k);
        return c == CellType::fluid || c == CellType::inlet;
    }
    bool blocks(CellType c) const { return c == CellType::solid || c == CellType::wall; }

    // u-face (i,k) sits between cells (i-1,k) and (i,k).
    bool u_active(int i, int k) const {
        if (i == 0 || i == g_.H) return false;  // border faces handled separately
        const CellType a = cell(i - 1, k), b = cell(i, k);
        if (blocks(a) || blocks(b)) return false;
        return is_pcell(i - 1, k) || is_pcell(i, k);
    }
    bool v_active(int h, int j) const {
        if (j == 0 || j == g_.K) return false;
        const CellType a = cell(h, j - 1), b = cell(h, j);
        if (blocks(a) || blocks(b)) return false;
        return is_pcell(h, j - 1) || is_pcell(h, j);
    }

    void apply_inlet() {
        for (int k = 0; k < g_.K; ++k)
            for (int h = 0; h < g_.H; ++h) {
                if (cell(h, k) != CellType::inlet) continue;
                switch (inlet_border_) {
                    case Border::left: u(0, k) = profile_({0.0, g_.y(k)}).x; break;
                    case Border::right: u(g_.H, k) = profile_({g_.extent_x(), g_.y(k)}).x; break;
                    case Border::bottom: v(h, 0) = profile_({g_.x(h), 0.0}).y; break;
                    default: v(h, g_.K) = profile_({g_.x(h), g_.extent_y()}).y; break;
                }
            }
    }

    // convective outflow: copy the adjacent interior face onto the border
    void apply_outlet() {
        for (int k = 0; k < g_.K; ++k)
            for (int h = 0; h < g_.H; ++h) {
                if (cell(h, k) != CellType::outlet) continue;
                switch (outlet_border_) {
                    case Border::right: u(g_.H, k) = u(g_.H - 1, k); break;
                    case Border::left: u(0, k) = u(1, k); break;
                    case Border::top: v(h, g_.K) = v(h, g_.K - 1); break;
                    default: v(h, 0) = v(h, 1); break;
                }
            }
    }

    // extrude the inlet profile along the flow axis as the initial guess
    void init_extruded() {
        if (inlet_border_ == Border::left || inlet_border_ == Border::right) {
            for (int k = 0; k < g_.K; ++k) {
                const double gy = profile_({0.0, g_.y(k)}).x;
                for (int i = 1; i < g_.H; ++i)
                    if (u_active(i, k)) u(i, k) = gy;
            }
        } else {
            for (int h = 0; h < g_.H; ++h) {
                const double gx = profile_({g_.x(h), 0.0}).y;
                for (int j = 1; j < g_.K; ++j)
                    if (v_active(h, j)) v(h, j) = gx;
            }
        }
    }

    double time_step() const {
        double umax = 1e-9;
        for (double x : u_) umax = std::max(umax, std::abs(x));
        for (double x : v_) umax = std::max(umax, std::abs(x));
        umax = std::max(umax, cfg_.v_peak);
        const double eps = g_.eps;
        const double adv = eps / umax;
        const double dif = eps * eps / (4.0 * cfg_.nu + 2.0 * eps * umax);
        return 0.4 * std::min(adv, dif);
    }

    double advance(double dt) {
        const double eps = g_.eps, nu = cfg_.nu;
        std::vector<double> us = u_, vs = v_;
        // u momentum
        for (int k = 0; k < g_.K; ++k)
            for (int i = 1; i < g_.H; ++i) {
                if (!u_active(i, k)) continue;
                const double uc = u(i, k);
                const double vbar = 0.25 * (v(i - 1, k) + v(i, k) + v(i - 1, k + 1) + v(i, k + 1));
                const double un = k + 1 < g_.K ? u(i, k + 1) : 0.0;
                const double usn = k - 1 >= 0 ? u(i, k - 1) : 0.0;
                const double dudx = uc > 0 ? (uc - u(i - 1, k)) / eps : (u(i + 1, k) - uc) / eps;
                const double dudy = vbar > 0 ? (uc - usn) / eps : (un - uc) / eps;
                const double lap = (u(i + 1, k) + u(i - 1, k) + un + usn - 4.0 * uc) / (eps * eps);
                us[static_cast<std::size_t>(k) * (g_.H + 1) + i] =
                    uc + dt * (-(uc * dudx + vbar * dudy) + nu * lap);
            }
        // v momentum
        for (int j = 1; j < g_.K; ++j)
            for (int h = 0; h < g_.H; ++h) {
                if (!v_active(h, j)) continue;
                const double vc = v(h, j);
                const double ubar = 0.25 * (u(h, j - 1) + u(h + 1, j - 1) + u(h, j) + u(h + 1, j));
                const double ve = h + 1 < g_.H ? v(h + 1, j) : 0.0;
                const double vw = h - 1 >= 0 ? v(h - 1, j) : 0.0;
                const double dvdy = vc > 0 ? (vc - v(h, j - 1)) / eps : (v(h, j + 1) - vc) / eps;
                const double dvdx = ubar > 0 ? (vc - vw) / eps : (ve - vc) / eps;
                const double lap = (ve + vw + v(h, j + 1) + v(h, j - 1) - 4.0 * vc) / (eps * eps);
                vs[static_cast<std::size_t>(j) * g_.H + h] =
                    vc + dt * (-(ubar * dvdx + vc * dvdy) + nu * lap);
            }
        u_.swap(us);
        v_.swap(vs);
        apply_inlet();
        apply_outlet();
        project(dt);
        apply_outlet();
        // steady-state residual: post-projection change vs the previous state
        // (us/vs hold the pre-step field after the swap)
        double change = 0.0;
        for (std::size_t i = 0; i < u_.size(); ++i) change = std::max(change, std::abs(us[i] - u_[i]));
        for (std::size_t i = 0; i < v_.size(); ++i) change = std::max(change, std::abs(vs[i] - v_[i]));
        return change;
    }

    void project(double dt) {
        const double eps = g_.eps;
        // rhs = div(u*) * eps^2 / dt, SOR on the masked 5-point system
        std::vector<double> rhs(g_.size(), 0.0);
        for (int k = 0; k < g_.K; ++k)
            for (int h = 0; h < g_.H; ++h) {
                if (!is_pcell(h, k)) continue;
                rhs[g_.idx(h, k)] =
                    (u(h + 1, k) - u(h, k) + v(h, k + 1) - v(h, k)) * eps / dt;
            }
        const double omega = 1.85;
        const int max_sweeps = 4000;
        const double tol = 0.1 * cfg_.div_tol * eps * eps / dt;
        for (int sweep = 0; sweep < max_sweeps; ++sweep) {
            double worst = 0.0;
            for (int parity = 0; parity < 2; ++parity)
                for (int k = 0; k < g_.K; ++k)
                    for (int h = (k + parity) % 2; h < g_.H; h += 2) {
                        if (!is_pcell(h, k)) continue;
                        double diag = 0.0, off = 0.0;
                        auto visit = [&](int nh, int nk) {
                            const CellType c = cell(nh, nk);
                            if (c == CellType::fluid || c == CellType::inlet) {
                                diag += 1.0;
                                off += p_[g_.idx(nh, nk)];
                            } else if (c == CellType::outlet) {
                                diag += 1.0;  // Dirichlet 0 ghost
                            }
                        };
                        visit(h - 1, k);
                        visit(h + 1, k);
                        visit(h, k - 1);
                        visit(h, k + 1);
                        const std::size_t i = g_.idx(h, k);
                        const double pnew = (off - rhs[i]) / diag;
                        const double delta = pnew - p_[i];
                        p_[i] += omega * delta;
                        worst = std::max(worst, std::abs(delta) * diag);
                    }
            if (worst < tol) break;
        }
        // face correction across p-coupled faces
        for (int k = 0; k < g_.K; ++k)
            for (int i = 1; i < g_.H; ++i) {
                if (!u_active(i, k)) continue;
                const double pl = pressure_ghost(i - 1, k, i, k);
                const double pr = pressure_ghost(i, k, i - 1, k);
                u(i, k) -= dt * (pr - pl) / eps;
            }
        for (int j = 1; j < g_.K; ++j)
            for (int h = 0; h < g_.H; ++h) {
                if (!v_active(h, j)) continue;
                const double pd = pressure_ghost(h, j - 1, h, j);
                const double pu = pressure_ghost(h, j, h, j - 1);
                v(h, j) -= dt * (pu - pd) / eps;
            }
    }

    // pressure seen from a face: own value for p-cells, 0 at outlets, and
    // the neighbor's value across Neumann sides (no correction)
    double pressure_ghost(int h, int k, int oh, int ok) const {
        const CellType c = cell(h, k);
        if (c == CellType::fluid || c == CellType::inlet) return p_[g_.idx(h, k)];
        if (c == CellType::outlet) return 0.0;
        return p_[g_.idx(oh, ok)];
    }

    VectorField2 to_centers() const {
        VectorField2 out(g_);
        for (int k = 0; k < g_.K; ++k)
            for (int h = 0; h < g_.H; ++h) {
                if (cell(h, k) == CellType::solid || cell(h, k) == CellType::wall) continue;
                out.set(h, k, {0.5 * (u(h, k) + u(h + 1, k)), 0.5 * (v(h, k) + v(h, k + 1))});
            }
        return out;
    }

    GridSpec g_;
    SynthConfig cfg_;
    std::vector<CellType> cells_;
    std::vector<double> u_, v_, p_;
    std::function<Vec2(Vec2)> profile_;
    Border inlet_border_ = Border::left;
    Border outlet_border_ = Border::right;
};

}  // namespace detail

// Steady reference solution interpolated onto pixel centers; zero outside
// the mask and at wall pixels.
inline VectorField2 solve_reference(const GeometryBuild& build, const SynthConfig& cfg) {
    require(cfg.nu > 0, "invalid-config", "viscosity must be positive");
    if (cfg.v_peak == 0.0) return VectorField2(build.mask.spec);  // rest state
    detail::McSolver solver(build, cfg);
    return solver.solve();
}

// Additive i.i.d. Gaussian noise, every pixel and channel (also outside the
// mask); fixed draw order (k, h, channel x then y).
inline VectorField2 add_gaussian(const VectorField2& field, double sigma, Rng& rng) {
    require(sigma >= 0.0, "invalid-config", "noise sigma must be nonnegative");
    VectorField2 out = field;
    if (sigma == 0.0) return out;
    for (int k = 0; k < field.spec.K; ++k)
        for (int h = 0; h < field.spec.H; ++h) {
            const std::size_t i = field.spec.idx(h, k);
            out.ux[i] += normal(rng, 0.0, sigma);
            out.uy[i] += normal(rng, 0.0, sigma);
        }
    return out;
}

// Signal-dependent noise: u + sqrt(|u|) n1 + n2 per channel, with |u| the
// local speed, n1 ~ N(0,1), n2 ~ N(0,3^2), independent per pixel/channel.
inline VectorField2 add_signal_noise(const VectorField2& field, Rng& rng) {
    VectorField2 out = field;
    for (int k = 0; k < field.spec.K; ++k)
        for (int h = 0; h < field.spec.H; ++h) {
            const std::size_t i = field.spec.idx(h, k);
            const double root_speed = std::sqrt(std::hypot(field.ux[i], field.uy[i]));
            out.ux[i] += root_speed * normal(rng, 0.0, 1.0) + normal(rng, 0.0, 3.0);
            out.uy[i] += root_speed * normal(rng, 0.0, 1.0) + normal(rng, 0.0, 3.0);
        }
    return out;
}

// Mass flux through the cross-section at column h (channels) in cm^2/s.
inline double column_flux(const VectorField2& field, const DomainMask& mask, int h) {
    double flux = 0.0;
    for (int k = 0; k < field.spec.K; ++k)
        if (mask.is_inside(h, k)) flux += field.at(h, k).x * field.spec.eps;
    return flux;
}

inline double row_flux(const VectorField2& field, const DomainMask& mask, int k) {
    double flux = 0.0;
    for (int h = 0; h < field.spec.H; ++h)
        if (mask.is_inside(h, k)) flux += field.at(h, k).y * field.spec.eps;
    return flux;
}

}  // namespace flowrecon
