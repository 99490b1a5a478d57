#pragma once

#include "flowrecon/autodiff.hpp"
#include "flowrecon/mapping.hpp"

namespace flowrecon {

// Beltrami coefficient raster of a mapping; pixels where |f_z| falls under
// the guard are flagged degenerate and carry mu = 0.
struct BeltramiField {
    GridSpec spec;
    std::vector<double> mu_re, mu_im;
    std::vector<std::uint8_t> degenerate;
    int degenerate_count = 0;
};

struct GeoWeights {
    double alpha_reg = 1.0;
    double alpha_bc = 10.0;
    double alpha_lap = 1.0;
};

namespace detail {

constexpr double kFzGuard = 1e-12;
constexpr double kMuCap = 20.0;  // keeps exp(2(|mu|-1)) finite on degenerate pixels

// Central-difference partials of both mapping channels, one-sided at the
// image borders. Returns (a, b, g, h) = (dx c1, dx c2, dy c1, dy c2).
struct MapDerivs {
    double a, b, g, h;
};

template <class Getter>
inline MapDerivs map_derivs(const GridSpec& spec, const Getter& val, int h, int k) {
    const double inv2 = 1.0 / (2.0 * spec.eps), inv1 = 1.0 / spec.eps;
    MapDerivs d{};
    if (h > 0 && h + 1 < spec.H) {
        d.a = (val(h + 1, k, 0) - val(h - 1, k, 0)) * inv2;
        d.b = (val(h + 1, k, 1) - val(h - 1, k, 1)) * inv2;
    } else if (h == 0) {
        d.a = (val(1, k, 0) - val(0, k, 0)) * inv1;
        d.b = (val(1, k, 1) - val(0, k, 1)) * inv1;
    } else {
        d.a = (val(h, k, 0) - val(h - 1, k, 0)) * inv1;
        d.b = (val(h, k, 1) - val(h - 1, k, 1)) * inv1;
    }
    if (k > 0 && k + 1 < spec.K) {
        d.g = (val(h, k + 1, 0) - val(h, k - 1, 0)) * inv2;
        d.h = (val(h, k + 1, 1) - val(h, k - 1, 1)) * inv2;
    } else if (k == 0) {
        d.g = (val(h, 1, 0) - val(h, 0, 0)) * inv1;
        d.h = (val(h, 1, 1) - val(h, 0, 1)) * inv1;
    } else {
        d.g = (val(h, k, 0) - val(h, k - 1, 0)) * inv1;
        d.h = (val(h, k, 1) - val(h, k - 1, 1)) * inv1;
    }
    return d;
}

inline int reflect101(int i, int n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * n - 2 - i;
    return i;
}

}  // namespace detail

// mu = f_zbar / f_z with f_z = (c_x - i c_y)/2, f_zbar = (c_x + i c_y)/2,
// treating the mapping as complex-valued; derivatives by finite differences.
inline BeltramiField beltrami(const MappingField& c) {
    const GridSpec& g = c.spec;
    require(g.H >= 3 && g.K >= 3, "invalid-grid", "beltrami needs a grid of at least 3x3");
    require(c.all_finite(), "invalid-mapping", "beltrami: non-finite mapping coordinates");
    BeltramiField out;
    out.spec = g;
    out.mu_re.assign(g.size(), 0.0);
    out.mu_im.assign(g.size(), 0.0);
    out.degenerate.assign(g.size(), 0);
    auto val = [&](int h, int k, int ch) {
        return ch == 0 ? g.x(h) + c.disp_x[g.idx(h, k)] : g.y(k) + c.disp_y[g.idx(h, k)];
    };
    for (int k = 0; k < g.K; ++k)
        for (int h = 0; h < g.H; ++h) {
            const auto d = detail::map_derivs(g, val, h, k);
            const double fz_re = 0.5 * (d.a + d.h), fz_im = 0.5 * (d.b - d.g);
            const double fb_re = 0.5 * (d.a - d.h), fb_im = 0.5 * (d.b + d.g);
            const double fz2 = fz_re * fz_re + fz_im * fz_im;
            const std::size_t i = g.idx(h, k);
            if (std::sqrt(fz2) < detail::kFzGuard) {
                out.degenerate[i] = 1;
                ++out.degenerate_count;
                continue;
            }
            out.mu_re[i] = (fb_re * fz_re + fb_im * fz_im) / fz2;
            out.mu_im[i] = (fb_im * fz_re - fb_re * fz_im) / fz2;
        }
    return out;
}

inline double max_interior_abs_mu(const BeltramiField& mu) {
    double best = 0.0;
    for (int k = 1; k + 1 < mu.spec.K; ++k)
        for (int h = 1; h + 1 < mu.spec.H; ++h) {
            const std::size_t i = mu.spec.idx(h, k);
            if (mu.degenerate[i]) continue;
            best = std::max(best, std::hypot(mu.mu_re[i], mu.mu_im[i]));
        }
    return best;
}

// Five-point Laplacian of each mapping channel with unit (pixel) spacing,
// evaluated on the displacement part (the identity is harmonic) with
// reflect-101 padding; identity and pure translations give zero at every
// pixel. Values carry a factor eps^2 relative to the physical Laplacian,
// the usual image-grid convention; a physical-eps stencil would make the
// smoothness penalty blow up like 1/eps^4 and freeze the registration at
// fine resolutions.
inline std::vector<Vec2> mapping_laplacian(const MappingField& c) {
    const GridSpec& g = c.spec;
    require(g.H >= 3 && g.K >= 3, "invalid-grid", "mapping_laplacian needs at least 3x3");
    std::vector<Vec2> out(g.size());
    auto disp = [&](int h, int k) { return c.displacement(h, k); };
    for (int k = 0; k < g.K; ++k)
        for (int h = 0; h < g.H; ++h) {
            const int hl = detail::reflect101(h - 1, g.H), hr = detail::reflect101(h + 1, g.H);
            const int kd = detail::reflect101(k - 1, g.K), ku = detail::reflect101(k + 1, g.K);
            const Vec2 sum = disp(hl, k) + disp(hr, k) + disp(h, kd) + disp(h, ku);
            const Vec2 ctr = disp(h, k);
            out[g.idx(h, k)] = {sum.x - 4.0 * ctr.x, sum.y - 4.0 * ctr.y};
        }
    return out;
}

// || noisy - recon o c ||^2 over the grid, 1/(H K) normalization; the
// composition samples recon bilinearly and is zero outside the extent.
inline double registration_loss(const VectorField2& noisy, const VectorField2& recon,
                                const MappingField& c) {
    require(noisy.spec == recon.spec && noisy.spec == c.spec, "shape-mismatch",
            "registration_loss needs matching grids");
    const VectorField2 warped = compose_field(recon, c);
    return grid_misfit_sq(noisy, warped);
}

// (bc, lap) regularizer values: bc penalizes conformality distortion via
// exp(|mu|-1) per pixel (the mu=0 floor exp(-2) is kept as is), lap is the
// squared mapping Laplacian.
inline std::pair<double, double> geo_losses(const MappingField& c) {
    const GridSpec& g = c.spec;
    const BeltramiField mu = beltrami(c);
    double bc = 0.0;
    for (std::size_t i = 0; i < mu.mu_re.size(); ++i) {
        double m = std::hypot(mu.mu_re[i], mu.mu_im[i]);
        if (mu.degenerate[i]) m = detail::kMuCap;
        m = std::min(m, detail::kMuCap);
        bc += std::exp(2.0 * (m - 1.0));
    }
    bc /= static_cast<double>(g.size());
    const auto lap = mapping_laplacian(c);
    double lp = 0.0;
    for (const Vec2& L : lap) lp += norm_sq(L);
    lp /= static_cast<double>(g.size());
    return {bc, lp};
}

struct GeoTerms {
    double reg = 0.0, bc = 0.0, lap = 0.0, total = 0.0;
};

namespace detail {

// Bilinear sample of `f` at q with the gradient w.r.t. q. Outside the
// physical extent both are zero; inside the half-pixel clamp margin the
// clamped axis contributes zero gradient.
inline void sample_with_grad(const VectorField2& f, const Vec2& q, Vec2& value, double dvdq[2][2]) {
    value = {0.0, 0.0};
    dvdq[0][0] = dvdq[0][1] = dvdq[1][0] = dvdq[1][1] = 0.0;
    if (!inside_extent(f.spec, q)) return;
    const GridSpec& g = f.spec;
    const double sx_raw = q.x / g.eps - 0.5, sy_raw = q.y / g.eps - 0.5;
    const auto L = locate(g, q);
    const int h1 = std::min(L.h0 + 1, g.H - 1), k1 = std::min(L.k0 + 1, g.K - 1);
    const std::size_t i00 = g.idx(L.h0, L.k0), i10 = g.idx(h1, L.k0);
    const std::size_t i01 = g.idx(L.h0, k1), i11 = g.idx(h1, k1);
    const double w00 = (1 - L.fy) * (1 - L.fx), w10 = (1 - L.fy) * L.fx;
    const double w01 = L.fy * (1 - L.fx), w11 = L.fy * L.fx;
    value = {w00 * f.ux[i00] + w10 * f.ux[i10] + w01 * f.ux[i01] + w11 * f.ux[i11],
             w00 * f.uy[i00] + w10 * f.uy[i10] + w01 * f.uy[i01] + w11 * f.uy[i11]};
    const bool clamped_x = sx_raw < 0.0 || sx_raw > g.H - 1.0 || g.H < 2;
    const bool clamped_y = sy_raw < 0.0 || sy_raw > g.K - 1.0 || g.K < 2;
    const double inv = 1.0 / g.eps;
    if (!clamped_x) {
        dvdq[0][0] = ((f.ux[i10] - f.ux[i00]) * (1 - L.fy) + (f.ux[i11] - f.ux[i01]) * L.fy) * inv;
        dvdq[1][0] = ((f.uy[i10] - f.uy[i00]) * (1 - L.fy) + (f.uy[i11] - f.uy[i01]) * L.fy) * inv;
    }
    if (!clamped_y) {
        dvdq[0][1] = ((f.ux[i01] - f.ux[i00]) * (1 - L.fx) + (f.ux[i11] - f.ux[i10]) * L.fx) * inv;
        dvdq[1][1] = ((f.uy[i01] - f.uy[i00]) * (1 - L.fx) + (f.uy[i11] - f.uy[i10]) * L.fx) * inv;
    }
}

}  // namespace detail

// Full geometry objective and its exact gradient with respect to the flat
// displacement vector [dx(all pixels), dy(all pixels)]. Used by training and
// by the finite-difference gradient tests.
inline GeoTerms geo_loss_and_grad(const VectorField2& noisy, const VectorField2& recon,
                                  const GridSpec& g, std::span<const double> disp,
                                  const GeoWeights& w, std::span<double> grad) {
    const std::size_t N = g.size();
    require(disp.size() == 2 * N && grad.size() == 2 * N, "shape-mismatch",
            "geo_loss_and_grad: displacement size mismatch");
    std::fill(grad.begin(), grad.end(), 0.0);
    const double invN = 1.0 / static_cast<double>(N);
    GeoTerms terms;

    // registration term
    for (int k = 0; k < g.K; ++k)
        for (int h = 0; h < g.H; ++h) {
            const std::size_t i = g.idx(h, k);
            const Vec2 q{g.x(h) + disp[i], g.y(k) + disp[N + i]};
            Vec2 val;
            double dvdq[2][2];
            detail::sample_with_grad(recon, q, val, dvdq);
            const Vec2 r{noisy.ux[i] - val.x, noisy.uy[i] - val.y};
            terms.reg += invN * norm_sq(r);
            const double cr = -2.0 * invN * w.alpha_reg;
            grad[i] += cr * (r.x * dvdq[0][0] + r.y * dvdq[1][0]);
            grad[N + i] += cr * (r.x * dvdq[0][1] + r.y * dvdq[1][1]);
        }

    // Beltrami term: chain rule through |mu| = |f_zbar| / |f_z| and the
    // difference stencils; conformal pixels (|f_zbar| ~ 0) take the zero
    // subgradient, degenerate pixels are skipped.
    auto val_target = [&](int h, int k, int ch) {
        const std::size_t i = g.idx(h, k);
        return ch == 0 ? g.x(h) + disp[i] : g.y(k) + disp[N + i];
    };
    auto scatter_x = [&](int h, int k, int ch, double coef) {
        // adjoint of the one-dimensional difference along x at (h,k)
        const std::size_t base = ch == 0 ? 0 : N;
        if (h > 0 && h + 1 < g.H) {
            const double c2 = coef / (2.0 * g.eps);
            grad[base + g.idx(h + 1, k)] += c2;
            grad[base + g.idx(h - 1, k)] -= c2;
        } else if (h == 0) {
            const double c1 = coef / g.eps;
            grad[base + g.idx(1, k)] += c1;
            grad[base + g.idx(0, k)] -= c1;
        } else {
            const double c1 = coef / g.eps;
            grad[base + g.idx(h, k)] += c1;
            grad[base + g.idx(h - 1, k)] -= c1;
        }
    };
    auto scatter_y = [&](int h, int k, int ch, double coef) {
        const std::size_t base = ch == 0 ? 0 : N;
        if (k > 0 && k + 1 < g.K) {
            const double c2 = coef / (2.0 * g.eps);
            grad[base + g.idx(h, k + 1)] += c2;
            grad[base + g.idx(h, k - 1)] -= c2;
        } else if (k == 0) {
            const double c1 = coef / g.eps;
            grad[base + g.idx(h, 1)] += c1;
            grad[base + g.idx(h, 0)] -= c1;
        } else {
            const double c1 = coef / g.eps;
            grad[base + g.idx(h, k)] += c1;
            grad[base + g.idx(h, k - 1)] -= c1;
        }
    };
    for (int k = 0; k < g.K; ++k)
        for (int h = 0; h < g.H; ++h) {
            const auto d = detail::map_derivs(g, val_target, h, k);
            const double nb = 0.5 * std::hypot(d.a - d.h, d.b + d.g);
            const double nz = 0.5 * std::hypot(d.a + d.h, d.b - d.g);
            double m;
            bool grad_ok = true;
            if (nz < detail::kFzGuard) {
                m = detail::kMuCap;
                grad_ok = false;
            } else {
                m = nb / nz;
                if (m > detail::kMuCap) {
                    m = detail::kMuCap;
                    grad_ok = false;
                }
            }
            terms.bc += invN * std::exp(2.0 * (m - 1.0));
            if (!grad_ok || nb < detail::kFzGuard) continue;
            const double dLdm = w.alpha_bc * invN * 2.0 * std::exp(2.0 * (m - 1.0));
            const double dmdnb = 1.0 / nz, dmdnz = -nb / (nz * nz);
            const double da_nb = (d.a - d.h) / (4.0 * nb), dh_nb = -(d.a - d.h) / (4.0 * nb);
            const double db_nb = (d.b + d.g) / (4.0 * nb), dg_nb = (d.b + d.g) / (4.0 * nb);
            const double da_nz = (d.a + d.h) / (4.0 * nz), dh_nz = (d.a + d.h) / (4.0 * nz);
            const double db_nz = (d.b - d.g) / (4.0 * nz), dg_nz = -(d.b - d.g) / (4.0 * nz);
            scatter_x(h, k, 0, dLdm * (dmdnb * da_nb + dmdnz * da_nz));
            scatter_x(h, k, 1, dLdm * (dmdnb * db_nb + dmdnz * db_nz));
            scatter_y(h, k, 0, dLdm * (dmdnb * dg_nb + dmdnz * dg_nz));
            scatter_y(h, k, 1, dLdm * (dmdnb * dh_nb + dmdnz * dh_nz));
        }

    // Laplacian smoothness on the displacement (unit pixel spacing,
    // reflect-101 padding); the adjoint scatters through the same stencil.
    for (int ch = 0; ch < 2; ++ch) {
        const std::size_t base = ch == 0 ? 0 : N;
        for (int k = 0; k < g.K; ++k)
            for (int h = 0; h < g.H; ++h) {
                const std::size_t nb[4] = {
                    g.idx(detail::reflect101(h - 1, g.H), k), g.idx(detail::reflect101(h + 1, g.H), k),
                    g.idx(h, detail::reflect101(k - 1, g.K)), g.idx(h, detail::reflect101(k + 1, g.K))};
                double lap = -4.0 * disp[base + g.idx(h, k)];
                for (const std::size_t ni : nb) lap += disp[base + ni];
                terms.lap += invN * lap * lap;
                const double coef = w.alpha_lap * invN * 2.0 * lap;
                grad[base + g.idx(h, k)] -= 4.0 * coef;
                for (const std::size_t ni : nb) grad[base + ni] += coef;
            }
    }

    terms.total = w.alpha_reg * terms.reg + w.alpha_bc * terms.bc + w.alpha_lap * terms.lap;
    return terms;
}

struct GeoTrainResult {
    MappingField c;
    std::vector<GeoTerms> history;
    double max_abs_mu = 0.0;  // over interior pixels of the returned mapping
};


// Minimizes alpha_reg*L_reg + alpha_bc*L_bc + alpha_lap*L_lap over a
// per-pixel displacement field by adaptive-moment descent, starting from the
// identity. step_size <= 0 selects eps/16.
inline GeoTrainResult train_geometry_detailed(const VectorField2& noisy, const VectorField2& recon,
                                              const GeoWeights& weights, int iterations,
                                              double step_size, std::uint64_t seed) {
    require(noisy.spec == recon.spec, "shape-mismatch", "train_geometry needs matching grids");
    require(weights.alpha_reg > 0.0, "invalid-weights", "alpha_reg must be positive");
    (void)seed;  // the descent is deterministic; seed kept for interface stability
    const GridSpec& g = noisy.spec;
    const std::size_t N = g.size();
    std::vector<double> disp(2 * N, 0.0), grad(2 * N, 0.0);
    AdamState opt;
    opt.step_size = step_size > 0.0 ? step_size : g.eps / 16.0;
    GeoTrainResult result;
    for (int it = 0; it < iterations; ++it) {
        const GeoTerms terms = geo_loss_and_grad(noisy, recon, g, disp, weights, grad);
        require(std::isfinite(terms.total), "numeric-error",
                "train_geometry: non-finite loss at iteration " + std::to_string(it));
        result.history.push_back(terms);
        adam_step(disp, grad, opt);
    }
    result.c = MappingField::identity(g);
    std::copy(disp.begin(), disp.begin() + N, result.c.disp_x.begin());
    std::copy(disp.begin() + N, disp.end(), result.c.disp_y.begin());
    result.max_abs_mu = max_interior_abs_mu(beltrami(result.c));
    return result;
}

inline MappingField train_geometry(const VectorField2& noisy, const VectorField2& recon,
                                   const GeoWeights& weights, int iterations, std::uint64_t seed) {
    return train_geometry_detailed(noisy, recon, weights, iterations, 0.0, seed).c;
}

// sup-norm distance of a mapping from the identity (cm); the convergence
// diagnostic for the correction sequence.
inline double correction_drift(const MappingField& c) {
    double best = 0.0;
    for (int k = 0; k < c.spec.K; ++k)
        for (int h = 0; h < c.spec.H; ++h) best = std::max(best, norm(c.displacement(h, k)));
    return best;
}

}  // namespace flowrecon
