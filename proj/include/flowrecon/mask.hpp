#pragma once

#include <deque>
#include <utility>

#include "flowrecon/mapping.hpp"

namespace flowrecon {

using PixelIndex = std::pair<int, int>;  // (h, k)

// Binary raster marking the flow region. The 4-connected component count of
// the inside set is the topology witness the pipeline preserves.
struct DomainMask {
    GridSpec spec;
    std::vector<std::uint8_t> inside;

    DomainMask() = default;
    explicit DomainMask(const GridSpec& s) : spec(s), inside(s.size(), 0) {}

    bool is_inside(int h, int k) const { return inside[spec.idx(h, k)] != 0; }
    void set(int h, int k, bool v) { inside[spec.idx(h, k)] = v ? 1 : 0; }

    std::size_t inside_count() const {
        std::size_t n = 0;
        for (auto v : inside) n += v;
        return n;
    }

    int component_count() const;
};

namespace detail {

inline int flood_components(const GridSpec& spec, const std::vector<std::uint8_t>& set,
                            std::vector<int>* labels_out = nullptr) {
    std::vector<int> labels(set.size(), -1);
    int next = 0;
    std::deque<PixelIndex> queue;
    for (int k = 0; k < spec.K; ++k) {
        for (int h = 0; h < spec.H; ++h) {
            const std::size_t i = spec.idx(h, k);
            if (!set[i] || labels[i] >= 0) continue;
            labels[i] = next;
            queue.push_back({h, k});
            while (!queue.empty()) {
                auto [ch, ck] = queue.front();
                queue.pop_front();
                constexpr int dh[4] = {1, -1, 0, 0};
                constexpr int dk[4] = {0, 0, 1, -1};
                for (int d = 0; d < 4; ++d) {
                    const int nh = ch + dh[d], nk = ck + dk[d];
                    if (nh < 0 || nh >= spec.H || nk < 0 || nk >= spec.K) continue;
                    const std::size_t ni = spec.idx(nh, nk);
                    if (set[ni] && labels[ni] < 0) {
                        labels[ni] = next;
                        queue.push_back({nh, nk});
                    }
                }
            }
            ++next;
        }
    }
    if (labels_out) *labels_out = std::move(labels);
    return next;
}

}  // namespace detail

inline int DomainMask::component_count() const {
    return detail::flood_components(spec, inside);
}

// Edge set of the mask: a pixel of the inside set is an edge pixel iff some
// 4-neighbor lies outside the mask or outside the image. Interior = inside
// minus edges.
struct EdgeInfo {
    std::vector<std::uint8_t> edge;
    std::vector<std::uint8_t> interior;
    std::size_t edge_count = 0;
    std::size_t interior_count = 0;
};

inline EdgeInfo detect_edges(const DomainMask& mask) {
    require(mask.inside_count() > 0, "empty-mask", "detect_edges on an empty mask");
    const GridSpec& g = mask.spec;
    EdgeInfo info;
    info.edge.assign(g.size(), 0);
    info.interior.assign(g.size(), 0);
    for (int k = 0; k < g.K; ++k) {
        for (int h = 0; h < g.H; ++h) {
            if (!mask.is_inside(h, k)) continue;
            bool is_edge = h == 0 || h == g.H - 1 || k == 0 || k == g.K - 1;
            if (!is_edge)
                is_edge = !mask.is_inside(h - 1, k) || !mask.is_inside(h + 1, k) ||
                          !mask.is_inside(h, k - 1) || !mask.is_inside(h, k + 1);
            const std::size_t i = g.idx(h, k);
            if (is_edge) {
                info.edge[i] = 1;
                ++info.edge_count;
            } else {
                info.interior[i] = 1;
                ++info.interior_count;
            }
        }
    }
    return info;
}

inline std::vector<PixelIndex> interior_pixels(const DomainMask& mask) {
    const EdgeInfo info = detect_edges(mask);
    std::vector<PixelIndex> pts;
    pts.reserve(info.interior_count);
    for (int k = 0; k < mask.spec.K; ++k)
        for (int h = 0; h < mask.spec.H; ++h)
            if (info.interior[mask.spec.idx(h, k)]) pts.push_back({h, k});
    return pts;
}

// Hosting image border of a pixel. Corner pixels belong to two borders; the
// fixed priority left, right, bottom, top splits corner-touching chains
// deterministically.
enum class Border { none, left, right, bottom, top };

inline Border border_of(const GridSpec& g, int h, int k) {
    if (h == 0) return Border::left;
    if (h == g.H - 1) return Border::right;
    if (k == 0) return Border::bottom;
    if (k == g.K - 1) return Border::top;
    return Border::none;
}

inline Vec2 outward_normal(Border b) {
    switch (b) {
        case Border::left: return {-1.0, 0.0};
        case Border::right: return {1.0, 0.0};
        case Border::bottom: return {0.0, -1.0};
        case Border::top: return {0.0, 1.0};
        default: return {0.0, 0.0};
    }
}

// Ordered 4-connected pixel chain. `border` is none for wall candidates.
struct Chain {
    std::vector<PixelIndex> pixels;
    Border border = Border::none;

    std::vector<Vec2> points(const GridSpec& g) const {
        std::vector<Vec2> pts;
        pts.reserve(pixels.size());
        for (auto [h, k] : pixels) pts.push_back(g.center(h, k));
        return pts;
    }
    double length(const GridSpec& g) const {
        double L = 0.0;
        for (std::size_t i = 1; i < pixels.size(); ++i) {
            const Vec2 a = g.center(pixels[i - 1].first, pixels[i - 1].second);
            const Vec2 b = g.center(pixels[i].first, pixels[i].second);
            L += norm(b - a);
        }
        return L;
    }
    Vec2 centroid(const GridSpec& g) const {
        Vec2 q{0, 0};
        for (auto [h, k] : pixels) q += g.center(h, k);
        return (1.0 / static_cast<double>(pixels.size())) * q;
    }
};

namespace detail {

// Orders one 4-connected component by walking adjacency from an endpoint
// (a pixel with a single in-component neighbor); closed loops start at the
// raster-first pixel. Neighbor preference is fixed for determinism.
inline std::vector<PixelIndex> walk_order(const GridSpec& g, const std::vector<PixelIndex>& comp) {
    if (comp.size() <= 2) return comp;
    std::vector<std::uint8_t> member(g.size(), 0), used(g.size(), 0);
    for (auto [h, k] : comp) member[g.idx(h, k)] = 1;
    auto degree = [&](PixelIndex p) {
        constexpr int dh[4] = {1, -1, 0, 0};
        constexpr int dk[4] = {0, 0, 1, -1};
        int deg = 0;
        for (int d = 0; d < 4; ++d) {
            const int nh = p.first + dh[d], nk = p.second + dk[d];
            if (nh >= 0 && nh < g.H && nk >= 0 && nk < g.K && member[g.idx(nh, nk)]) ++deg;
        }
        return deg;
    };
    PixelIndex start = comp.front();
    for (const auto& p : comp)
        if (degree(p) == 1) {
            start = p;
            break;
        }
    std::vector<PixelIndex> ordered;
    ordered.reserve(comp.size());
    std::vector<PixelIndex> stack{start};
    while (!stack.empty()) {
        const PixelIndex p = stack.back();
        stack.pop_back();
        const std::size_t i = g.idx(p.first, p.second);
        if (used[i]) continue;
        used[i] = 1;
        ordered.push_back(p);
        constexpr int dh[4] = {0, 0, -1, 1};
        constexpr int dk[4] = {-1, 1, 0, 0};
        for (int d = 0; d < 4; ++d) {
            const int nh = p.first + dh[d], nk = p.second + dk[d];
            if (nh >= 0 && nh < g.H && nk >= 0 && nk < g.K) {
                const std::size_t ni = g.idx(nh, nk);
                if (member[ni] && !used[ni]) stack.push_back({nh, nk});
            }
        }
    }
    return ordered;
}

inline std::vector<Chain> chain_group(const GridSpec& g, const std::vector<std::uint8_t>& group,
                                      Border border) {
    std::vector<int> labels;
    const int n = flood_components(g, group, &labels);
    std::vector<std::vector<PixelIndex>> comps(n);
    for (int k = 0; k < g.K; ++k)
        for (int h = 0; h < g.H; ++h) {
            const int lbl = labels[g.idx(h, k)];
            if (lbl >= 0) comps[lbl].push_back({h, k});
        }
    std::vector<Chain> chains;
    for (auto& comp : comps) {
        Chain c;
        c.pixels = walk_order(g, comp);
        c.border = border;
        chains.push_back(std::move(c));
    }
    return chains;
}

}  // namespace detail

// Splits the edge set into border-resident pixels (inlet/outlet candidates,
// grouped per hosting border) and the rest (wall candidates), then chains
// each group into maximal ordered 4-connected runs.
inline std::vector<Chain> partition_chains(const GridSpec& g, const EdgeInfo& edges) {
    std::vector<std::uint8_t> wall_group(g.size(), 0);
    std::vector<std::uint8_t> border_group[4];
    for (auto& b : border_group) b.assign(g.size(), 0);
    for (int k = 0; k < g.K; ++k)
        for (int h = 0; h < g.H; ++h) {
            const std::size_t i = g.idx(h, k);
            if (!edges.edge[i]) continue;
            const Border b = border_of(g, h, k);
            if (b == Border::none)
                wall_group[i] = 1;
            else
                border_group[static_cast<int>(b) - 1][i] = 1;
        }
    std::vector<Chain> chains = detail::chain_group(g, wall_group, Border::none);
    for (int b = 0; b < 4; ++b) {
        auto part = detail::chain_group(g, border_group[b], static_cast<Border>(b + 1));
        chains.insert(chains.end(), part.begin(), part.end());
    }
    return chains;
}

struct BoundarySegments {
    GridSpec spec;
    std::vector<Chain> wall, inlet, outlet;
};

// Border chains become inlets when their mean measured velocity points into
// the image (negative dot with the hosting border's outward normal), outlets
// otherwise; non-border chains are walls. A mean below 1e-9 cm/s is an
// ambiguous-physics error, not a guess.
inline BoundarySegments classify_boundaries(const std::vector<Chain>& chains,
                                            const VectorField2& noisy) {
    BoundarySegments seg;
    seg.spec = noisy.spec;
    for (const Chain& c : chains) {
        if (c.border == Border::none) {
            seg.wall.push_back(c);
            continue;
        }
        Vec2 mean{0, 0};
        for (auto [h, k] : c.pixels) mean += noisy.at(h, k);
        mean *= 1.0 / static_cast<double>(c.pixels.size());
        require(norm(mean) >= 1e-9, "classification-error",
                "boundary chain with zero-magnitude mean velocity");
        if (dot(mean, outward_normal(c.border)) < 0.0)
            seg.inlet.push_back(c);
        else
            seg.outlet.push_back(c);
    }
    return seg;
}

// Interior sample: a uniformly chosen interior pixel center plus offsets
// drawn from (-eps, eps) per axis.
inline std::vector<Vec2> sample_interior_pixels(const GridSpec& g,
                                                const std::vector<PixelIndex>& pixels, int count,
                                                Rng& rng) {
    require(!pixels.empty(), "empty-interior", "sample_interior with empty interior set");
    require(count >= 1, "invalid-count", "sample_interior needs count >= 1");
    std::vector<Vec2> out;
    out.reserve(count);
    std::uniform_int_distribution<std::size_t> pick(0, pixels.size() - 1);
    for (int m = 0; m < count; ++m) {
        const auto [h, k] = pixels[pick(rng)];
        out.push_back({g.x(h) + uniform(rng, -g.eps, g.eps), g.y(k) + uniform(rng, -g.eps, g.eps)});
    }
    return out;
}

inline std::vector<Vec2> sample_interior(const DomainMask& mask, int count, Rng& rng) {
    return sample_interior_pixels(mask.spec, interior_pixels(mask), count, rng);
}

// Arc-length-uniform samples on the chain polyline via piecewise linear
// interpolation; every sample lies exactly on the polyline.
inline std::vector<Vec2> sample_segment(const Chain& chain, const GridSpec& g, int count,
                                        Rng& rng) {
    require(chain.pixels.size() >= 2, "degenerate-chain",
            "sample_segment needs a chain with at least 2 points");
    require(count >= 1, "invalid-count", "sample_segment needs count >= 1");
    const auto pts = chain.points(g);
    std::vector<double> cum(pts.size(), 0.0);
    for (std::size_t j = 1; j < pts.size(); ++j) cum[j] = cum[j - 1] + norm(pts[j] - pts[j - 1]);
    const double L = cum.back();
    require(L > 0.0, "degenerate-chain", "sample_segment on a zero-length chain");
    std::vector<Vec2> out;
    out.reserve(count);
    for (int m = 0; m < count; ++m) {
        const double l = uniform(rng, 0.0, L);
        std::size_t j = 1;
        while (j + 1 < cum.size() && cum[j] < l) ++j;
        const double seg = cum[j] - cum[j - 1];
        const double a = (cum[j] - l) / seg, b = (l - cum[j - 1]) / seg;
        out.push_back({a * pts[j - 1].x + b * pts[j].x, a * pts[j - 1].y + b * pts[j].y});
    }
    return out;
}

// Removes inside components of size 1 that are not the largest component.
inline void remove_single_pixel_islands(DomainMask& mask) {
    std::vector<int> labels;
    const int n = detail::flood_components(mask.spec, mask.inside, &labels);
    if (n <= 1) return;
    std::vector<std::size_t> sizes(n, 0);
    for (int lbl : labels)
        if (lbl >= 0) ++sizes[lbl];
    const std::size_t largest = *std::max_element(sizes.begin(), sizes.end());
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] >= 0 && sizes[labels[i]] == 1 && largest > 1) mask.inside[i] = 0;
}

// Keeps the n largest inside components (ties broken by first appearance).
inline void keep_largest_components(DomainMask& mask, int keep) {
    std::vector<int> labels;
    const int n = detail::flood_components(mask.spec, mask.inside, &labels);
    if (n <= keep) return;
    std::vector<std::size_t> sizes(n, 0);
    for (int lbl : labels)
        if (lbl >= 0) ++sizes[lbl];
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return sizes[a] > sizes[b]; });
    std::vector<std::uint8_t> keep_label(n, 0);
    for (int i = 0; i < keep; ++i) keep_label[order[i]] = 1;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] >= 0 && !keep_label[labels[i]]) mask.inside[i] = 0;
}

// Mask update under a correction mapping: the new mask is the old one
// composed with c, thresholding the interpolated characteristic function at
// 0.5 (zero outside the physical extent). Single-pixel islands produced by
// the warp are dropped.
inline DomainMask warp_mask(const DomainMask& mask, const MappingField& c) {
    require(mask.spec == c.spec, "shape-mismatch", "warp_mask needs matching grids");
    require(c.all_finite(), "invalid-mapping", "warp_mask: non-finite mapping coordinates");
    ScalarField chi(mask.spec);
    for (std::size_t i = 0; i < chi.v.size(); ++i) chi.v[i] = mask.inside[i] ? 1.0 : 0.0;
    DomainMask out(mask.spec);
    for (int k = 0; k < mask.spec.K; ++k)
        for (int h = 0; h < mask.spec.H; ++h) {
            const Vec2 q = c.at(h, k);
            if (!inside_extent(mask.spec, q)) continue;
            if (sample_bilinear(chi, q) >= 0.5) out.set(h, k, true);
        }
    remove_single_pixel_islands(out);
    return out;
}

// Morphological dilation by `rounds` 4-connected steps (used to build
// perturbed initial masks for end-to-end runs).
inline DomainMask dilate(const DomainMask& mask, int rounds) {
    DomainMask cur = mask;
    for (int r = 0; r < rounds; ++r) {
        DomainMask nxt = cur;
        for (int k = 0; k < cur.spec.K; ++k)
            for (int h = 0; h < cur.spec.H; ++h) {
                if (cur.is_inside(h, k)) continue;
                const bool touch = (h > 0 && cur.is_inside(h - 1, k)) ||
                                   (h + 1 < cur.spec.H && cur.is_inside(h + 1, k)) ||
                                   (k > 0 && cur.is_inside(h, k - 1)) ||
                                   (k + 1 < cur.spec.K && cur.is_inside(h, k + 1));
                if (touch) nxt.set(h, k, true);
            }
        cur = nxt;
    }
    return cur;
}

}  // namespace flowrecon
