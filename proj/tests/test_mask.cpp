#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "flowrecon/mask.hpp"

using namespace flowrecon;

namespace {

DomainMask full_mask(int H, int K, double eps = 1.0) {
    DomainMask m(GridSpec(H, K, eps));
    std::fill(m.inside.begin(), m.inside.end(), 1);
    return m;
}

DomainMask rect_mask(const GridSpec& g, int h0, int h1, int k0, int k1) {
    DomainMask m(g);
    for (int k = k0; k <= k1; ++k)
        for (int h = h0; h <= h1; ++h) m.set(h, k, true);
    return m;
}

// Brute-force edge classification: literal transcription of the rule,
// evaluated per pixel without any shared machinery.
bool oracle_is_edge(const DomainMask& m, int h, int k) {
    if (!m.is_inside(h, k)) return false;
    const int H = m.spec.H, K = m.spec.K;
    auto outside = [&](int hh, int kk) {
        if (hh < 0 || hh >= H || kk < 0 || kk >= K) return true;
        return !m.is_inside(hh, kk);
    };
    return outside(h - 1, k) || outside(h + 1, k) || outside(h, k - 1) || outside(h, k + 1);
}

}  // namespace

TEST_CASE("detect_edges basics") {
    SECTION("3x3 all inside") {
        auto m = full_mask(3, 3);
        auto info = detect_edges(m);
        // Center pixel has all four neighbors inside the mask and the image,
        // so it is interior; the eight surrounding pixels are edges.
        CHECK(info.edge_count == 8);
        CHECK(info.interior_count == 1);
        CHECK(info.interior[m.spec.idx(1, 1)] == 1);
    }
    SECTION("5x5 all inside, brute force over all pixels") {
        auto m = full_mask(5, 5);
        auto info = detect_edges(m);
        for (int k = 0; k < 5; ++k)
            for (int h = 0; h < 5; ++h)
                CHECK(static_cast<bool>(info.edge[m.spec.idx(h, k)]) == oracle_is_edge(m, h, k));
        CHECK(info.edge_count == 16);
        CHECK(info.interior_count == 9);
    }
    SECTION("single-pixel mask") {
        DomainMask m(GridSpec(4, 4, 1.0));
        m.set(2, 1, true);
        auto info = detect_edges(m);
        CHECK(info.edge_count == 1);
        CHECK(info.interior_count == 0);
        CHECK(info.edge[m.spec.idx(2, 1)] == 1);
    }
    SECTION("empty mask is an error") {
        DomainMask m(GridSpec(4, 4, 1.0));
        CHECK_THROWS_AS(detect_edges(m), FlowError);
    }
}

TEST_CASE("edges and interior partition the mask") {
    GridSpec g(16, 12, 0.5);
    Rng rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        DomainMask m(g);
        for (auto& v : m.inside) v = uniform(rng, 0, 1) < 0.6 ? 1 : 0;
        if (m.inside_count() == 0) m.set(3, 3, true);
        auto info = detect_edges(m);
        for (std::size_t i = 0; i < m.inside.size(); ++i) {
            CHECK((info.edge[i] | info.interior[i]) == m.inside[i]);
            CHECK((info.edge[i] & info.interior[i]) == 0);
        }
    }
}

TEST_CASE("partition_chains orders runs and splits gaps") {
    GridSpec g(9, 9, 1.0);
    SECTION("straight vertical run of 5 interior edge pixels") {
        EdgeInfo info;
        info.edge.assign(g.size(), 0);
        for (int k = 2; k <= 6; ++k) info.edge[g.idx(4, k)] = 1;
        auto chains = partition_chains(g, info);
        REQUIRE(chains.size() == 1);
        REQUIRE(chains[0].pixels.size() == 5);
        CHECK(chains[0].border == Border::none);
        for (std::size_t i = 1; i < 5; ++i) {
            CHECK(chains[0].pixels[i].first == 4);
            CHECK(std::abs(chains[0].pixels[i].second - chains[0].pixels[i - 1].second) == 1);
        }
    }
    SECTION("two runs separated by a gap give two chains") {
        EdgeInfo info;
        info.edge.assign(g.size(), 0);
        for (int k = 1; k <= 3; ++k) info.edge[g.idx(2, k)] = 1;
        for (int k = 5; k <= 7; ++k) info.edge[g.idx(6, k)] = 1;
        auto chains = partition_chains(g, info);
        CHECK(chains.size() == 2);
    }
    SECTION("border pixels split from wall pixels") {
        EdgeInfo info;
        info.edge.assign(g.size(), 0);
        // one run hugging the left border plus an adjacent interior run
        for (int k = 3; k <= 5; ++k) info.edge[g.idx(0, k)] = 1;
        for (int k = 3; k <= 5; ++k) info.edge[g.idx(1, k)] = 1;
        auto chains = partition_chains(g, info);
        REQUIRE(chains.size() == 2);
        int border_chains = 0, wall_chains = 0;
        for (const auto& c : chains)
            (c.border == Border::none ? wall_chains : border_chains)++;
        CHECK(border_chains == 1);
        CHECK(wall_chains == 1);
    }
}

TEST_CASE("classify_boundaries inflow test") {
    GridSpec g(8, 8, 1.0);
    VectorField2 flow(g);
    for (int k = 0; k < 8; ++k)
        for (int h = 0; h < 8; ++h) flow.set(h, k, {1.0, 0.0});

    Chain left, right;
    left.border = Border::left;
    right.border = Border::right;
    for (int k = 2; k <= 5; ++k) {
        left.pixels.push_back({0, k});
        right.pixels.push_back({7, k});
    }
    auto seg = classify_boundaries({left, right}, flow);
    REQUIRE(seg.inlet.size() == 1);
    REQUIRE(seg.outlet.size() == 1);
    CHECK(seg.inlet[0].border == Border::left);
    CHECK(seg.outlet[0].border == Border::right);

    SECTION("invariant under positive scaling of the field") {
        VectorField2 scaled = flow;
        for (auto& v : scaled.ux) v *= 42.0;
        for (auto& v : scaled.uy) v *= 42.0;
        auto seg2 = classify_boundaries({left, right}, scaled);
        CHECK(seg2.inlet.size() == 1);
        CHECK(seg2.outlet.size() == 1);
        CHECK(seg2.inlet[0].border == Border::left);
    }
    SECTION("zero-magnitude mean is a classification error") {
        VectorField2 still(g);
        CHECK_THROWS_AS(classify_boundaries({left}, still), FlowError);
    }
    SECTION("wall chains pass through") {
        Chain wall;
        wall.border = Border::none;
        wall.pixels = {{3, 3}, {3, 4}};
        auto seg3 = classify_boundaries({wall}, flow);
        CHECK(seg3.wall.size() == 1);
        CHECK(seg3.inlet.empty());
    }
}

TEST_CASE("sample_interior") {
    GridSpec g(5, 5, 1.0);
    SECTION("single interior pixel bounds the support") {
        auto m = rect_mask(g, 1, 3, 1, 3);  // interior is only (2,2)
        auto interior = interior_pixels(m);
        REQUIRE(interior.size() == 1);
        REQUIRE(interior[0] == PixelIndex{2, 2});
        Rng rng(5);
        const Vec2 c = g.center(2, 2);
        for (const Vec2& p : sample_interior(m, 500, rng)) {
            CHECK(p.x > c.x - g.eps);
            CHECK(p.x < c.x + g.eps);
            CHECK(p.y > c.y - g.eps);
            CHECK(p.y < c.y + g.eps);
        }
    }
    SECTION("two interior pixels drawn with equal frequency") {
        GridSpec g2(6, 5, 1.0);
        auto m = rect_mask(g2, 1, 4, 1, 3);  // interior = (2,2),(3,2)
        auto interior = interior_pixels(m);
        REQUIRE(interior.size() == 2);
        Rng rng(17);
        auto pts = sample_interior(m, 10000, rng);
        int near_first = 0;
        for (const Vec2& p : pts)
            if (std::abs(p.x - g2.x(2)) < std::abs(p.x - g2.x(3))) ++near_first;
        CHECK(std::abs(near_first / 10000.0 - 0.5) < 0.02);
    }
    SECTION("fixed seed reproduces the sample list") {
        auto m = rect_mask(g, 1, 3, 1, 3);
        Rng a(123), b(123);
        auto pa = sample_interior(m, 64, a);
        auto pb = sample_interior(m, 64, b);
        for (std::size_t i = 0; i < pa.size(); ++i) {
            REQUIRE(pa[i].x == pb[i].x);
            REQUIRE(pa[i].y == pb[i].y);
        }
    }
    SECTION("empty interior is an error") {
        DomainMask thin(g);
        thin.set(2, 2, true);
        Rng rng(1);
        CHECK_THROWS_AS(sample_interior(thin, 4, rng), FlowError);
    }
    SECTION("samples stay within eps*sqrt(2) of an interior center") {
        auto m = rect_mask(g, 1, 3, 1, 3);
        Rng rng(9);
        for (const Vec2& p : sample_interior(m, 200, rng))
            CHECK(norm(p - g.center(2, 2)) <= g.eps * std::sqrt(2.0) + 1e-12);
    }
}

TEST_CASE("sample_segment") {
    GridSpec g(8, 8, 1.0);
    SECTION("two-point chain endpoints and midpoint") {
        Chain c;
        c.pixels = {{1, 1}, {2, 1}};
        Rng rng(3);
        auto pts = sample_segment(c, g, 2000, rng);
        const Vec2 p0 = g.center(1, 1), p1 = g.center(2, 1);
        for (const Vec2& p : pts) {
            CHECK(p.y == Catch::Approx(p0.y).margin(1e-12));
            CHECK(p.x >= p0.x - 1e-12);
            CHECK(p.x <= p1.x + 1e-12);
        }
    }
    SECTION("right-angle chain: per-segment counts proportional to length") {
        Chain c;
        c.pixels = {{2, 2}, {3, 2}, {3, 3}};  // two segments of length eps each
        Rng rng(21);
        auto pts = sample_segment(c, g, 100000, rng);
        int on_first = 0;
        for (const Vec2& p : pts)
            if (p.y <= g.y(2) + 1e-12) ++on_first;
        CHECK(std::abs(on_first / 100000.0 - 0.5) < 0.01);
    }
    SECTION("samples lie exactly on the polyline") {
        Chain c;
        c.pixels = {{1, 1}, {2, 1}, {2, 2}, {2, 3}};
        Rng rng(7);
        for (const Vec2& p : sample_segment(c, g, 300, rng)) {
            // distance to the nearest polyline segment
            double best = 1e9;
            auto pts = c.points(g);
            for (std::size_t j = 1; j < pts.size(); ++j) {
                const Vec2 a = pts[j - 1], b = pts[j];
                const Vec2 ab = b - a;
                const double t = std::clamp(dot(p - a, ab) / norm_sq(ab), 0.0, 1.0);
                best = std::min(best, norm(p - (a + t * ab)));
            }
            CHECK(best < 1e-12);
        }
    }
    SECTION("single-point chain is an error") {
        Chain c;
        c.pixels = {{1, 1}};
        Rng rng(2);
        CHECK_THROWS_AS(sample_segment(c, g, 1, rng), FlowError);
    }
}

TEST_CASE("warp_mask") {
    GridSpec g(8, 8, 0.5);
    auto m = rect_mask(g, 2, 5, 1, 3);

    SECTION("identity mapping is the identity on masks") {
        auto w = warp_mask(m, MappingField::identity(g));
        REQUIRE(w.inside == m.inside);
    }
    SECTION("translation by +2eps shifts content by -2eps") {
        MappingField c = MappingField::identity(g);
        for (double& v : c.disp_x) v += 2 * g.eps;
        auto w = warp_mask(m, c);
        auto expect = rect_mask(g, 0, 3, 1, 3);
        REQUIRE(w.inside == expect.inside);
    }
    SECTION("small diffeomorphic warp keeps one component") {
        MappingField c = MappingField::identity(g);
        Rng rng(31);
        for (int k = 0; k < g.K; ++k)
            for (int h = 0; h < g.H; ++h) {
                const Vec2 d{0.4 * g.eps * std::sin(0.5 * h + 0.3 * k),
                             0.4 * g.eps * std::cos(0.4 * h - 0.2 * k)};
                c.set_displacement(h, k, d);
            }
        auto w = warp_mask(m, c);
        REQUIRE(m.component_count() == 1);
        CHECK(w.component_count() == 1);
    }
    SECTION("non-finite mapping is an error") {
        MappingField c = MappingField::identity(g);
        c.disp_x[3] = std::nan("");
        CHECK_THROWS_AS(warp_mask(m, c), FlowError);
    }
}

TEST_CASE("component helpers") {
    GridSpec g(10, 10, 1.0);
    DomainMask m(g);
    for (int h = 1; h <= 4; ++h)
        for (int k = 1; k <= 4; ++k) m.set(h, k, true);
    m.set(8, 8, true);  // single-pixel island
    for (int h = 6; h <= 7; ++h) m.set(h, 1, true);  // 2-pixel island
    REQUIRE(m.component_count() == 3);

    SECTION("remove_single_pixel_islands drops only size-1 islands") {
        DomainMask w = m;
        remove_single_pixel_islands(w);
        CHECK(w.component_count() == 2);
        CHECK_FALSE(w.is_inside(8, 8));
        CHECK(w.is_inside(6, 1));
    }
    SECTION("keep_largest_components enforces a component budget") {
        DomainMask w = m;
        keep_largest_components(w, 1);
        CHECK(w.component_count() == 1);
        CHECK(w.is_inside(2, 2));
        CHECK_FALSE(w.is_inside(6, 1));
    }
}
