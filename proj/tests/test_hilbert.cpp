#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <set>
#include <vector>

#include "meshfield/hilbert.hpp"
#include "meshfield/mesh.hpp"

using namespace meshfield;

namespace {

// Independent oracle: generates the order-n curve as an explicit cell
// sequence by recursive quadrant subdivision with rotated frames. The
// library uses the iterative bit formulation, so agreement is meaningful.
void curve_rec(double x0, double y0, double xi_x, double xi_y, double yi_x, double yi_y, int n,
               std::vector<std::pair<std::uint32_t, std::uint32_t>>& out) {
    if (n <= 0) {
        out.emplace_back(static_cast<std::uint32_t>(x0 + (xi_x + yi_x) / 2),
                         static_cast<std::uint32_t>(y0 + (xi_y + yi_y) / 2));
        return;
    }
    curve_rec(x0, y0, yi_x / 2, yi_y / 2, xi_x / 2, xi_y / 2, n - 1, out);
    curve_rec(x0 + xi_x / 2, y0 + xi_y / 2, xi_x / 2, xi_y / 2, yi_x / 2, yi_y / 2, n - 1, out);
    curve_rec(x0 + xi_x / 2 + yi_x / 2, y0 + xi_y / 2 + yi_y / 2, xi_x / 2, xi_y / 2, yi_x / 2,
              yi_y / 2, n - 1, out);
    curve_rec(x0 + xi_x / 2 + yi_x, y0 + xi_y / 2 + yi_y, -yi_x / 2, -yi_y / 2, -xi_x / 2,
              -xi_y / 2, n - 1, out);
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> curve_oracle(int order) {
    const double side = static_cast<double>(1u << order);
    std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
    curve_rec(0, 0, 0, side, side, 0, order, out);
    return out;
}

}  // namespace

TEST_CASE("order-1 curve enumerates the four cells") {
    const auto path = curve_oracle(1);
    REQUIRE(path.size() == 4);
    CHECK(path[0] == std::pair<std::uint32_t, std::uint32_t>{0, 0});
    CHECK(path[1] == std::pair<std::uint32_t, std::uint32_t>{0, 1});
    CHECK(path[2] == std::pair<std::uint32_t, std::uint32_t>{1, 1});
    CHECK(path[3] == std::pair<std::uint32_t, std::uint32_t>{1, 0});

    CHECK(hilbert_index(0, 0, 1) == 0);
    CHECK(hilbert_index(0, 1, 1) == 1);
    CHECK(hilbert_index(1, 1, 1) == 2);
    CHECK(hilbert_index(1, 0, 1) == 3);
}

TEST_CASE("index matches the recursive oracle for orders 1..5") {
    for (int n = 1; n <= 5; ++n) {
        const auto path = curve_oracle(n);
        for (std::size_t pos = 0; pos < path.size(); ++pos) {
            REQUIRE(hilbert_index(path[pos].first, path[pos].second, n) == pos);
        }
    }
}

TEST_CASE("inverse round-trips every code") {
    CHECK(hilbert_inverse(0, 1).u == 0);
    CHECK(hilbert_inverse(0, 1).v == 0);
    CHECK(hilbert_inverse(3, 1).u == 1);
    CHECK(hilbert_inverse(3, 1).v == 0);
    for (int n = 1; n <= 3; ++n) {
        for (std::uint64_t e = 0; e < (std::uint64_t(1) << (2 * n)); ++e) {
            const auto c = hilbert_inverse(e, n);
            REQUIRE(hilbert_index(c.u, c.v, n) == e);
        }
    }
}

TEST_CASE("consecutive codes are grid neighbours") {
    for (int n = 1; n <= 5; ++n) {
        const auto path = curve_oracle(n);
        for (std::size_t i = 1; i < path.size(); ++i) {
            const int dx = std::abs(int(path[i].first) - int(path[i - 1].first));
            const int dy = std::abs(int(path[i].second) - int(path[i - 1].second));
            REQUIRE(dx + dy == 1);
        }
    }
}

TEST_CASE("range checks") {
    CHECK_THROWS_AS(hilbert_index(2, 0, 1), ConfigError);
    CHECK_THROWS_AS(hilbert_inverse(4, 1), ConfigError);
    CHECK_THROWS_AS(hilbert_index(0, 0, 0), ConfigError);
}

TEST_CASE("digit weighting") {
    CHECK(code_from_quadrant_digits({1, 2}) == 9);
    CHECK(code_from_quadrant_digits({3, 0, 1}) == 3 + 16);
}

TEST_CASE("quantize maps the box corners and midpoint") {
    const BBox box{0, 0, 1, 1};
    for (int n : {1, 4, 16}) {
        CHECK(quantize(0, 0, box, n).u == 0);
        CHECK(quantize(0, 0, box, n).v == 0);
    }
    CHECK(quantize(1, 1, box, 4).u == 15);
    CHECK(quantize(1, 1, box, 4).v == 15);
    CHECK(quantize(0.5, 0.5, box, 1).u == 1);
    CHECK(quantize(0.5, 0.5, box, 1).v == 1);
    CHECK_THROWS_AS(quantize(1.5, 0.5, box, 4), ConfigError);

    // degenerate axis collapses to 0 and serialization degenerates to 1D
    const BBox flat{0, 2, 1, 2};
    CHECK(quantize(0.75, 2.0, flat, 4).v == 0);
    CHECK(quantize(0.75, 2.0, flat, 4).u == 12);
}

TEST_CASE("patch layout") {
    auto p1 = make_patches(10, 5);
    REQUIRE(p1.size() == 2);
    CHECK(p1.back().pad == 0);

    auto p2 = make_patches(10, 4);
    REQUIRE(p2.size() == 3);
    CHECK(p2.back().pad == 2);
    CHECK(p2[0].count() == 4);

    CHECK(make_patches(5404, 128).size() == 43);
    CHECK_THROWS_AS(make_patches(0, 4), ConfigError);

    // token-count law over a small sweep
    for (std::size_t L : {std::size_t(1), std::size_t(2), std::size_t(7), std::size_t(64),
                          std::size_t(129), std::size_t(1000)})
        for (std::size_t p : {std::size_t(1), std::size_t(2), std::size_t(3), std::size_t(8),
                              std::size_t(128)})
            CHECK(make_patches(L, p).size() == (L + p - 1) / p);
}

TEST_CASE("reserialize sorts by code with stable ties") {
    ConditionSchema empty_schema;

    Mesh single({{0.25, 0.25}}, empty_schema);
    CHECK(reserialize(single, 4, 2).perm == std::vector<std::size_t>{0});

    // two nodes already in code order keep their order
    Mesh two({{0.1, 0.1}, {0.9, 0.1}}, empty_schema, BBox{0, 0, 1, 1});
    CHECK(reserialize(two, 2, 2).perm == std::vector<std::size_t>{0, 1});

    // nodes quantized to the same cell keep original order
    Mesh ties({{0.6, 0.6}, {0.55, 0.55}, {0.1, 0.1}}, empty_schema, BBox{0, 0, 1, 1});
    const auto plan = reserialize(ties, 1, 2);
    CHECK(plan.codes[0] == plan.codes[1]);
    CHECK(plan.perm == std::vector<std::size_t>{2, 0, 1});
}

TEST_CASE("grid centers follow the order-2 traversal") {
    const auto path = curve_oracle(2);
    std::vector<std::array<double, 2>> pts;
    // nodes laid out row-major over the 4x4 cell centers
    for (int vy = 0; vy < 4; ++vy)
        for (int ux = 0; ux < 4; ++ux) pts.push_back({(ux + 0.5) / 4.0, (vy + 0.5) / 4.0});
    Mesh mesh(pts, ConditionSchema(std::vector<ConditionGroup>{}), BBox{0, 0, 1, 1});
    const auto plan = reserialize(mesh, 2, 4);
    for (std::size_t pos = 0; pos < 16; ++pos) {
        const auto cell = path[pos];
        const std::size_t rowmajor = std::size_t(cell.second) * 4 + cell.first;
        REQUIRE(plan.perm[pos] == rowmajor);
    }
}

TEST_CASE("re-serializing an already sorted mesh is the identity") {
    Rng rng(5);
    std::vector<std::array<double, 2>> pts;
    for (int i = 0; i < 137; ++i) pts.push_back({rng.uniform(), rng.uniform()});
    Mesh mesh(pts, ConditionSchema(std::vector<ConditionGroup>{}), BBox{0, 0, 1, 1});
    const auto plan = reserialize(mesh, 6, 16);

    Mesh sorted = mesh.reordered(plan.perm);
    const auto plan2 = reserialize(sorted, 6, 16);
    for (std::size_t i = 0; i < plan2.perm.size(); ++i) REQUIRE(plan2.perm[i] == i);
}

TEST_CASE("denser regions receive proportionally more patches") {
    // left half has 4x the node density of the right half
    Rng rng(11);
    std::vector<std::array<double, 2>> pts;
    for (int i = 0; i < 400; ++i) pts.push_back({rng.uniform(0.0, 0.5), rng.uniform()});
    for (int i = 0; i < 100; ++i) pts.push_back({rng.uniform(0.5, 1.0), rng.uniform()});
    Mesh mesh(pts, ConditionSchema(std::vector<ConditionGroup>{}), BBox{0, 0, 1, 1});
    const auto plan = reserialize(mesh, 8, 10);

    std::size_t left = 0, right = 0;
    for (const auto& patch : plan.patches) {
        std::size_t in_left = 0;
        for (std::size_t s = patch.start; s < patch.end; ++s)
            if (mesh.node(plan.perm[s])[0] < 0.5) ++in_left;
        (2 * in_left >= patch.count() ? left : right) += 1;
    }
    CHECK(left * 1.0 >= 2.0 * right);
}
