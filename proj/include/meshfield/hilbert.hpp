#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "meshfield/common.hpp"

namespace meshfield {

struct BBox {
    double xmin = 0, ymin = 0, xmax = 0, ymax = 0;

    double width() const { return xmax - xmin; }
    double height() const { return ymax - ymin; }

    bool contains(double x, double y) const {
        return x >= xmin && x <= xmax && y >= ymin && y <= ymax;
    }

    static BBox of(const std::vector<std::array<double, 2>>& pts) {
        if (pts.empty()) throw ConfigError("bbox: no points");
        BBox b{pts[0][0], pts[0][1], pts[0][0], pts[0][1]};
        for (auto& p : pts) {
            b.xmin = std::min(b.xmin, p[0]);
            b.xmax = std::max(b.xmax, p[0]);
            b.ymin = std::min(b.ymin, p[1]);
            b.ymax = std::max(b.ymax, p[1]);
        }
        return b;
    }
};

struct GridCell {
    std::uint32_t u = 0, v = 0;
};

/// Maps a point to the 2^order x 2^order grid over the bounding box.
/// A degenerate axis (zero extent) maps to cell coordinate 0.
inline GridCell quantize(double x, double y, const BBox& bbox, int order) {
    if (order < 1 || order > 31) throw ConfigError("quantize: order must be in [1,31]");
    if (!bbox.contains(x, y)) throw ConfigError("quantize: point outside bounding box");
    const double side = static_cast<double>(std::uint64_t(1) << order);
    auto axis = [&](double t, double lo, double extent) -> std::uint32_t {
        if (extent <= 0.0) return 0;
        double cell = std::floor((t - lo) / extent * side);
        if (cell < 0) cell = 0;
        if (cell > side - 1) cell = side - 1;
        return static_cast<std::uint32_t>(cell);
    };
    return {axis(x, bbox.xmin, bbox.width()), axis(y, bbox.ymin, bbox.height())};
}

/// Position of cell (u, v) along the order-n Hilbert curve starting at
/// (0,0) with first step +v. Iterative rotate/reflect formulation; the
/// quadrant digit at the coarsest subdivision is the most significant
/// base-4 digit of the code.
inline std::uint64_t hilbert_index(std::uint32_t u, std::uint32_t v, int order) {
    if (order < 1 || order > 31) throw ConfigError("hilbert_index: order must be in [1,31]");
    const std::uint32_t side = std::uint32_t(1) << order;
    if (u >= side || v >= side) throw ConfigError("hilbert_index: cell out of range");
    std::uint64_t code = 0;
    for (std::uint32_t s = side >> 1; s > 0; s >>= 1) {
        const std::uint32_t rx = (u & s) ? 1 : 0;
        const std::uint32_t ry = (v & s) ? 1 : 0;
        code += std::uint64_t(s) * s * ((3 * rx) ^ ry);
        // rotate quadrant so the sub-curve keeps locality
        if (ry == 0) {
            if (rx == 1) {
                u = s - 1 - u;
                v = s - 1 - v;
            }
            std::swap(u, v);
        }
    }
    return code;
}

/// Inverse of hilbert_index.
inline GridCell hilbert_inverse(std::uint64_t code, int order) {
    if (order < 1 || order > 31) throw ConfigError("hilbert_inverse: order must be in [1,31]");
    const std::uint64_t side = std::uint64_t(1) << order;
    if (code >= side * side) throw ConfigError("hilbert_inverse: code out of range");
    std::uint32_t u = 0, v = 0;
    std::uint64_t t = code;
    for (std::uint64_t s = 1; s < side; s <<= 1) {
        const std::uint32_t rx = 1 & static_cast<std::uint32_t>(t / 2);
        const std::uint32_t ry = 1 & static_cast<std::uint32_t>(t ^ rx);
        if (ry == 0) {
            if (rx == 1) {
                u = static_cast<std::uint32_t>(s) - 1 - u;
                v = static_cast<std::uint32_t>(s) - 1 - v;
            }
            std::swap(u, v);
        }
        u += static_cast<std::uint32_t>(s) * rx;
        v += static_cast<std::uint32_t>(s) * ry;
        t /= 4;
    }
    return {u, v};
}

/// Combines per-subdivision quadrant digits, digit i weighted by 4^i.
inline std::uint64_t code_from_quadrant_digits(const std::vector<int>& digits) {
    std::uint64_t e = 0;
    std::uint64_t w = 1;
    for (int d : digits) {
        if (d < 0 || d > 3) throw ConfigError("quadrant digit out of range");
        e += std::uint64_t(d) * w;
        w <<= 2;
    }
    return e;
}

struct Patch {
    std::size_t start = 0;  // first node in the permuted sequence
    std::size_t end = 0;    // one past the last real node
    std::size_t pad = 0;    // zero rows appended to fill the patch

    std::size_t count() const { return end - start; }
};

/// Splits a length-L sequence into ceil(L/p) patches of size p; only the
/// final patch may carry padding.
inline std::vector<Patch> make_patches(std::size_t length, std::size_t patch_size) {
    if (length < 1 || patch_size < 1) throw ConfigError("make_patches: length and patch size must be >= 1");
    std::vector<Patch> out;
    for (std::size_t start = 0; start < length; start += patch_size) {
        const std::size_t end = std::min(start + patch_size, length);
        out.push_back({start, end, patch_size - (end - start)});
    }
    return out;
}

/// Hilbert codes, the stable sort permutation, and the patch layout for
/// one node set.
struct SerializationPlan {
    int order = 0;
    std::size_t patch_size = 0;
    std::vector<std::uint64_t> codes;     // per original node index
    std::vector<std::size_t> perm;        // perm[i] = original index of sequence slot i
    std::vector<std::size_t> inverse;     // inverse[orig] = sequence slot
    std::vector<Patch> patches;

    std::size_t token_count() const { return patches.size(); }
    std::size_t padded_length() const { return patches.size() * patch_size; }
};

inline SerializationPlan plan_serialization(const std::vector<std::array<double, 2>>& nodes,
                                            const BBox& bbox, int order, std::size_t patch_size) {
    if (nodes.empty()) throw ConfigError("plan_serialization: empty node set");
    SerializationPlan plan;
    plan.order = order;
    plan.patch_size = patch_size;
    plan.codes.resize(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const GridCell c = quantize(nodes[i][0], nodes[i][1], bbox, order);
        plan.codes[i] = hilbert_index(c.u, c.v, order);
    }
    plan.perm.resize(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) plan.perm[i] = i;
    // equal codes keep original order, so re-serializing a sorted mesh is the identity
    std::stable_sort(plan.perm.begin(), plan.perm.end(),
                     [&](std::size_t a, std::size_t b) { return plan.codes[a] < plan.codes[b]; });
    plan.inverse.resize(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) plan.inverse[plan.perm[i]] = i;
    plan.patches = make_patches(nodes.size(), patch_size);
    return plan;
}

}  // namespace meshfield
