#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <unordered_map>
#include <vector>

#include "sclslam/geometry.hpp"

namespace sclslam::detail {

// Exact radius-bounded nearest neighbour over a hashed voxel grid whose cell
// side equals the search radius, so the 27-cell neighbourhood covers every
// candidate within range.
class RadiusGrid {
public:
    RadiusGrid(const std::vector<Vector3>& points, double radius)
        : points_(points), radius_(radius), inv_(1.0 / radius) {
        cells_.reserve(points.size());
        for (std::size_t i = 0; i < points.size(); ++i) cells_[key_of(points[i])].push_back(i);
    }

    // Index of the nearest point within the radius (ties: smaller index), or -1.
    long nearest(const Vector3& q, double* sq_dist = nullptr) const {
        const Key c = key_of(q);
        const double r2 = radius_ * radius_;
        long best = -1;
        double best_d = 0.0;
        for (int dx = -1; dx <= 1; ++dx) {
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dz = -1; dz <= 1; ++dz) {
                    const auto it = cells_.find(Key{c[0] + dx, c[1] + dy, c[2] + dz});
                    if (it == cells_.end()) continue;
                    for (std::size_t i : it->second) {
                        const double d = (points_[i] - q).squaredNorm();
                        if (d > r2) continue;
                        if (best < 0 || d < best_d || (d == best_d && static_cast<long>(i) < best)) {
                            best_d = d;
                            best = static_cast<long>(i);
                        }
                    }
                }
            }
        }
        if (best >= 0 && sq_dist) *sq_dist = best_d;
        return best;
    }

private:
    using Key = std::array<std::int64_t, 3>;
    struct KeyHash {
        std::size_t operator()(const Key& k) const noexcept {
            std::uint64_t h = static_cast<std::uint64_t>(k[0]) * 73856093ULL;
            h ^= static_cast<std::uint64_t>(k[1]) * 19349663ULL;
            h ^= static_cast<std::uint64_t>(k[2]) * 83492791ULL;
            return static_cast<std::size_t>(h);
        }
    };

    Key key_of(const Vector3& p) const {
        return {static_cast<std::int64_t>(std::floor(p.x() * inv_)),
                static_cast<std::int64_t>(std::floor(p.y() * inv_)),
                static_cast<std::int64_t>(std::floor(p.z() * inv_))};
    }

    const std::vector<Vector3>& points_;
    double radius_;
    double inv_;
    std::unordered_map<Key, std::vector<std::size_t>, KeyHash> cells_;
};

}  // namespace sclslam::detail
