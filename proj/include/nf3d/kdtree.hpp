#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <numeric>
#include <vector>

#include "nf3d/types.hpp"

namespace nf3d {

/// Static k-d tree over a fixed 3D point set for exact nearest-neighbor
/// queries. Ties on distance resolve to the lowest point index, so results
/// match a brute-force scan in index order bit for bit.
class KdTree3 {
public:
    explicit KdTree3(const Eigen::Matrix3Xd& points) : pts_(points) {
        const Eigen::Index n = pts_.cols();
        if (n == 0) {
            throw DataError("kdtree: empty point set");
        }
        index_.resize(static_cast<std::size_t>(n));
        std::iota(index_.begin(), index_.end(), Eigen::Index{0});
        nodes_.reserve(static_cast<std::size_t>(n));
        root_ = build(0, n);
    }

    struct Hit {
        Eigen::Index index = -1;
        double squared_distance = 0.0;
    };

    Hit nearest(const Eigen::Vector3d& query) const {
        Hit best;
        best.squared_distance = std::numeric_limits<double>::infinity();
        search(root_, query, best);
        return best;
    }

    Eigen::Index size() const { return pts_.cols(); }

private:
    struct Node {
        Eigen::Index point = -1;
        int axis = 0;
        std::int32_t left = -1;
        std::int32_t right = -1;
    };

    // Splits [lo, hi) of index_ at the median along the widest axis of the
    // range's bounding box. Comparator ties on index so the build is
    // deterministic for duplicate coordinates.
    std::int32_t build(Eigen::Index lo, Eigen::Index hi) {
        if (lo >= hi) return -1;
        Eigen::Vector3d mins = pts_.col(index_[static_cast<std::size_t>(lo)]);
        Eigen::Vector3d maxs = mins;
        for (Eigen::Index i = lo + 1; i < hi; ++i) {
            const auto& p = pts_.col(index_[static_cast<std::size_t>(i)]);
            mins = mins.cwiseMin(p);
            maxs = maxs.cwiseMax(p);
        }
        int axis = 0;
        (maxs - mins).maxCoeff(&axis);

        const Eigen::Index mid = lo + (hi - lo) / 2;
        auto first = index_.begin() + lo;
        auto median = index_.begin() + mid;
        auto last = index_.begin() + hi;
        std::nth_element(first, median, last, [&](Eigen::Index a, Eigen::Index b) {
            const double ca = pts_(axis, a);
            const double cb = pts_(axis, b);
            return ca < cb || (ca == cb && a < b);
        });

        Node node;
        node.point = index_[static_cast<std::size_t>(mid)];
        node.axis = axis;
        const auto slot = static_cast<std::int32_t>(nodes_.size());
        nodes_.push_back(node);
        const std::int32_t left = build(lo, mid);
        const std::int32_t right = build(mid + 1, hi);
        nodes_[static_cast<std::size_t>(slot)].left = left;
        nodes_[static_cast<std::size_t>(slot)].right = right;
        return slot;
    }

    void search(std::int32_t slot, const Eigen::Vector3d& query, Hit& best) const {
        if (slot < 0) return;
        const Node& node = nodes_[static_cast<std::size_t>(slot)];
        const double d2 = (pts_.col(node.point) - query).squaredNorm();
        if (d2 < best.squared_distance ||
            (d2 == best.squared_distance && node.point < best.index)) {
            best.index = node.point;
            best.squared_distance = d2;
        }
        const double diff = query[node.axis] - pts_(node.axis, node.point);
        const std::int32_t near = diff < 0 ? node.left : node.right;
        const std::int32_t far = diff < 0 ? node.right : node.left;
        search(near, query, best);
        // Visit the far side on exact ties as well, so an equally distant
        // lower-index point is never missed.
        if (diff * diff <= best.squared_distance) {
            search(far, query, best);
        }
    }

    Eigen::Matrix3Xd pts_;
    std::vector<Eigen::Index> index_;
    std::vector<Node> nodes_;
    std::int32_t root_ = -1;
};

} // namespace nf3d
