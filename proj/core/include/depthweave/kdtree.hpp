#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "depthweave/types.hpp"

namespace depthweave {

/// Static 3-d tree over a point array. Queries are exact; among equidistant
/// points the lowest index wins. Read-only after construction, so one tree can
/// be queried from many threads.
class KdTree3 {
public:
    KdTree3() = default;
    explicit KdTree3(std::vector<Vec3> points);

    std::size_t size() const { return points_.size(); }
    bool empty() const { return points_.empty(); }
    const std::vector<Vec3>& points() const { return points_; }

    /// Index and squared distance of the nearest point. Tree must be non-empty.
    std::pair<int, double> nearest(const Vec3& q) const;

    /// The k nearest points, closest first (ties by index).
    std::vector<std::pair<int, double>> knn(const Vec3& q, std::size_t k) const;

private:
    struct Node {
        int begin = 0;
        int end = 0;
        int left = -1;
        int right = -1;
        int axis = -1;  // -1 for leaves
        double split = 0.0;
    };

    int build(int begin, int end);
    void nearest_rec(int node, const Vec3& q, int& best, double& best_d2) const;
    void knn_rec(int node, const Vec3& q, std::size_t k, std::vector<std::pair<double, int>>& heap) const;

    std::vector<Vec3> points_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
};

}  // namespace depthweave
