#include "depthweave/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "depthweave/errors.hpp"

namespace depthweave {

namespace {
constexpr int kLeafSize = 8;

// Lexicographic (distance, index) ordering gives deterministic tie-breaking.
inline bool closer(double d2, int idx, double best_d2, int best) {
    return d2 < best_d2 || (d2 == best_d2 && idx < best);
}
}  // namespace

KdTree3::KdTree3(std::vector<Vec3> points) : points_(std::move(points)) {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0);
    if (!points_.empty()) {
        nodes_.reserve(2 * points_.size() / kLeafSize + 2);
        build(0, static_cast<int>(points_.size()));
    }
}

int KdTree3::build(int begin, int end) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({begin, end, -1, -1, -1, 0.0});
    if (end - begin <= kLeafSize) return id;

    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (int k = begin; k < end; ++k) {
        lo = lo.cwiseMin(points_[order_[k]]);
        hi = hi.cwiseMax(points_[order_[k]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (hi[axis] - lo[axis] <= 0.0) return id;  // all coincident: keep as a leaf

    const int mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) { return points_[a][axis] < points_[b][axis]; });
    const double split = points_[order_[mid]][axis];
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

std::pair<int, double> KdTree3::nearest(const Vec3& q) const {
    if (points_.empty()) throw InputError("kd-tree: nearest query on an empty tree");
    int best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    nearest_rec(0, q, best, best_d2);
    return {best, best_d2};
}

void KdTree3::nearest_rec(int id, const Vec3& q, int& best, double& best_d2) const {
    const Node& n = nodes_[id];
    if (n.axis < 0) {
        for (int k = n.begin; k < n.end; ++k) {
            const int idx = order_[k];
            const double d2 = (points_[idx] - q).squaredNorm();
            if (closer(d2, idx, best_d2, best)) {
                best = idx;
                best_d2 = d2;
            }
        }
        return;
    }
    const double diff = q[n.axis] - n.split;
    const int first = diff < 0.0 ? n.left : n.right;
    const int second = diff < 0.0 ? n.right : n.left;
    nearest_rec(first, q, best, best_d2);
    // <= keeps equidistant candidates with lower indices reachable
    if (diff * diff <= best_d2) nearest_rec(second, q, best, best_d2);
}

std::vector<std::pair<int, double>> KdTree3::knn(const Vec3& q, std::size_t k) const {
    std::vector<std::pair<double, int>> heap;
    if (k == 0 || points_.empty()) return {};
    heap.reserve(k + 1);
    knn_rec(0, q, k, heap);
    std::sort(heap.begin(), heap.end());
    std::vector<std::pair<int, double>> out;
    out.reserve(heap.size());
    for (const auto& [d2, idx] : heap) out.emplace_back(idx, d2);
    return out;
}

void KdTree3::knn_rec(int id, const Vec3& q, std::size_t k, std::vector<std::pair<double, int>>& heap) const {
    const Node& n = nodes_[id];
    if (n.axis < 0) {
        for (int m = n.begin; m < n.end; ++m) {
            const int idx = order_[m];
            const std::pair<double, int> cand{(points_[idx] - q).squaredNorm(), idx};
            if (heap.size() < k) {
                heap.push_back(cand);
                std::push_heap(heap.begin(), heap.end());
            } else if (cand < heap.front()) {
                std::pop_heap(heap.begin(), heap.end());
                heap.back() = cand;
                std::push_heap(heap.begin(), heap.end());
            }
        }
        return;
    }
    const double diff = q[n.axis] - n.split;
    const int first = diff < 0.0 ? n.left : n.right;
    const int second = diff < 0.0 ? n.right : n.left;
    knn_rec(first, q, k, heap);
    if (heap.size() < k || diff * diff <= heap.front().first) knn_rec(second, q, k, heap);
}

}  // namespace depthweave
