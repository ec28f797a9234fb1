#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <utility>
#include <vector>

#include "pocketgs/core/geometry.hpp"

namespace pocketgs {

/// Static 3-d tree over a point set. Queries are exact: results are ordered
/// by (squared distance, index), so ties go to the smaller index.
class KdTree {
 public:
  explicit KdTree(const std::vector<Vec3>& pts) : pts_(pts) {
    order_.resize(pts.size());
    std::iota(order_.begin(), order_.end(), 0);
    nodes_.reserve(pts.size());
    if (!pts.empty()) build(0, pts.size(), 0);
  }

  /// The k nearest points to point `i`, excluding `i` itself.
  std::vector<int> knn(int i, int k) const { return query(pts_[i], k, i); }

  /// The k nearest points to `q`; `skip` is excluded (-1: none).
  std::vector<int> query(const Vec3& q, int k, int skip = -1) const {
    std::vector<Entry> heap;
    if (k <= 0 || nodes_.empty()) return {};
    heap.reserve(static_cast<std::size_t>(k) + 1);
    search(0, q, k, skip, heap);
    std::sort_heap(heap.begin(), heap.end());
    std::vector<int> out;
    out.reserve(heap.size());
    for (const Entry& e : heap) out.push_back(e.second);
    return out;
  }

 private:
  using Entry = std::pair<double, int>;  // (squared distance, index)

  struct Node {
    int point = -1;
    int axis = 0;
    int left = -1;
    int right = -1;
  };

  int build(std::size_t lo, std::size_t hi, int depth) {
    if (lo >= hi) return -1;
    // Split on the axis of largest extent for balanced cells.
    Vec3 mn = pts_[order_[lo]], mx = mn;
    for (std::size_t j = lo; j < hi; ++j) {
      mn = mn.cwiseMin(pts_[order_[j]]);
      mx = mx.cwiseMax(pts_[order_[j]]);
    }
    int axis = 0;
    (mx - mn).maxCoeff(&axis);
    const std::size_t mid = (lo + hi) / 2;
    std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi, [&](int a, int b) {
      const double va = pts_[a][axis], vb = pts_[b][axis];
      return va < vb || (va == vb && a < b);
    });
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({order_[mid], axis, -1, -1});
    const int l = build(lo, mid, depth + 1);
    const int r = build(mid + 1, hi, depth + 1);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  void search(int n, const Vec3& q, int k, int skip, std::vector<Entry>& heap) const {
    if (n < 0) return;
    const Node& node = nodes_[n];
    if (node.point != skip) {
      const Entry e{(pts_[node.point] - q).squaredNorm(), node.point};
      if (static_cast<int>(heap.size()) < k) {
        heap.push_back(e);
        std::push_heap(heap.begin(), heap.end());
      } else if (e < heap.front()) {
        std::pop_heap(heap.begin(), heap.end());
        heap.back() = e;
        std::push_heap(heap.begin(), heap.end());
      }
    }
    const double diff = q[node.axis] - pts_[node.point][node.axis];
    const int near = diff < 0 ? node.left : node.right;
    const int far = diff < 0 ? node.right : node.left;
    search(near, q, k, skip, heap);
    // <= keeps equal-distance candidates with smaller indices reachable.
    if (static_cast<int>(heap.size()) < k || diff * diff <= heap.front().first) search(far, q, k, skip, heap);
  }

  const std::vector<Vec3>& pts_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

}  // namespace pocketgs
