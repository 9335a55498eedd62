#ifndef TNESI_TOPK_HPP
#define TNESI_TOPK_HPP

#include <algorithm>
#include <cassert>
#include <vector>

#include <Eigen/Core>

namespace tnesi {

/// Keeps the k best (value, index) pairs seen so far in a bounded min-heap.
/// "Better" means a larger value, or an equal value with a smaller index, so
/// the selection is a total order and never depends on visiting order.
///
/// One pass over n candidates costs O(n + k log n) in the typical case where
/// few candidates displace the current worst.
template <typename Scalar>
class TopKSelector {
 public:
  struct Entry {
    Scalar value;
    Eigen::Index index;
  };

  explicit TopKSelector(Eigen::Index k) : k_(static_cast<std::size_t>(k)) {
    assert(k > 0);
    heap_.reserve(k_);
  }

  static bool better(const Entry& a, const Entry& b) {
    return a.value > b.value || (a.value == b.value && a.index < b.index);
  }

  void push(Scalar value, Eigen::Index index) {
    const Entry e{value, index};
    if (heap_.size() < k_) {
      heap_.push_back(e);
      std::push_heap(heap_.begin(), heap_.end(), better);
    } else if (better(e, heap_.front())) {
      std::pop_heap(heap_.begin(), heap_.end(), better);
      heap_.back() = e;
      std::push_heap(heap_.begin(), heap_.end(), better);
    }
  }

  // Worst of the currently kept entries; only meaningful once full.
  const Entry& threshold() const { return heap_.front(); }
  std::size_t size() const { return heap_.size(); }

  // Kept indices, best first. Leaves the selector empty.
  std::vector<Eigen::Index> take_sorted() {
    std::sort_heap(heap_.begin(), heap_.end(), better);
    std::vector<Eigen::Index> out;
    out.reserve(heap_.size());
    for (const auto& e : heap_) out.push_back(e.index);
    heap_.clear();
    return out;
  }

 private:
  std::size_t k_;
  std::vector<Entry> heap_;
};

}  // namespace tnesi

#endif  // TNESI_TOPK_HPP
