#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace aroma {

// Sorted set of label indices. The value type for multi-hot labels.
class LabelSet {
 public:
  LabelSet() = default;
  explicit LabelSet(std::vector<uint32_t> ids) : ids_(std::move(ids)) {
    std::sort(ids_.begin(), ids_.end());
    ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
  }

  void add(uint32_t id) {
    auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
    if (it == ids_.end() || *it != id) ids_.insert(it, id);
  }

  bool contains(uint32_t id) const {
    return std::binary_search(ids_.begin(), ids_.end(), id);
  }

  size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  const std::vector<uint32_t>& ids() const { return ids_; }

  auto begin() const { return ids_.begin(); }
  auto end() const { return ids_.end(); }

  friend LabelSet set_union(const LabelSet& a, const LabelSet& b) {
    LabelSet r;
    std::set_union(a.ids_.begin(), a.ids_.end(), b.ids_.begin(), b.ids_.end(),
                   std::back_inserter(r.ids_));
    return r;
  }

  friend LabelSet set_intersection(const LabelSet& a, const LabelSet& b) {
    LabelSet r;
    std::set_intersection(a.ids_.begin(), a.ids_.end(), b.ids_.begin(),
                          b.ids_.end(), std::back_inserter(r.ids_));
    return r;
  }

  bool operator==(const LabelSet& o) const { return ids_ == o.ids_; }

 private:
  std::vector<uint32_t> ids_;
};

// J(A,B) = |A∩B| / |A∪B|, with J(∅,∅) = 1.
inline double jaccard(const LabelSet& a, const LabelSet& b) {
  if (a.empty() && b.empty()) return 1.0;
  const double inter = static_cast<double>(set_intersection(a, b).size());
  const double uni = static_cast<double>(set_union(a, b).size());
  return inter / uni;
}

// Canonical note vocabulary. Indices are assigned by first appearance and
// are stable once persisted.
class LabelVocab {
 public:
  uint32_t add(const std::string& note) {
    auto it = index_.find(note);
    if (it != index_.end()) return it->second;
    uint32_t id = static_cast<uint32_t>(notes_.size());
    notes_.push_back(note);
    index_.emplace(note, id);
    return id;
  }

  std::optional<uint32_t> find(const std::string& note) const {
    auto it = index_.find(note);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  size_t size() const { return notes_.size(); }
  const std::string& name(uint32_t id) const { return notes_.at(id); }
  const std::vector<std::string>& notes() const { return notes_; }

  bool operator==(const LabelVocab& o) const { return notes_ == o.notes_; }

 private:
  std::vector<std::string> notes_;
  std::unordered_map<std::string, uint32_t> index_;
};

}  // namespace aroma
