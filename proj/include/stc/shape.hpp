#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <string>

#include "stc/common.hpp"

namespace stc {

// Dense row-major extents, rank 0..5 (rank 0 only as the default-constructed
// empty value). All extents are >= 1.
class Shape {
 public:
  static constexpr int kMaxRank = 5;

  Shape() = default;

  Shape(std::initializer_list<int64_t> dims) {
    if (static_cast<int>(dims.size()) > kMaxRank)
      throw ValidationError(strfmt("Shape: rank %zu exceeds max %d", dims.size(), kMaxRank));
    for (int64_t d : dims) {
      if (d < 1) throw ValidationError(strfmt("Shape: extent %lld must be >= 1", (long long)d));
      dims_[rank_++] = d;
    }
  }

  int rank() const { return rank_; }

  int64_t operator[](int i) const { return dims_[i]; }

  int64_t numel() const {
    int64_t n = 1;
    for (int i = 0; i < rank_; ++i) n *= dims_[i];
    return n;
  }

  bool operator==(const Shape& o) const {
    if (rank_ != o.rank_) return false;
    for (int i = 0; i < rank_; ++i)
      if (dims_[i] != o.dims_[i]) return false;
    return true;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    std::string s = "[";
    for (int i = 0; i < rank_; ++i) {
      if (i) s += ",";
      s += std::to_string(dims_[i]);
    }
    return s + "]";
  }

 private:
  std::array<int64_t, kMaxRank> dims_{};
  int rank_ = 0;
};

}  // namespace stc
