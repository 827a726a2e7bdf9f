#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ssair {

using Shape = std::vector<int64_t>;

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

/// Dense row-major tensor of doubles. Immutable once built; every
/// operation returns a fresh value.
class DenseTensor {
 public:
  DenseTensor() = default;
  DenseTensor(Shape shape, std::vector<double> data);

  static DenseTensor filled(Shape shape, double value);
  static DenseTensor zeros(Shape shape) { return filled(std::move(shape), 0.0); }

  const Shape& shape() const { return shape_; }
  std::span<const double> data() const { return data_; }
  int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  DenseTensor reshape(Shape new_shape) const;

  friend bool operator==(const DenseTensor&, const DenseTensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Trailing-aligned broadcast; missing leading dims count as 1.
Shape broadcast_shapes(const Shape& a, const Shape& b);

/// Offset of `out_index` (a multi-index into `out_shape`) projected into an
/// argument of shape `arg_shape` under trailing-aligned broadcasting.
class BroadcastIndexer {
 public:
  BroadcastIndexer(const Shape& out_shape, const Shape& arg_shape);
  /// Flat argument offset for each flat output offset, in row-major order.
  const std::vector<int64_t>& offsets() const { return offsets_; }

 private:
  std::vector<int64_t> offsets_;
};

using ScalarFn = std::function<double(std::span<const double>)>;

/// Applies `f` to broadcast-indexed elements of `args`. k >= 1.
DenseTensor elementwise_zip(const ScalarFn& f, std::span<const DenseTensor* const> args);
DenseTensor elementwise_zip(const ScalarFn& f, std::initializer_list<const DenseTensor*> args);

DenseTensor matmul(const DenseTensor& a, const DenseTensor& b);
DenseTensor transpose(const DenseTensor& a);

/// Sum over one axis; the axis is dropped. Summation is in ascending
/// row-major order starting from 0.0.
DenseTensor reduce_sum_axis(const DenseTensor& a, int64_t axis);
double reduce_sum_all(const DenseTensor& a);

/// Reduces `t` (of a broadcast result shape) back to `target` by summing over
/// the axes that broadcasting expanded.
DenseTensor sum_to_shape(const DenseTensor& t, const Shape& target);

DenseTensor stack(std::span<const DenseTensor> parts);
std::vector<DenseTensor> unstack(const DenseTensor& t);
/// Slice `index` along the leading axis.
DenseTensor unstack_at(const DenseTensor& t, int64_t index);

}  // namespace ssair
