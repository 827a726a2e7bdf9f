#include "ssair/tensor.hpp"

#include <sstream>

namespace ssair {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ')';
  return os.str();
}

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

DenseTensor::DenseTensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty()) throw ShapeError("tensor rank must be >= 1");
  for (auto d : shape_)
    if (d < 1) throw ShapeError("tensor extents must be >= 1, got " + shape_str(shape_));
  if (shape_numel(shape_) != static_cast<int64_t>(data_.size()))
    throw ShapeError("tensor of shape " + shape_str(shape_) + " needs " +
                     std::to_string(shape_numel(shape_)) + " elements, got " +
                     std::to_string(data_.size()));
}

DenseTensor DenseTensor::filled(Shape shape, double value) {
  auto n = shape_numel(shape);
  return DenseTensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), value));
}

DenseTensor DenseTensor::reshape(Shape new_shape) const {
  if (shape_numel(new_shape) != numel())
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(new_shape));
  return DenseTensor(std::move(new_shape), data_);
}

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (size_t i = 0; i < rank; ++i) {
    // i counts from the trailing axis
    int64_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
    int64_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1)
      throw ShapeError("shapes " + shape_str(a) + " and " + shape_str(b) +
                       " are not broadcast-compatible at axis " + std::to_string(rank - 1 - i));
    out[rank - 1 - i] = std::max(da, db);
  }
  return out;
}

BroadcastIndexer::BroadcastIndexer(const Shape& out_shape, const Shape& arg_shape) {
  const size_t rank = out_shape.size();
  if (arg_shape.size() > rank) throw ShapeError("argument rank exceeds broadcast rank");
  // stride of each output axis inside the argument (0 where broadcast)
  std::vector<int64_t> stride(rank, 0);
  int64_t s = 1;
  for (size_t i = 0; i < arg_shape.size(); ++i) {
    size_t ax_arg = arg_shape.size() - 1 - i;
    size_t ax_out = rank - 1 - i;
    if (arg_shape[ax_arg] != 1) {
      if (arg_shape[ax_arg] != out_shape[ax_out])
        throw ShapeError("argument " + shape_str(arg_shape) + " does not broadcast to " +
                         shape_str(out_shape));
      stride[ax_out] = s;
    }
    s *= arg_shape[ax_arg];
  }
  const int64_t n = shape_numel(out_shape);
  offsets_.resize(static_cast<size_t>(n));
  std::vector<int64_t> idx(rank, 0);
  int64_t off = 0;
  for (int64_t flat = 0; flat < n; ++flat) {
    offsets_[static_cast<size_t>(flat)] = off;
    for (size_t ax = rank; ax-- > 0;) {
      ++idx[ax];
      off += stride[ax];
      if (idx[ax] < out_shape[ax]) break;
      off -= stride[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
}

DenseTensor elementwise_zip(const ScalarFn& f, std::span<const DenseTensor* const> args) {
  if (args.empty()) throw ShapeError("elementwise_zip needs at least one argument");
  Shape out = args[0]->shape();
  for (size_t i = 1; i < args.size(); ++i) out = broadcast_shapes(out, args[i]->shape());
  std::vector<BroadcastIndexer> idx;
  idx.reserve(args.size());
  for (auto* a : args) idx.emplace_back(out, a->shape());
  const int64_t n = shape_numel(out);
  std::vector<double> data(static_cast<size_t>(n));
  std::vector<double> scratch(args.size());
  for (int64_t e = 0; e < n; ++e) {
    for (size_t i = 0; i < args.size(); ++i)
      scratch[i] = (*args[i])[idx[i].offsets()[static_cast<size_t>(e)]];
    data[static_cast<size_t>(e)] = f(scratch);
  }
  return DenseTensor(std::move(out), std::move(data));
}

DenseTensor elementwise_zip(const ScalarFn& f, std::initializer_list<const DenseTensor*> args) {
  return elementwise_zip(f, std::span<const DenseTensor* const>(args.begin(), args.size()));
}

DenseTensor matmul(const DenseTensor& a, const DenseTensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul needs rank-2 operands");
  const int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k)
    throw ShapeError("matmul inner dimension mismatch: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  std::vector<double> out(static_cast<size_t>(m * n));
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      out[static_cast<size_t>(i * n + j)] = acc;
    }
  return DenseTensor({m, n}, std::move(out));
}

DenseTensor transpose(const DenseTensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose needs a rank-2 operand");
  const int64_t m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(static_cast<size_t>(m * n));
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out[static_cast<size_t>(j * m + i)] = a[i * n + j];
  return DenseTensor({n, m}, std::move(out));
}

DenseTensor reduce_sum_axis(const DenseTensor& a, int64_t axis) {
  if (axis < 0 || axis >= a.rank())
    throw ShapeError("reduce_sum axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(a.rank()));
  if (a.rank() == 1) return DenseTensor({1}, {reduce_sum_all(a)});
  const auto& s = a.shape();
  int64_t outer = 1, inner = 1;
  for (int64_t i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];
  for (int64_t i = axis + 1; i < a.rank(); ++i) inner *= s[static_cast<size_t>(i)];
  const int64_t ext = s[static_cast<size_t>(axis)];
  std::vector<double> out(static_cast<size_t>(outer * inner), 0.0);
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t k = 0; k < ext; ++k)
      for (int64_t i = 0; i < inner; ++i)
        out[static_cast<size_t>(o * inner + i)] += a[(o * ext + k) * inner + i];
  Shape os;
  for (int64_t i = 0; i < a.rank(); ++i)
    if (i != axis) os.push_back(s[static_cast<size_t>(i)]);
  return DenseTensor(std::move(os), std::move(out));
}

double reduce_sum_all(const DenseTensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return acc;
}

DenseTensor sum_to_shape(const DenseTensor& t, const Shape& target) {
  if (t.shape() == target) return t;
  if (broadcast_shapes(t.shape(), target) != t.shape())
    throw ShapeError("cannot sum " + shape_str(t.shape()) + " down to " + shape_str(target));
  DenseTensor cur = t;
  // drop extra leading axes
  while (cur.rank() > static_cast<int64_t>(target.size())) cur = reduce_sum_axis(cur, 0);
  for (size_t ax = 0; ax < target.size(); ++ax) {
    if (target[ax] == 1 && cur.shape()[ax] != 1) {
      Shape s = cur.shape();
      s[ax] = 1;
      cur = reduce_sum_axis(cur, static_cast<int64_t>(ax)).reshape(s);
    }
  }
  return cur.reshape(target);
}

DenseTensor stack(std::span<const DenseTensor> parts) {
  if (parts.empty()) throw ShapeError("stack needs at least one tensor");
  const Shape& s = parts[0].shape();
  std::vector<double> data;
  data.reserve(parts.size() * static_cast<size_t>(parts[0].numel()));
  for (const auto& p : parts) {
    if (p.shape() != s)
      throw ShapeError("stack shape mismatch: " + shape_str(s) + " vs " + shape_str(p.shape()));
    data.insert(data.end(), p.data().begin(), p.data().end());
  }
  Shape out{static_cast<int64_t>(parts.size())};
  out.insert(out.end(), s.begin(), s.end());
  return DenseTensor(std::move(out), std::move(data));
}

DenseTensor unstack_at(const DenseTensor& t, int64_t index) {
  if (index < 0 || index >= t.shape()[0])
    throw ShapeError("unstack index " + std::to_string(index) + " out of range for " +
                     shape_str(t.shape()));
  Shape s(t.shape().begin() + 1, t.shape().end());
  if (s.empty()) s = {1};
  const int64_t n = shape_numel(s);
  auto first = t.data().begin() + index * n;
  return DenseTensor(std::move(s), std::vector<double>(first, first + n));
}

std::vector<DenseTensor> unstack(const DenseTensor& t) {
  std::vector<DenseTensor> out;
  for (int64_t i = 0; i < t.shape()[0]; ++i) out.push_back(unstack_at(t, i));
  return out;
}

}  // namespace ssair
