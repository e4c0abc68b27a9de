#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dsnet {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major float64 tensor with an optional gradient buffer.
///
/// A Tensor is a shared handle: copies alias the same storage. Rank 0 is a
/// scalar. Every dimension is positive.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Tensor is a shared handle, so constness is shallow.
  // Mutable access is for parameter updates and tensor construction inside
  // ops; values recorded in a live graph must not be modified.
  std::span<double> data_mut() const;
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag) const;

  bool has_grad() const;
  std::span<const double> grad() const;
  // Allocates a zero gradient on first use.
  std::span<double> grad_mut() const;
  void zero_grad() const;

  // Deep copy of the values only.
  Tensor clone() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;

  Impl& impl() const;
};

// Throws NumericError if any element is NaN or infinite.
void check_finite(const Tensor& t, const char* where);

}  // namespace dsnet
