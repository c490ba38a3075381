#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace robustq {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

// Dense row-major array of doubles. product(shape) == data.size() always holds
// for tensors built through the constructors below.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
    static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }
    static Tensor vector(std::initializer_list<double> values);
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t numel() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::vector<double>& storage() noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double item() const;
    void fill(double v);
    Tensor reshaped(Shape shape) const;
    bool all_finite() const noexcept;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

// Slicing a tensor along one axis: the flat indices of every element whose
// coordinate on `axis` equals `slice`, in row-major order.
std::vector<std::size_t> slice_indices(const Shape& shape, std::size_t axis, std::size_t slice);

// Flat element groups, one per slice along axis.
std::vector<std::vector<std::size_t>> slice_groups(const Shape& shape, std::size_t axis);

namespace kernels {

// a[m,k] x b[k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
// grad wrt a: g[m,n] x b^T ; grad wrt b: a^T x g
Tensor matmul_grad_lhs(const Tensor& grad, const Tensor& b);
Tensor matmul_grad_rhs(const Tensor& a, const Tensor& grad);

struct Conv2dGeometry {
    std::size_t stride = 1;
    std::size_t pad = 0;
};

// x[n,c,h,w] * w[o,c,kh,kw] -> [n,o,oh,ow]
Tensor conv2d(const Tensor& x, const Tensor& w, Conv2dGeometry geo);
Tensor conv2d_grad_input(const Tensor& grad, const Tensor& w, const Shape& x_shape, Conv2dGeometry geo);
Tensor conv2d_grad_weight(const Tensor& grad, const Tensor& x, const Shape& w_shape, Conv2dGeometry geo);

// x[n,c,h,w] -> [n,c,h/k,w/k], non-overlapping windows
Tensor avgpool2d(const Tensor& x, std::size_t kernel);
Tensor avgpool2d_grad(const Tensor& grad, const Shape& x_shape, std::size_t kernel);

}  // namespace kernels

}  // namespace robustq
