#include "robustq/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace robustq {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    for (auto d : shape_) {
        if (d == 0) throw std::invalid_argument("Tensor: zero-sized dimension in " + shape_to_string(shape_));
    }
    data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    for (auto d : shape_) {
        if (d == 0) throw std::invalid_argument("Tensor: zero-sized dimension in " + shape_to_string(shape_));
    }
    if (shape_numel(shape_) != data_.size()) {
        throw std::invalid_argument("Tensor: shape " + shape_to_string(shape_) + " does not match " +
                                    std::to_string(data_.size()) + " values");
    }
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor(Shape{values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw std::invalid_argument("Tensor::matrix: ragged rows");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor(Shape{r, c}, std::move(data));
}

double Tensor::item() const {
    if (data_.size() != 1) throw std::logic_error("Tensor::item: tensor of shape " + shape_to_string(shape_) + " is not a scalar");
    return data_[0];
}

void Tensor::fill(double v) {
    for (auto& x : data_) x = v;
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size()) {
        throw std::invalid_argument("reshape: cannot view " + shape_to_string(shape_) + " as " + shape_to_string(shape));
    }
    return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const noexcept {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::vector<std::size_t> slice_indices(const Shape& shape, std::size_t axis, std::size_t slice) {
    if (axis >= shape.size()) throw std::out_of_range("slice_indices: axis out of range for " + shape_to_string(shape));
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
    std::size_t outer = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
    const std::size_t extent = shape[axis];
    std::vector<std::size_t> out;
    out.reserve(outer * inner);
    for (std::size_t o = 0; o < outer; ++o) {
        const std::size_t base = (o * extent + slice) * inner;
        for (std::size_t i = 0; i < inner; ++i) out.push_back(base + i);
    }
    return out;
}

std::vector<std::vector<std::size_t>> slice_groups(const Shape& shape, std::size_t axis) {
    if (axis >= shape.size()) throw std::out_of_range("slice_groups: axis out of range for " + shape_to_string(shape));
    std::vector<std::vector<std::size_t>> groups;
    groups.reserve(shape[axis]);
    for (std::size_t s = 0; s < shape[axis]; ++s) groups.push_back(slice_indices(shape, axis, s));
    return groups;
}

namespace kernels {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
    if (t.rank() != rank) {
        throw std::invalid_argument(std::string(op) + ": " + what + " must be rank " + std::to_string(rank) +
                                    ", got " + shape_to_string(t.shape()));
    }
}

std::size_t conv_out(std::size_t in, std::size_t k, Conv2dGeometry geo) {
    return (in + 2 * geo.pad - k) / geo.stride + 1;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul", "lhs");
    require_rank(b, 2, "matmul", "rhs");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw std::invalid_argument("matmul: inner dimensions differ, lhs " + shape_to_string(a.shape()) + " vs rhs " +
                                    shape_to_string(b.shape()));
    }
    Tensor out({m, n});
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* po = out.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        double* row = po + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = pa[i * k + p];
            const double* brow = pb + p * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
        }
    }
    return out;
}

Tensor matmul_grad_lhs(const Tensor& grad, const Tensor& b) {
    const std::size_t m = grad.dim(0), n = grad.dim(1), k = b.dim(0);
    Tensor out({m, k});
    const double* pg = grad.data().data();
    const double* pb = b.data().data();
    double* po = out.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += pg[i * n + j] * pb[p * n + j];
            po[i * k + p] = acc;
        }
    }
    return out;
}

Tensor matmul_grad_rhs(const Tensor& a, const Tensor& grad) {
    const std::size_t m = a.dim(0), k = a.dim(1), n = grad.dim(1);
    Tensor out({k, n});
    const double* pa = a.data().data();
    const double* pg = grad.data().data();
    double* po = out.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = pa[i * k + p];
            double* orow = po + p * n;
            const double* grow = pg + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * grow[j];
        }
    }
    return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, Conv2dGeometry geo) {
    require_rank(x, 4, "conv2d", "input");
    require_rank(w, 4, "conv2d", "weight");
    if (geo.stride == 0) throw std::invalid_argument("conv2d: stride must be positive");
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::size_t o = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (w.dim(1) != c) {
        throw std::invalid_argument("conv2d: channel mismatch, input " + shape_to_string(x.shape()) + " vs weight " +
                                    shape_to_string(w.shape()));
    }
    if (h + 2 * geo.pad < kh || wd + 2 * geo.pad < kw) {
        throw std::invalid_argument("conv2d: kernel larger than padded input, input " + shape_to_string(x.shape()) +
                                    " vs weight " + shape_to_string(w.shape()));
    }
    const std::size_t oh = conv_out(h, kh, geo), ow = conv_out(wd, kw, geo);
    Tensor out({n, o, oh, ow});
    const double* px = x.data().data();
    const double* pw = w.data().data();
    double* po = out.data().data();
    const auto pad = static_cast<std::ptrdiff_t>(geo.pad);
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t oc = 0; oc < o; ++oc) {
            double* plane = po + ((b * o + oc) * oh) * ow;
            for (std::size_t ic = 0; ic < c; ++ic) {
                const double* xin = px + ((b * c + ic) * h) * wd;
                for (std::size_t i = 0; i < kh; ++i) {
                    for (std::size_t j = 0; j < kw; ++j) {
                        const double wv = pw[((oc * c + ic) * kh + i) * kw + j];
                        for (std::size_t y = 0; y < oh; ++y) {
                            const auto iy = static_cast<std::ptrdiff_t>(y * geo.stride + i) - pad;
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                            const double* xrow = xin + static_cast<std::size_t>(iy) * wd;
                            double* orow = plane + y * ow;
                            for (std::size_t xo = 0; xo < ow; ++xo) {
                                const auto ix = static_cast<std::ptrdiff_t>(xo * geo.stride + j) - pad;
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                                orow[xo] += wv * xrow[ix];
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

Tensor conv2d_grad_input(const Tensor& grad, const Tensor& w, const Shape& x_shape, Conv2dGeometry geo) {
    const std::size_t n = x_shape[0], c = x_shape[1], h = x_shape[2], wd = x_shape[3];
    const std::size_t o = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const std::size_t oh = grad.dim(2), ow = grad.dim(3);
    Tensor gx(x_shape);
    const double* pg = grad.data().data();
    const double* pw = w.data().data();
    double* px = gx.data().data();
    const auto pad = static_cast<std::ptrdiff_t>(geo.pad);
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t oc = 0; oc < o; ++oc) {
            const double* plane = pg + ((b * o + oc) * oh) * ow;
            for (std::size_t ic = 0; ic < c; ++ic) {
                double* xin = px + ((b * c + ic) * h) * wd;
                for (std::size_t i = 0; i < kh; ++i) {
                    for (std::size_t j = 0; j < kw; ++j) {
                        const double wv = pw[((oc * c + ic) * kh + i) * kw + j];
                        for (std::size_t y = 0; y < oh; ++y) {
                            const auto iy = static_cast<std::ptrdiff_t>(y * geo.stride + i) - pad;
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                            double* xrow = xin + static_cast<std::size_t>(iy) * wd;
                            const double* grow = plane + y * ow;
                            for (std::size_t xo = 0; xo < ow; ++xo) {
                                const auto ix = static_cast<std::ptrdiff_t>(xo * geo.stride + j) - pad;
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                                xrow[ix] += wv * grow[xo];
                            }
                        }
                    }
                }
            }
        }
    }
    return gx;
}

Tensor conv2d_grad_weight(const Tensor& grad, const Tensor& x, const Shape& w_shape, Conv2dGeometry geo) {
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::size_t o = w_shape[0], kh = w_shape[2], kw = w_shape[3];
    const std::size_t oh = grad.dim(2), ow = grad.dim(3);
    Tensor gw(w_shape);
    const double* pg = grad.data().data();
    const double* px = x.data().data();
    double* pw = gw.data().data();
    const auto pad = static_cast<std::ptrdiff_t>(geo.pad);
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t oc = 0; oc < o; ++oc) {
            const double* plane = pg + ((b * o + oc) * oh) * ow;
            for (std::size_t ic = 0; ic < c; ++ic) {
                const double* xin = px + ((b * c + ic) * h) * wd;
                for (std::size_t i = 0; i < kh; ++i) {
                    for (std::size_t j = 0; j < kw; ++j) {
                        double acc = 0.0;
                        for (std::size_t y = 0; y < oh; ++y) {
                            const auto iy = static_cast<std::ptrdiff_t>(y * geo.stride + i) - pad;
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                            const double* xrow = xin + static_cast<std::size_t>(iy) * wd;
                            const double* grow = plane + y * ow;
                            for (std::size_t xo = 0; xo < ow; ++xo) {
                                const auto ix = static_cast<std::ptrdiff_t>(xo * geo.stride + j) - pad;
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                                acc += grow[xo] * xrow[ix];
                            }
                        }
                        pw[((oc * c + ic) * kh + i) * kw + j] += acc;
                    }
                }
            }
        }
    }
    return gw;
}

Tensor avgpool2d(const Tensor& x, std::size_t kernel) {
    require_rank(x, 4, "avgpool2d", "input");
    if (kernel == 0 || x.dim(2) % kernel != 0 || x.dim(3) % kernel != 0) {
        throw std::invalid_argument("avgpool2d: kernel " + std::to_string(kernel) + " does not tile input " +
                                    shape_to_string(x.shape()));
    }
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t oh = h / kernel, ow = w / kernel;
    Tensor out({n, c, oh, ow});
    const double inv = 1.0 / static_cast<double>(kernel * kernel);
    for (std::size_t p = 0; p < n * c; ++p) {
        const double* in = x.data().data() + p * h * w;
        double* o = out.data().data() + p * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t xo = 0; xo < ow; ++xo) {
                double acc = 0.0;
                for (std::size_t i = 0; i < kernel; ++i) {
                    for (std::size_t j = 0; j < kernel; ++j) acc += in[(y * kernel + i) * w + xo * kernel + j];
                }
                o[y * ow + xo] = acc * inv;
            }
        }
    }
    return out;
}

Tensor avgpool2d_grad(const Tensor& grad, const Shape& x_shape, std::size_t kernel) {
    const std::size_t n = x_shape[0], c = x_shape[1], h = x_shape[2], w = x_shape[3];
    const std::size_t oh = h / kernel, ow = w / kernel;
    Tensor gx(x_shape);
    const double inv = 1.0 / static_cast<double>(kernel * kernel);
    for (std::size_t p = 0; p < n * c; ++p) {
        const double* g = grad.data().data() + p * oh * ow;
        double* o = gx.data().data() + p * h * w;
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t xo = 0; xo < ow; ++xo) {
                const double v = g[y * ow + xo] * inv;
                for (std::size_t i = 0; i < kernel; ++i) {
                    for (std::size_t j = 0; j < kernel; ++j) o[(y * kernel + i) * w + xo * kernel + j] = v;
                }
            }
        }
    }
    return gx;
}

}  // namespace kernels

}  // namespace robustq
