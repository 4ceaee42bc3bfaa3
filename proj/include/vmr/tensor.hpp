#pragma once

#include <cmath>
#include <memory>
#include <utility>
#include <vector>

#include "vmr/common.hpp"

namespace vmr {

struct TensorImpl {
    Shape shape;
    std::vector<real> values;
    bool requires_grad = false;
};

// Dense tensor handle with value semantics over shared storage. Copies alias;
// use clone() for an independent buffer.
class Tensor {
public:
    Tensor() = default;

    Tensor(Shape shape, std::vector<real> values, bool requires_grad = false) {
        for (std::size_t d : shape) {
            if (d == 0) throw ShapeError(msg("tensor extents must be positive, got ", shape_str(shape)));
        }
        if (shape_numel(shape) != values.size()) {
            throw ShapeError(msg("tensor shape ", shape_str(shape), " expects ", shape_numel(shape),
                                 " values, got ", values.size()));
        }
        impl_ = std::make_shared<TensorImpl>();
        impl_->shape = std::move(shape);
        impl_->values = std::move(values);
        impl_->requires_grad = requires_grad;
    }

    static Tensor zeros(Shape shape) {
        std::size_t n = shape_numel(shape);
        return Tensor(std::move(shape), std::vector<real>(n, 0.0));
    }

    static Tensor full(Shape shape, real v) {
        std::size_t n = shape_numel(shape);
        return Tensor(std::move(shape), std::vector<real>(n, v));
    }

    static Tensor scalar(real v) { return Tensor({1}, {v}); }

    static Tensor matrix(std::size_t r, std::size_t c, std::vector<real> values) {
        return Tensor({r, c}, std::move(values));
    }

    static Tensor row(std::vector<real> values) {
        std::size_t c = values.size();
        return Tensor({1, c}, std::move(values));
    }

    static Tensor vec(std::vector<real> values) {
        std::size_t c = values.size();
        return Tensor({c}, std::move(values));
    }

    bool defined() const { return impl_ != nullptr; }

    const Shape& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t numel() const { return impl_->values.size(); }

    std::size_t rows() const {
        check_rank2("rows()");
        return impl_->shape[0];
    }
    std::size_t cols() const {
        check_rank2("cols()");
        return impl_->shape[1];
    }

    real& operator()(std::size_t r, std::size_t c) { return impl_->values[r * cols() + c]; }
    real operator()(std::size_t r, std::size_t c) const { return impl_->values[r * cols() + c]; }
    real& operator[](std::size_t i) { return impl_->values[i]; }
    real operator[](std::size_t i) const { return impl_->values[i]; }

    real item() const {
        if (numel() != 1) throw ShapeError(msg("item() on non-scalar tensor ", shape_str(shape())));
        return impl_->values[0];
    }

    std::vector<real>& values() { return impl_->values; }
    const std::vector<real>& values() const { return impl_->values; }
    real* data() { return impl_->values.data(); }
    const real* data() const { return impl_->values.data(); }

    bool requires_grad() const { return impl_ && impl_->requires_grad; }
    Tensor& set_requires_grad(bool b) {
        impl_->requires_grad = b;
        return *this;
    }

    TensorImpl* impl() const { return impl_.get(); }
    std::shared_ptr<TensorImpl> impl_ptr() const { return impl_; }

    Tensor clone() const {
        return Tensor(impl_->shape, impl_->values, impl_->requires_grad);
    }

    bool all_finite() const {
        for (real v : impl_->values) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

private:
    void check_rank2(const char* what) const {
        if (impl_->shape.size() != 2) {
            throw ShapeError(msg(what, " requires a rank-2 tensor, got ", shape_str(impl_->shape)));
        }
    }

    std::shared_ptr<TensorImpl> impl_;
};

}  // namespace vmr
