#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace stegnet {

// Shape of a rank-4 tensor in NCHW layout: batch, channels, height, width.
struct Shape {
    int n = 0, c = 0, h = 0, w = 0;

    std::size_t count() const {
        return static_cast<std::size_t>(n) * c * h * w;
    }
    bool operator==(const Shape& o) const = default;

    std::string str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + ")";
    }
};

// Output extent of a strided window sliding over a padded extent.
inline int conv_out_extent(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// Dense rank-4 array. Scalar is float for training, double for gradient
// checking. Data is contiguous row-major over (n,c,h,w).
template <typename Scalar>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape s) : shape_(s), data_(checked_count(s), Scalar(0)) {}

    Tensor(int n, int c, int h, int w) : Tensor(Shape{n, c, h, w}) {}

    static Tensor full(Shape s, Scalar v) {
        Tensor t(s);
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    Scalar* data() { return data_.data(); }
    const Scalar* data() const { return data_.data(); }

    Scalar& operator[](std::size_t i) { return data_[i]; }
    Scalar operator[](std::size_t i) const { return data_[i]; }

    Scalar& at(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }
    Scalar at(int n, int c, int h, int w) const { return data_[index(n, c, h, w)]; }

    std::size_t index(int n, int c, int h, int w) const {
        return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
    }

    // Pointer to the (n,c) plane, h*w contiguous elements.
    Scalar* plane(int n, int c) { return data_.data() + index(n, c, 0, 0); }
    const Scalar* plane(int n, int c) const { return data_.data() + index(n, c, 0, 0); }

    void fill(Scalar v) { std::fill(data_.begin(), data_.end(), v); }
    void zero() { fill(Scalar(0)); }

    bool all_finite() const {
        for (Scalar v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    template <typename Other>
    Tensor<Other> cast() const {
        Tensor<Other> out(shape_);
        for (std::size_t i = 0; i < data_.size(); ++i)
            out[i] = static_cast<Other>(data_[i]);
        return out;
    }

private:
    static std::size_t checked_count(Shape s) {
        if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1)
            throw std::invalid_argument("tensor shape entries must be >= 1, got " + s.str());
        return s.count();
    }

    Shape shape_{};
    std::vector<Scalar> data_;
};

// Learnable tensor with its gradient and momentum buffers. Weight decay is
// applied only where the flag is set (the final fully-connected layer).
template <typename Scalar>
struct Parameter {
    Parameter() = default;
    explicit Parameter(Shape s, std::string name_ = {})
        : value(s), grad(s), momentum(s), name(std::move(name_)) {}

    Tensor<Scalar> value;
    Tensor<Scalar> grad;
    Tensor<Scalar> momentum;
    bool weight_decay_enabled = false;
    std::string name;

    void zero_grad() { grad.zero(); }
};

template <typename Scalar>
void fill_normal(Tensor<Scalar>& t, std::mt19937_64& rng, double mean, double stddev) {
    std::normal_distribution<double> dist(mean, stddev);
    for (std::size_t i = 0; i < t.size(); ++i)
        t[i] = static_cast<Scalar>(dist(rng));
}

template <typename Scalar>
void fill_uniform(Tensor<Scalar>& t, std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    for (std::size_t i = 0; i < t.size(); ++i)
        t[i] = static_cast<Scalar>(dist(rng));
}

}  // namespace stegnet
