#ifndef UDASEG_CORE_TENSOR_HPP
#define UDASEG_CORE_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace udaseg {

/// Dense row-major tensor of doubles with dynamic rank.
/// Image batches are (batch, channel, height, width); single images are
/// (channel, height, width); latent codes and posterior parameters are
/// (batch, dim) or (dim).
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int64_t> shape)
        : shape_(std::move(shape)), data_(checked_numel(shape_), 0.0) {}

    Tensor(std::vector<int64_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (static_cast<int64_t>(data_.size()) != checked_numel(shape_)) {
            throw std::invalid_argument("Tensor: data size does not match shape");
        }
    }

    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int64_t> shape, double value) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    const std::vector<int64_t>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }

    int64_t dim(int i) const {
        if (i < 0 || i >= rank()) throw std::out_of_range("Tensor::dim: axis out of range");
        return shape_[static_cast<size_t>(i)];
    }

    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    double& operator()(int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator()(int64_t i) const { return data_[static_cast<size_t>(i)]; }

    double& operator()(int64_t i, int64_t j) { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
    double operator()(int64_t i, int64_t j) const { return data_[static_cast<size_t>(i * shape_[1] + j)]; }

    double& operator()(int64_t c, int64_t y, int64_t x) {
        return data_[static_cast<size_t>((c * shape_[1] + y) * shape_[2] + x)];
    }
    double operator()(int64_t c, int64_t y, int64_t x) const {
        return data_[static_cast<size_t>((c * shape_[1] + y) * shape_[2] + x)];
    }

    double& operator()(int64_t b, int64_t c, int64_t y, int64_t x) {
        return data_[static_cast<size_t>(((b * shape_[1] + c) * shape_[2] + y) * shape_[3] + x)];
    }
    double operator()(int64_t b, int64_t c, int64_t y, int64_t x) const {
        return data_[static_cast<size_t>(((b * shape_[1] + c) * shape_[2] + y) * shape_[3] + x)];
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    Tensor reshaped(std::vector<int64_t> new_shape) const {
        if (checked_numel(new_shape) != numel()) {
            throw std::invalid_argument("Tensor::reshaped: element count mismatch");
        }
        return Tensor(std::move(new_shape), data_);
    }

    /// Copy of item `b` of a rank-4 tensor as a rank-3 tensor.
    Tensor item(int64_t b) const {
        if (rank() != 4) throw std::invalid_argument("Tensor::item: rank-4 tensor required");
        if (b < 0 || b >= shape_[0]) throw std::out_of_range("Tensor::item: batch index out of range");
        const int64_t n = shape_[1] * shape_[2] * shape_[3];
        std::vector<double> out(data_.begin() + b * n, data_.begin() + (b + 1) * n);
        return Tensor({shape_[1], shape_[2], shape_[3]}, std::move(out));
    }

    /// Write a rank-3 tensor into slot `b` of this rank-4 tensor.
    void set_item(int64_t b, const Tensor& t) {
        if (rank() != 4 || t.rank() != 3) throw std::invalid_argument("Tensor::set_item: rank mismatch");
        const int64_t n = shape_[1] * shape_[2] * shape_[3];
        if (t.numel() != n) throw std::invalid_argument("Tensor::set_item: element count mismatch");
        std::copy(t.data_.begin(), t.data_.end(), data_.begin() + b * n);
    }

    /// Copy of row `b` of a rank-2 tensor as a rank-1 tensor.
    Tensor row(int64_t b) const {
        if (rank() != 2) throw std::invalid_argument("Tensor::row: rank-2 tensor required");
        std::vector<double> out(data_.begin() + b * shape_[1], data_.begin() + (b + 1) * shape_[1]);
        return Tensor({shape_[1]}, std::move(out));
    }

    void set_row(int64_t b, const Tensor& t) {
        if (rank() != 2 || t.numel() != shape_[1]) throw std::invalid_argument("Tensor::set_row: shape mismatch");
        std::copy(t.data_.begin(), t.data_.end(), data_.begin() + b * shape_[1]);
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << "(";
        for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
        os << ")";
        return os.str();
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
    static int64_t checked_numel(const std::vector<int64_t>& shape) {
        int64_t n = 1;
        for (int64_t d : shape) {
            if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    std::vector<int64_t> shape_;
    std::vector<double> data_;
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
}

inline double sum(const Tensor& t) {
    double s = 0.0;
    for (int64_t i = 0; i < t.numel(); ++i) s += t[i];
    return s;
}

inline double mean(const Tensor& t) {
    if (t.numel() == 0) throw std::invalid_argument("mean: empty tensor");
    return sum(t) / static_cast<double>(t.numel());
}

inline double max_abs(const Tensor& t) {
    double m = 0.0;
    for (int64_t i = 0; i < t.numel(); ++i) m = std::max(m, std::abs(t[i]));
    return m;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline bool all_finite(const Tensor& t) {
    for (int64_t i = 0; i < t.numel(); ++i) {
        if (!std::isfinite(t[i])) return false;
    }
    return true;
}

/// y += alpha * x
inline void axpy(double alpha, const Tensor& x, Tensor& y) {
    check_same_shape(x, y, "axpy");
    for (int64_t i = 0; i < x.numel(); ++i) y[i] += alpha * x[i];
}

inline void clamp01_(Tensor& t) {
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = std::min(1.0, std::max(0.0, t[i]));
}

} // namespace udaseg

#endif // UDASEG_CORE_TENSOR_HPP
