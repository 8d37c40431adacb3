#ifndef UDASEG_NN_LAYERS_HPP
#define UDASEG_NN_LAYERS_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "udaseg/core/rng.hpp"
#include "udaseg/core/tensor.hpp"

namespace udaseg::nn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

/// Learnable tensor. `index` is assigned when the owning model registers its
/// parameters and addresses the matching slot of a GradBuffer.
struct Param {
    std::string name;
    Tensor value;
    int index = -1;
};

class ParamRegistry {
public:
    void add(Param& p, std::string name) {
        p.name = std::move(name);
        p.index = static_cast<int>(params_.size());
        params_.push_back(&p);
    }
    const std::vector<Param*>& params() const { return params_; }

private:
    std::vector<Param*> params_;
};

/// Per-parameter gradient accumulator aligned with a ParamRegistry.
/// Training keeps one buffer per batch item and reduces them in item order,
/// so results do not depend on the worker count.
class GradBuffer {
public:
    GradBuffer() = default;

    explicit GradBuffer(const std::vector<Param*>& params) {
        grads_.reserve(params.size());
        for (const Param* p : params) grads_.emplace_back(Tensor::zeros(p->value.shape()));
    }

    Tensor& operator[](int index) { return grads_[static_cast<size_t>(index)]; }
    const Tensor& operator[](int index) const { return grads_[static_cast<size_t>(index)]; }
    size_t size() const { return grads_.size(); }

    void zero() {
        for (Tensor& g : grads_) g.fill(0.0);
    }

    void add(const GradBuffer& other) {
        if (other.grads_.size() != grads_.size()) throw std::invalid_argument("GradBuffer::add: size mismatch");
        for (size_t i = 0; i < grads_.size(); ++i) axpy(1.0, other.grads_[i], grads_[i]);
    }

    void scale(double s) {
        for (Tensor& g : grads_) {
            for (int64_t i = 0; i < g.numel(); ++i) g[i] *= s;
        }
    }

private:
    std::vector<Tensor> grads_;
};

/// Activation cache for one forward pass over one item. Backward consumes
/// entries in exact reverse order of the forward pushes.
class Ctx {
public:
    void push(Tensor t) { stack_.emplace_back(std::move(t)); }

    Tensor pop() {
        if (stack_.empty()) throw std::logic_error("Ctx::pop: empty activation stack");
        Tensor t = std::move(stack_.back());
        stack_.pop_back();
        return t;
    }

    void clear() { stack_.clear(); }
    bool empty() const { return stack_.empty(); }

private:
    std::vector<Tensor> stack_;
};

namespace detail {

inline int64_t conv_out_dim(int64_t in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

/// x: (C, H, W) -> col: (C*k*k, Ho*Wo), zero padding.
inline void im2col(const Tensor& x, int k, int stride, int pad, Tensor& col) {
    const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int64_t ho = conv_out_dim(h, k, stride, pad);
    const int64_t wo = conv_out_dim(w, k, stride, pad);
    const int64_t patches = ho * wo;
    double* out = col.data();
    for (int64_t ch = 0; ch < c; ++ch) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                double* dst = out + ((ch * k + ky) * k + kx) * patches;
                for (int64_t oy = 0; oy < ho; ++oy) {
                    const int64_t sy = oy * stride - pad + ky;
                    if (sy < 0 || sy >= h) {
                        for (int64_t ox = 0; ox < wo; ++ox) dst[oy * wo + ox] = 0.0;
                        continue;
                    }
                    const double* src_row = x.data() + (ch * h + sy) * w;
                    for (int64_t ox = 0; ox < wo; ++ox) {
                        const int64_t sx = ox * stride - pad + kx;
                        dst[oy * wo + ox] = (sx >= 0 && sx < w) ? src_row[sx] : 0.0;
                    }
                }
            }
        }
    }
}

/// Scatter-add transpose of im2col: col (C*k*k, Ho*Wo) -> x (C, H, W).
inline void col2im(const Tensor& col, int k, int stride, int pad, Tensor& x) {
    const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int64_t ho = conv_out_dim(h, k, stride, pad);
    const int64_t wo = conv_out_dim(w, k, stride, pad);
    const int64_t patches = ho * wo;
    x.fill(0.0);
    const double* in = col.data();
    for (int64_t ch = 0; ch < c; ++ch) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const double* src = in + ((ch * k + ky) * k + kx) * patches;
                for (int64_t oy = 0; oy < ho; ++oy) {
                    const int64_t sy = oy * stride - pad + ky;
                    if (sy < 0 || sy >= h) continue;
                    double* dst_row = x.data() + (ch * h + sy) * w;
                    for (int64_t ox = 0; ox < wo; ++ox) {
                        const int64_t sx = ox * stride - pad + kx;
                        if (sx >= 0 && sx < w) dst_row[sx] += src[oy * wo + ox];
                    }
                }
            }
        }
    }
}

} // namespace detail

/// 2D convolution over single items (C, H, W), same-style zero padding.
class Conv2d {
public:
    Conv2d() = default;

    Conv2d(int in_ch, int out_ch, int kernel = 3, int stride = 1)
        : in_ch_(in_ch), out_ch_(out_ch), k_(kernel), stride_(stride), pad_(kernel / 2) {
        weight_.value = Tensor::zeros({out_ch, static_cast<int64_t>(in_ch) * kernel * kernel});
        bias_.value = Tensor::zeros({out_ch});
    }

    void register_params(ParamRegistry& reg, const std::string& prefix) {
        reg.add(weight_, prefix + ".weight");
        reg.add(bias_, prefix + ".bias");
    }

    void init(Rng& rng) {
        const double stddev = std::sqrt(2.0 / static_cast<double>(in_ch_ * k_ * k_));
        rng.fill_normal(weight_.value, 0.0, stddev);
        bias_.value.fill(0.0);
    }

    Tensor forward(const Tensor& x, Ctx& ctx) const {
        if (x.rank() != 3 || x.dim(0) != in_ch_) {
            throw std::invalid_argument("Conv2d: expected (" + std::to_string(in_ch_) + ",H,W), got " + x.shape_str());
        }
        const int64_t ho = detail::conv_out_dim(x.dim(1), k_, stride_, pad_);
        const int64_t wo = detail::conv_out_dim(x.dim(2), k_, stride_, pad_);
        const int64_t ck = static_cast<int64_t>(in_ch_) * k_ * k_;
        Tensor col({ck, ho * wo});
        detail::im2col(x, k_, stride_, pad_, col);

        Tensor y({out_ch_, ho, wo});
        ConstMatMap w_map(weight_.value.data(), out_ch_, ck);
        ConstMatMap col_map(col.data(), ck, ho * wo);
        MatMap y_map(y.data(), out_ch_, ho * wo);
        y_map.noalias() = w_map * col_map;
        for (int64_t co = 0; co < out_ch_; ++co) {
            const double b = bias_.value[co];
            double* row = y.data() + co * ho * wo;
            for (int64_t p = 0; p < ho * wo; ++p) row[p] += b;
        }
        ctx.push(x);
        return y;
    }

    /// Returns dx; accumulates dW, db into `grads` when non-null.
    Tensor backward(const Tensor& dy, Ctx& ctx, GradBuffer* grads) const {
        const Tensor x = ctx.pop();
        const int64_t ho = dy.dim(1), wo = dy.dim(2);
        const int64_t ck = static_cast<int64_t>(in_ch_) * k_ * k_;
        Tensor col({ck, ho * wo});
        detail::im2col(x, k_, stride_, pad_, col);

        ConstMatMap dy_map(dy.data(), out_ch_, ho * wo);
        ConstMatMap col_map(col.data(), ck, ho * wo);
        if (grads) {
            MatMap dw_map((*grads)[weight_.index].data(), out_ch_, ck);
            dw_map.noalias() += dy_map * col_map.transpose();
            Tensor& db = (*grads)[bias_.index];
            for (int64_t co = 0; co < out_ch_; ++co) {
                const double* row = dy.data() + co * ho * wo;
                double s = 0.0;
                for (int64_t p = 0; p < ho * wo; ++p) s += row[p];
                db[co] += s;
            }
        }

        Tensor dcol({ck, ho * wo});
        ConstMatMap w_map(weight_.value.data(), out_ch_, ck);
        MatMap dcol_map(dcol.data(), ck, ho * wo);
        dcol_map.noalias() = w_map.transpose() * dy_map;
        Tensor dx({in_ch_, x.dim(1), x.dim(2)});
        detail::col2im(dcol, k_, stride_, pad_, dx);
        return dx;
    }

    int out_channels() const { return out_ch_; }
    int in_channels() const { return in_ch_; }

private:
    int in_ch_ = 0, out_ch_ = 0, k_ = 3, stride_ = 1, pad_ = 1;
    Param weight_;
    Param bias_;
};

/// Fully connected layer over rank-1 item vectors.
class Linear {
public:
    Linear() = default;

    Linear(int64_t in, int64_t out) : in_(in), out_(out) {
        weight_.value = Tensor::zeros({out, in});
        bias_.value = Tensor::zeros({out});
    }

    void register_params(ParamRegistry& reg, const std::string& prefix) {
        reg.add(weight_, prefix + ".weight");
        reg.add(bias_, prefix + ".bias");
    }

    void init(Rng& rng) {
        const double stddev = std::sqrt(2.0 / static_cast<double>(in_));
        rng.fill_normal(weight_.value, 0.0, stddev);
        bias_.value.fill(0.0);
    }

    Tensor forward(const Tensor& x, Ctx& ctx) const {
        if (x.numel() != in_) {
            throw std::invalid_argument("Linear: expected " + std::to_string(in_) + " inputs, got " + x.shape_str());
        }
        Tensor y({out_});
        ConstMatMap w_map(weight_.value.data(), out_, in_);
        ConstVecMap x_map(x.data(), in_);
        VecMap y_map(y.data(), out_);
        y_map.noalias() = w_map * x_map;
        ConstVecMap b_map(bias_.value.data(), out_);
        y_map += b_map;
        ctx.push(x);
        return y;
    }

    Tensor backward(const Tensor& dy, Ctx& ctx, GradBuffer* grads) const {
        const Tensor x = ctx.pop();
        ConstVecMap dy_map(dy.data(), out_);
        if (grads) {
            MatMap dw_map((*grads)[weight_.index].data(), out_, in_);
            ConstVecMap x_map(x.data(), in_);
            dw_map.noalias() += dy_map * x_map.transpose();
            VecMap db_map((*grads)[bias_.index].data(), out_);
            db_map += dy_map;
        }
        Tensor dx(x.shape());
        ConstMatMap w_map(weight_.value.data(), out_, in_);
        VecMap dx_map(dx.data(), in_);
        dx_map.noalias() = w_map.transpose() * dy_map;
        return dx;
    }

private:
    int64_t in_ = 0, out_ = 0;
    Param weight_;
    Param bias_;
};

/// Leaky rectifier; slope 0 gives plain ReLU.
class LeakyRelu {
public:
    explicit LeakyRelu(double slope = 0.0) : slope_(slope) {}

    Tensor forward(const Tensor& x, Ctx& ctx) const {
        Tensor y(x.shape());
        for (int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] > 0.0 ? x[i] : slope_ * x[i];
        ctx.push(x);
        return y;
    }

    Tensor backward(const Tensor& dy, Ctx& ctx, GradBuffer*) const {
        const Tensor x = ctx.pop();
        Tensor dx(x.shape());
        for (int64_t i = 0; i < x.numel(); ++i) dx[i] = x[i] > 0.0 ? dy[i] : slope_ * dy[i];
        return dx;
    }

private:
    double slope_;
};

class Sigmoid {
public:
    Tensor forward(const Tensor& x, Ctx& ctx) const {
        Tensor y(x.shape());
        for (int64_t i = 0; i < x.numel(); ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
        ctx.push(y);
        return y;
    }

    Tensor backward(const Tensor& dy, Ctx& ctx, GradBuffer*) const {
        const Tensor y = ctx.pop();
        Tensor dx(y.shape());
        for (int64_t i = 0; i < y.numel(); ++i) dx[i] = dy[i] * y[i] * (1.0 - y[i]);
        return dx;
    }
};

/// Nearest-neighbor 2x upsampling; backward is 2x2 gradient summation.
class Upsample2x {
public:
    Tensor forward(const Tensor& x, Ctx&) const {
        const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
        Tensor y({c, 2 * h, 2 * w});
        for (int64_t ch = 0; ch < c; ++ch) {
            for (int64_t yy = 0; yy < 2 * h; ++yy) {
                const double* src = x.data() + (ch * h + yy / 2) * w;
                double* dst = y.data() + (ch * 2 * h + yy) * 2 * w;
                for (int64_t xx = 0; xx < 2 * w; ++xx) dst[xx] = src[xx / 2];
            }
        }
        return y;
    }

    Tensor backward(const Tensor& dy, Ctx&, GradBuffer*) const {
        const int64_t c = dy.dim(0), h2 = dy.dim(1), w2 = dy.dim(2);
        Tensor dx({c, h2 / 2, w2 / 2});
        for (int64_t ch = 0; ch < c; ++ch) {
            for (int64_t yy = 0; yy < h2; ++yy) {
                const double* src = dy.data() + (ch * h2 + yy) * w2;
                double* dst = dx.data() + (ch * (h2 / 2) + yy / 2) * (w2 / 2);
                for (int64_t xx = 0; xx < w2; ++xx) dst[xx / 2] += src[xx];
            }
        }
        return dx;
    }
};

/// Channel concatenation of two (C, H, W) maps with matching spatial dims.
inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2)) {
        throw std::invalid_argument("concat_channels: spatial dims differ: " + a.shape_str() + " vs " + b.shape_str());
    }
    Tensor out({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
    std::copy(a.data(), a.data() + a.numel(), out.data());
    std::copy(b.data(), b.data() + b.numel(), out.data() + a.numel());
    return out;
}

inline std::pair<Tensor, Tensor> split_channels(const Tensor& d, int64_t c_first) {
    Tensor da({c_first, d.dim(1), d.dim(2)});
    Tensor db({d.dim(0) - c_first, d.dim(1), d.dim(2)});
    std::copy(d.data(), d.data() + da.numel(), da.data());
    std::copy(d.data() + da.numel(), d.data() + d.numel(), db.data());
    return {std::move(da), std::move(db)};
}

} // namespace udaseg::nn

#endif // UDASEG_NN_LAYERS_HPP
