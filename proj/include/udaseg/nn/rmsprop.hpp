#ifndef UDASEG_NN_RMSPROP_HPP
#define UDASEG_NN_RMSPROP_HPP

#include <cmath>
#include <stdexcept>
#include <vector>

#include "udaseg/nn/layers.hpp"

namespace udaseg::nn {

/// RMSProp: v <- rho*v + (1-rho)*g^2;  p <- p - lr*g/(sqrt(v)+eps).
class RmsProp {
public:
    RmsProp() = default;

    explicit RmsProp(const std::vector<Param*>& params, double rho = 0.9, double eps = 1e-8)
        : rho_(rho), eps_(eps) {
        mean_square_.reserve(params.size());
        for (const Param* p : params) mean_square_.emplace_back(Tensor::zeros(p->value.shape()));
    }

    void step(const std::vector<Param*>& params, const GradBuffer& grads, double lr) {
        if (params.size() != mean_square_.size()) throw std::invalid_argument("RmsProp::step: parameter count mismatch");
        for (size_t i = 0; i < params.size(); ++i) {
            Tensor& p = params[i]->value;
            const Tensor& g = grads[static_cast<int>(i)];
            Tensor& v = mean_square_[i];
            for (int64_t j = 0; j < p.numel(); ++j) {
                v[j] = rho_ * v[j] + (1.0 - rho_) * g[j] * g[j];
                p[j] -= lr * g[j] / (std::sqrt(v[j]) + eps_);
            }
        }
    }

    std::vector<Tensor>& state() { return mean_square_; }
    const std::vector<Tensor>& state() const { return mean_square_; }
    double rho() const { return rho_; }
    double eps() const { return eps_; }

private:
    double rho_ = 0.9;
    double eps_ = 1e-8;
    std::vector<Tensor> mean_square_;
};

} // namespace udaseg::nn

#endif // UDASEG_NN_RMSPROP_HPP
