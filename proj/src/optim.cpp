#include "datacook/optim.hpp"

#include <cmath>

namespace datacook {

void SgdMomentum::step(const Tensor& grad, Tensor& update) {
    if (velocity_.empty()) velocity_ = Tensor(grad.shape());
    const size_t n = grad.numel();
    if (!update.same_shape(grad)) update = Tensor(grad.shape());
    double* v = velocity_.data();
    double* u = update.data();
    const double* g = grad.data();
    for (size_t i = 0; i < n; ++i) {
        v[i] = mu_ * v[i] + g[i];
        u[i] = lr_ * v[i];
    }
}

void Adam::step(const Tensor& grad, Tensor& update) {
    if (m_.empty()) {
        m_ = Tensor(grad.shape());
        v_ = Tensor(grad.shape());
    }
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    const size_t n = grad.numel();
    if (!update.same_shape(grad)) update = Tensor(grad.shape());
    double* m = m_.data();
    double* v = v_.data();
    double* u = update.data();
    const double* g = grad.data();
    for (size_t i = 0; i < n; ++i) {
        m[i] = b1_ * m[i] + (1.0 - b1_) * g[i];
        v[i] = b2_ * v[i] + (1.0 - b2_) * g[i] * g[i];
        double mhat = m[i] / c1;
        double vhat = v[i] / c2;
        u[i] = lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
}

} // namespace datacook
