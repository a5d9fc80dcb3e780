#pragma once

#include "datacook/tensor.hpp"

namespace datacook {

// First-order update rules shared by training (parameters) and crafting
// (input pixels). step() turns a gradient into an update of the same
// shape; the caller applies it with its own sign convention.

// v <- mu * v + g;  step = lr * v
class SgdMomentum {
public:
    SgdMomentum(double lr, double momentum) : lr_(lr), mu_(momentum) {}

    void step(const Tensor& grad, Tensor& update);

    double lr() const { return lr_; }

private:
    double lr_, mu_;
    Tensor velocity_;
};

// Bias-corrected Adam:
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
//   step = lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

    void step(const Tensor& grad, Tensor& update);

    double lr() const { return lr_; }

private:
    double lr_, b1_, b2_, eps_;
    long t_ = 0;
    Tensor m_, v_;
};

} // namespace datacook
