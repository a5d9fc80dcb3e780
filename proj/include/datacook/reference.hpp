#pragma once

// Independent serial reference implementations used only by tests and the
// kernel benchmark. These deliberately avoid the tricks of the main code
// (summed-area tables, rank statistics, batch parallelism) so they can act
// as oracles for it.

#include <utility>
#include <vector>

#include "datacook/model.hpp"
#include "datacook/ssim.hpp"
#include "datacook/tensor.hpp"

namespace datacook::ref {

// Two-pass scalar sliding-window SSIM: per window, means first, then
// centered second moments. Same config semantics as the main ssim().
double ssim(const Tensor& a, const Tensor& b, const SsimConfig& cfg = {});

// Per-pair loop over a batch; serial min.
double ssim_batch_min(const Tensor& images_a, const Tensor& images_b,
                      const SsimConfig& cfg = {});

// Serial batch forward: one sample at a time, no OpenMP.
Tensor forward_serial(const ModelSpec& spec, const ModelParams& params,
                      const Tensor& batch);

// Serial mean-CE gradient over the given rows, accumulated in row order.
// Matches batch_ce_backward bit-for-bit.
std::pair<double, int> grad_serial(const ModelSpec& spec, const ModelParams& params,
                                   const Tensor& images, const std::vector<size_t>& rows,
                                   const std::vector<int>& labels, ModelParams& grad_out);

// Scalar Adam with bias correction, one weight at a time.
struct ScalarAdam {
    double lr, beta1, beta2, eps;
    double m = 0.0, v = 0.0;
    long t = 0;

    ScalarAdam(double lr_, double b1 = 0.9, double b2 = 0.999, double e = 1e-8)
        : lr(lr_), beta1(b1), beta2(b2), eps(e) {}

    double step(double g);
};

// O(P*N) pairwise Mann-Whitney AUC with ties counted 0.5.
double auc_pairwise(const std::vector<double>& scores, const std::vector<int>& labels);

} // namespace datacook::ref
