#include "datacook/reference.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "datacook/errors.hpp"

namespace datacook::ref {

namespace {

// One window: plain two-pass statistics, no shared prefix sums.
double window_ssim(const double* a, const double* b, const std::vector<size_t>& offs,
                   double c1, double c2) {
    const double n = static_cast<double>(offs.size());
    double ma = 0.0, mb = 0.0;
    for (size_t o : offs) {
        ma += a[o];
        mb += b[o];
    }
    ma /= n;
    mb /= n;
    double va = 0.0, vb = 0.0, vab = 0.0;
    for (size_t o : offs) {
        const double da = a[o] - ma;
        const double db = b[o] - mb;
        va += da * da;
        vb += db * db;
        vab += da * db;
    }
    va /= n;
    vb /= n;
    vab /= n;
    const double num = (2.0 * ma * mb + c1) * (2.0 * vab + c2);
    const double den = (ma * ma + mb * mb + c1) * (va + vb + c2);
    return std::clamp(num / den, -1.0, 1.0);
}

double plane_ssim(const double* a, const double* b, size_t h, size_t w,
                  const SsimConfig& cfg) {
    const size_t k = static_cast<size_t>(cfg.window);
    if (h < k || w < k) throw ParameterError("reference ssim: window larger than image");
    const double c1 = (cfg.k1 * cfg.dynamic_range) * (cfg.k1 * cfg.dynamic_range);
    const double c2 = (cfg.k2 * cfg.dynamic_range) * (cfg.k2 * cfg.dynamic_range);
    std::vector<size_t> offs(k * k);
    double total = 0.0;
    size_t count = 0;
    for (size_t y = 0; y + k <= h; ++y) {
        for (size_t x = 0; x + k <= w; ++x) {
            size_t i = 0;
            for (size_t ky = 0; ky < k; ++ky)
                for (size_t kx = 0; kx < k; ++kx) offs[i++] = (y + ky) * w + (x + kx);
            total += window_ssim(a, b, offs, c1, c2);
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

double volume_ssim(const double* a, const double* b, size_t d, size_t h, size_t w,
                   const SsimConfig& cfg) {
    const size_t k = static_cast<size_t>(cfg.window);
    if (d < k || h < k || w < k)
        throw ParameterError("reference ssim: window larger than volume");
    const double c1 = (cfg.k1 * cfg.dynamic_range) * (cfg.k1 * cfg.dynamic_range);
    const double c2 = (cfg.k2 * cfg.dynamic_range) * (cfg.k2 * cfg.dynamic_range);
    std::vector<size_t> offs(k * k * k);
    double total = 0.0;
    size_t count = 0;
    for (size_t z = 0; z + k <= d; ++z) {
        for (size_t y = 0; y + k <= h; ++y) {
            for (size_t x = 0; x + k <= w; ++x) {
                size_t i = 0;
                for (size_t kz = 0; kz < k; ++kz)
                    for (size_t ky = 0; ky < k; ++ky)
                        for (size_t kx = 0; kx < k; ++kx)
                            offs[i++] = ((z + kz) * h + (y + ky)) * w + (x + kx);
                total += window_ssim(a, b, offs, c1, c2);
                ++count;
            }
        }
    }
    return total / static_cast<double>(count);
}

} // namespace

double ssim(const Tensor& a, const Tensor& b, const SsimConfig& cfg) {
    cfg.validate();
    if (a.shape() != b.shape()) throw ShapeError("reference ssim: shape mismatch");
    if (a.rank() == 2) return plane_ssim(a.data(), b.data(), a.shape()[0], a.shape()[1], cfg);
    if (a.rank() == 3) {
        const size_t c = a.shape()[0], h = a.shape()[1], w = a.shape()[2];
        if (cfg.mode == SsimMode::Volumetric)
            return volume_ssim(a.data(), b.data(), c, h, w, cfg);
        double total = 0.0;
        for (size_t ch = 0; ch < c; ++ch)
            total += plane_ssim(a.data() + ch * h * w, b.data() + ch * h * w, h, w, cfg);
        return total / static_cast<double>(c);
    }
    throw ShapeError("reference ssim: expected rank-2 or rank-3 images");
}

double ssim_batch_min(const Tensor& images_a, const Tensor& images_b,
                      const SsimConfig& cfg) {
    if (images_a.shape() != images_b.shape())
        throw ParameterError("reference ssim_batch_min: shape mismatch");
    const size_t n = images_a.shape()[0];
    std::vector<size_t> sample_shape(images_a.shape().begin() + 1,
                                     images_a.shape().end());
    size_t stride = 1;
    for (size_t d : sample_shape) stride *= d;
    double m = 2.0;
    for (size_t i = 0; i < n; ++i) {
        Tensor a = Tensor::from_data(
            sample_shape, std::vector<double>(images_a.data() + i * stride,
                                              images_a.data() + (i + 1) * stride));
        Tensor b = Tensor::from_data(
            sample_shape, std::vector<double>(images_b.data() + i * stride,
                                              images_b.data() + (i + 1) * stride));
        m = std::min(m, ref::ssim(a, b, cfg));
    }
    return m;
}

Tensor forward_serial(const ModelSpec& spec, const ModelParams& params,
                      const Tensor& batch) {
    const size_t b = batch.shape()[0];
    const size_t k = static_cast<size_t>(spec.num_classes);
    size_t stride = 1;
    for (size_t i = 1; i < batch.rank(); ++i) stride *= batch.shape()[i];
    Tensor logits({b, k});
    Activations acts;
    for (size_t i = 0; i < b; ++i) {
        Tensor x = Tensor::from_data(
            spec.input_shape, std::vector<double>(batch.data() + i * stride,
                                                  batch.data() + (i + 1) * stride));
        const Tensor& out = forward_sample(spec, params, x, acts);
        std::memcpy(logits.data() + i * k, out.data(), k * sizeof(double));
    }
    return logits;
}

std::pair<double, int> grad_serial(const ModelSpec& spec, const ModelParams& params,
                                   const Tensor& images, const std::vector<size_t>& rows,
                                   const std::vector<int>& labels, ModelParams& grad_out) {
    const size_t b = rows.size();
    const int k = spec.num_classes;
    const double inv_b = 1.0 / static_cast<double>(b);
    size_t stride = 1;
    for (size_t i = 1; i < images.rank(); ++i) stride *= images.shape()[i];

    grad_out = zeros_like(spec);
    auto out_tensors = grad_out.tensors();
    Activations acts;
    double loss = 0.0;
    int correct = 0;
    for (size_t s = 0; s < b; ++s) {
        Tensor x = Tensor::from_data(
            spec.input_shape,
            std::vector<double>(images.data() + rows[s] * stride,
                                images.data() + (rows[s] + 1) * stride));
        const Tensor& logits = forward_sample(spec, params, x, acts);
        const int label = labels[s];
        auto probs = softmax(logits.data(), k);
        loss += loss_value(logits, LossSpec::cross_entropy(), label);
        if (argmax(logits.data(), k) == label) ++correct;
        Tensor dlogits({static_cast<size_t>(k)});
        for (int c = 0; c < k; ++c)
            dlogits[c] = (probs[c] - (c == label ? 1.0 : 0.0)) * inv_b;
        ModelParams slot = zeros_like(spec);
        backward_sample(spec, params, acts, x, dlogits, &slot, nullptr);
        auto st = slot.tensors();
        for (size_t t = 0; t < out_tensors.size(); ++t) out_tensors[t]->add(*st[t]);
    }
    return {loss * inv_b, correct};
}

double ScalarAdam::step(double g) {
    t += 1;
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g * g;
    const double mhat = m / (1.0 - std::pow(beta1, static_cast<double>(t)));
    const double vhat = v / (1.0 - std::pow(beta2, static_cast<double>(t)));
    return lr * mhat / (std::sqrt(vhat) + eps);
}

double auc_pairwise(const std::vector<double>& scores, const std::vector<int>& labels) {
    size_t pos = 0, neg = 0;
    for (int l : labels) (l == 1 ? pos : neg) += 1;
    if (pos == 0 || neg == 0)
        throw UndefinedMetricError("pairwise auc needs both classes");
    long long wins2 = 0; // twice the pair score so ties stay integral
    for (size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            if (scores[i] > scores[j])
                wins2 += 2;
            else if (scores[i] == scores[j])
                wins2 += 1;
        }
    }
    return (static_cast<double>(wins2) / 2.0) /
           (static_cast<double>(pos) * static_cast<double>(neg));
}

} // namespace datacook::ref
