#include "datacook/ssim.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "datacook/errors.hpp"

namespace datacook {

void SsimConfig::validate() const {
    if (window < 3 || window % 2 == 0)
        throw ParameterError("ssim window must be odd and >= 3, got " +
                             std::to_string(window));
    if (!(k1 > 0.0) || !(k2 > 0.0) || !(dynamic_range > 0.0))
        throw ParameterError("ssim k1, k2 and dynamic range must be > 0");
}

const char* ssim_mode_name(SsimMode mode) {
    return mode == SsimMode::PerChannel2d ? "per-channel-2d" : "volumetric";
}

namespace {

// Summed-area table over an H×W plane: sat[(y+1)*(W+1)+(x+1)] holds the sum
// of f over the inclusive prefix rectangle. Accumulation order is fixed, so
// identical inputs give bitwise identical tables.
void sat2d(const double* img, size_t h, size_t w, const double* other,
           std::vector<double>& sat) {
    const size_t sw = w + 1;
    sat.assign((h + 1) * sw, 0.0);
    for (size_t y = 0; y < h; ++y) {
        double row = 0.0;
        for (size_t x = 0; x < w; ++x) {
            row += other ? img[y * w + x] * other[y * w + x] : img[y * w + x];
            sat[(y + 1) * sw + (x + 1)] = sat[y * sw + (x + 1)] + row;
        }
    }
}

double box2d(const std::vector<double>& sat, size_t sw, size_t y, size_t x, size_t k) {
    return sat[(y + k) * sw + (x + k)] - sat[y * sw + (x + k)] -
           sat[(y + k) * sw + x] + sat[y * sw + x];
}

double window_value(double sx, double sy, double sxx, double syy, double sxy,
                    double inv_n, double c1, double c2) {
    const double mx = sx * inv_n;
    const double my = sy * inv_n;
    const double vx = sxx * inv_n - mx * mx;
    const double vy = syy * inv_n - my * my;
    const double vxy = sxy * inv_n - mx * my;
    const double num = (2.0 * mx * my + c1) * (2.0 * vxy + c2);
    const double den = (mx * mx + my * my + c1) * (vx + vy + c2);
    return std::clamp(num / den, -1.0, 1.0);
}

double ssim_plane(const double* a, const double* b, size_t h, size_t w,
                  const SsimConfig& cfg) {
    const size_t k = static_cast<size_t>(cfg.window);
    if (h < k || w < k)
        throw ParameterError("ssim window " + std::to_string(k) +
                             " larger than image plane " + std::to_string(h) + "x" +
                             std::to_string(w));
    thread_local std::vector<double> sa, sb, saa, sbb, sab;
    sat2d(a, h, w, nullptr, sa);
    sat2d(b, h, w, nullptr, sb);
    sat2d(a, h, w, a, saa);
    sat2d(b, h, w, b, sbb);
    sat2d(a, h, w, b, sab);
    const size_t sw = w + 1;
    const double inv_n = 1.0 / static_cast<double>(k * k);
    const double c1 = (cfg.k1 * cfg.dynamic_range) * (cfg.k1 * cfg.dynamic_range);
    const double c2 = (cfg.k2 * cfg.dynamic_range) * (cfg.k2 * cfg.dynamic_range);
    double total = 0.0;
    size_t count = 0;
    for (size_t y = 0; y + k <= h; ++y) {
        for (size_t x = 0; x + k <= w; ++x) {
            total += window_value(box2d(sa, sw, y, x, k), box2d(sb, sw, y, x, k),
                                  box2d(saa, sw, y, x, k), box2d(sbb, sw, y, x, k),
                                  box2d(sab, sw, y, x, k), inv_n, c1, c2);
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

// 3D summed-area table over a D×H×W volume, one inclusive prefix box per cell.
void sat3d(const double* img, size_t d, size_t h, size_t w, const double* other,
           std::vector<double>& sat) {
    const size_t sh = h + 1, sw = w + 1;
    sat.assign((d + 1) * sh * sw, 0.0);
    for (size_t z = 0; z < d; ++z) {
        for (size_t y = 0; y < h; ++y) {
            double row = 0.0;
            for (size_t x = 0; x < w; ++x) {
                const size_t i = (z * h + y) * w + x;
                row += other ? img[i] * other[i] : img[i];
                // prefix over (z,y) planes plus the running row sum
                sat[((z + 1) * sh + (y + 1)) * sw + (x + 1)] =
                    sat[(z * sh + (y + 1)) * sw + (x + 1)] +
                    sat[((z + 1) * sh + y) * sw + (x + 1)] -
                    sat[(z * sh + y) * sw + (x + 1)] + row;
            }
        }
    }
}

double box3d(const std::vector<double>& sat, size_t sh, size_t sw, size_t z,
             size_t y, size_t x, size_t k) {
    auto at = [&](size_t zz, size_t yy, size_t xx) {
        return sat[(zz * sh + yy) * sw + xx];
    };
    return at(z + k, y + k, x + k) - at(z, y + k, x + k) - at(z + k, y, x + k) -
           at(z + k, y + k, x) + at(z, y, x + k) + at(z, y + k, x) +
           at(z + k, y, x) - at(z, y, x);
}

double ssim_volume(const double* a, const double* b, size_t d, size_t h, size_t w,
                   const SsimConfig& cfg) {
    const size_t k = static_cast<size_t>(cfg.window);
    if (d < k || h < k || w < k)
        throw ParameterError("ssim cubic window " + std::to_string(k) +
                             " larger than volume");
    thread_local std::vector<double> sa, sb, saa, sbb, sab;
    sat3d(a, d, h, w, nullptr, sa);
    sat3d(b, d, h, w, nullptr, sb);
    sat3d(a, d, h, w, a, saa);
    sat3d(b, d, h, w, b, sbb);
    sat3d(a, d, h, w, b, sab);
    const size_t sh = h + 1, sw = w + 1;
    const double inv_n = 1.0 / static_cast<double>(k * k * k);
    const double c1 = (cfg.k1 * cfg.dynamic_range) * (cfg.k1 * cfg.dynamic_range);
    const double c2 = (cfg.k2 * cfg.dynamic_range) * (cfg.k2 * cfg.dynamic_range);
    double total = 0.0;
    size_t count = 0;
    for (size_t z = 0; z + k <= d; ++z)
        for (size_t y = 0; y + k <= h; ++y)
            for (size_t x = 0; x + k <= w; ++x) {
                total += window_value(box3d(sa, sh, sw, z, y, x, k),
                                      box3d(sb, sh, sw, z, y, x, k),
                                      box3d(saa, sh, sw, z, y, x, k),
                                      box3d(sbb, sh, sw, z, y, x, k),
                                      box3d(sab, sh, sw, z, y, x, k), inv_n, c1, c2);
                ++count;
            }
    return total / static_cast<double>(count);
}

} // namespace

double ssim(const Tensor& a, const Tensor& b, const SsimConfig& cfg) {
    cfg.validate();
    if (a.shape() != b.shape()) throw ShapeError("ssim: images differ in shape");
    if (a.rank() == 2) return ssim_plane(a.data(), b.data(), a.shape()[0], a.shape()[1], cfg);
    if (a.rank() == 3) {
        const size_t c = a.shape()[0], h = a.shape()[1], w = a.shape()[2];
        if (cfg.mode == SsimMode::Volumetric)
            return ssim_volume(a.data(), b.data(), c, h, w, cfg);
        double total = 0.0;
        for (size_t ch = 0; ch < c; ++ch)
            total += ssim_plane(a.data() + ch * h * w, b.data() + ch * h * w, h, w, cfg);
        return total / static_cast<double>(c);
    }
    throw ShapeError("ssim: expected rank-2 or rank-3 images, got rank " +
                     std::to_string(a.rank()));
}

double ssim_batch_min(const Tensor& images_a, const Tensor& images_b,
                      const SsimConfig& cfg) {
    cfg.validate();
    if (images_a.shape() != images_b.shape())
        throw ParameterError("ssim_batch_min: batches differ in shape");
    if (images_a.rank() < 3)
        throw ShapeError("ssim_batch_min: expected [N, ...image] tensors");
    const size_t n = images_a.shape()[0];
    std::vector<size_t> sample_shape(images_a.shape().begin() + 1, images_a.shape().end());
    size_t stride = 1;
    for (size_t d : sample_shape) stride *= d;

    std::vector<double> vals(n);
#pragma omp parallel for schedule(static)
    for (long i = 0; i < static_cast<long>(n); ++i) {
        const size_t s = static_cast<size_t>(i);
        Tensor a = Tensor::from_data(
            sample_shape, std::vector<double>(images_a.data() + s * stride,
                                              images_a.data() + (s + 1) * stride));
        Tensor b = Tensor::from_data(
            sample_shape, std::vector<double>(images_b.data() + s * stride,
                                              images_b.data() + (s + 1) * stride));
        vals[s] = ssim(a, b, cfg);
    }
    double m = vals[0];
    for (size_t i = 1; i < n; ++i) m = std::min(m, vals[i]);
    return m;
}

} // namespace datacook
