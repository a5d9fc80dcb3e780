// Benchmark: OpenMP batch kernels against the serial reference implementations.
// Reports wall time for each and confirms the outputs agree bit for bit.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <vector>

#include "datacook/cook.hpp"
#include "datacook/dataset.hpp"
#include "datacook/model.hpp"
#include "datacook/reference.hpp"
#include "datacook/rng.hpp"
#include "datacook/ssim.hpp"
#include "datacook/tensor.hpp"

using namespace datacook;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_of(Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration<double>(b - a).count();
}

bool bits_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    return std::memcmp(a.data(), b.data(), a.numel() * sizeof(double)) == 0;
}

void report(const char* name, double serial_s, double parallel_s, bool identical) {
    std::printf("%-28s %10.4fs %10.4fs %8.2fx   %s\n", name, serial_s, parallel_s,
                serial_s / parallel_s, identical ? "bit-identical" : "MISMATCH");
}

} // namespace

int main() {
    SynthRecipe recipe;
    recipe.per_class_train = 400;
    recipe.per_class_test = 50;
    SynthResult synth = synth_dataset(recipe, 7);
    const Dataset& data = synth.train;

    const ModelSpec spec = make_model("smallcnn", data.sample_shape(), data.num_classes);
    ModelParams params = init_params(spec, 11);

    std::printf("%zu samples, %d classes, %dx%d, smallcnn\n\n", data.size(),
                data.num_classes, recipe.side, recipe.side);
    std::printf("%-28s %11s %11s %9s\n", "kernel", "serial", "parallel", "speedup");

    {
        auto t0 = Clock::now();
        Tensor serial = ref::forward_serial(spec, params, data.images);
        auto t1 = Clock::now();
        Tensor parallel = forward(spec, params, data.images);
        auto t2 = Clock::now();
        report("batch forward", seconds_of(t0, t1), seconds_of(t1, t2),
               bits_equal(serial, parallel));
    }

    {
        std::vector<size_t> rows(data.size());
        for (size_t i = 0; i < rows.size(); ++i) rows[i] = i;
        ModelParams sg = zeros_like(spec);
        ModelParams pg = zeros_like(spec);

        auto t0 = Clock::now();
        auto [sl, sc] = ref::grad_serial(spec, params, data.images, rows, data.labels, sg);
        auto t1 = Clock::now();
        auto [pl, pc] = batch_ce_backward(spec, params, data.images, rows, data.labels, pg);
        auto t2 = Clock::now();

        bool same = sl == pl && sc == pc;
        auto st = sg.tensors();
        auto pt = pg.tensors();
        for (size_t i = 0; same && i < st.size(); ++i) same = bits_equal(*st[i], *pt[i]);
        report("batch gradient", seconds_of(t0, t1), seconds_of(t1, t2), same);
    }

    {
        Rng rng(1234);
        Dataset noisy = data;
        for (size_t i = 0; i < noisy.images.numel(); ++i) {
            double v = noisy.images[i] + 0.05 * rng.normal();
            noisy.images[i] = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        }

        SsimConfig cfg;
        auto t0 = Clock::now();
        double serial_min = ref::ssim_batch_min(data.images, noisy.images, cfg);
        auto t1 = Clock::now();
        double parallel_min = ssim_batch_min(data.images, noisy.images, cfg);
        auto t2 = Clock::now();
        // Two independent formulations: agreement is numeric, not bitwise.
        bool close = std::abs(serial_min - parallel_min) < 1e-9;
        report("ssim batch min", seconds_of(t0, t1), seconds_of(t1, t2), close);
        std::printf("  (two-pass reference vs summed-area tables: |diff| = %.3g)\n",
                    std::abs(serial_min - parallel_min));
    }

    return 0;
}
