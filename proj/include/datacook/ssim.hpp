#pragma once

// Structural Similarity index with a uniform (box) window: the similarity
// constraint that bounds how far crafting may push a sample from its raw
// original. Rank-2 tensors are H×W images; rank-3 tensors are either C×H×W
// (per-channel 2D SSIM, averaged) or D×H×W (one cubic sliding window over
// the volume) depending on the mode flag.

#include "datacook/tensor.hpp"

namespace datacook {

enum class SsimMode {
    PerChannel2d, // rank-3 = channels; 2D SSIM per channel, arithmetic mean
    Volumetric,   // rank-3 = depth; k×k×k cubic window
};

struct SsimConfig {
    int window = 7;       // box side length; odd, >= 3
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0; // L; 1.0 for images normalized to [0,1]
    SsimMode mode = SsimMode::PerChannel2d;

    void validate() const; // throws ParameterError on bad fields
};

// Mean over all stride-1 valid window positions of the per-window SSIM
// value, each clamped to [-1, 1]. Symmetric in (a, b) bit-exactly and
// exactly 1.0 when a and b are bitwise identical.
double ssim(const Tensor& a, const Tensor& b, const SsimConfig& cfg = {});

// Minimum of ssim over paired samples; dim 0 of both tensors indexes the
// samples. Parallel map with a deterministic serial min-reduction.
double ssim_batch_min(const Tensor& images_a, const Tensor& images_b,
                      const SsimConfig& cfg = {});

const char* ssim_mode_name(SsimMode mode);

} // namespace datacook
