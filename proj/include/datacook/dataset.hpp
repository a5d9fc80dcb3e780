#pragma once

// Labeled image datasets, their binary container (DCD1), and the synthetic
// blob corpus used as the desk-scale stand-in for real image data.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "datacook/ssim.hpp"
#include "datacook/tensor.hpp"

namespace datacook {

enum class Split : uint8_t { Train, Test };

// Where a dataset came from. Raw/cooked/noise images live in [0,1];
// perturbation datasets are re-centered differences and may reach
// [-0.5, 1.5], so range validation is provenance-aware.
enum class Provenance : uint8_t {
    Raw = 0,
    Cooked = 1,       // config_fingerprint = mix(craft cfg, surrogate params)
    Noise = 2,        // config_fingerprint = bit pattern of the final sigma
    Perturbation = 3, // config_fingerprint = fingerprint of the source pair
};

struct Dataset {
    Tensor images; // [N, ...sample dims]
    std::vector<int> labels;
    int num_classes = 0;
    Split split = Split::Train;
    Provenance provenance = Provenance::Raw;
    uint64_t config_fingerprint = 0;

    size_t size() const { return labels.size(); }
    std::vector<size_t> sample_shape() const;
    size_t sample_numel() const;
    Tensor sample(size_t i) const;
    void set_sample(size_t i, const Tensor& x);

    // Checks the container invariants: nonempty, label range, image range
    // (range per provenance as above). Throws on violation.
    void validate() const;

    // Hash over images, labels and num_classes (not provenance/fingerprint).
    uint64_t content_fingerprint() const;
};

const char* provenance_name(Provenance p);

// DCD1 container round trip; load validates magic, shapes, label range and
// payload length and throws FormatError on any violation.
void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

// Minimum SSIM over paired samples of two aligned datasets.
double ssim_batch_min(const Dataset& a, const Dataset& b, const SsimConfig& cfg = {});

// Synthetic corpus: each class is a Gaussian intensity blob at a
// class-specific location on a side×side canvas, with per-sample center
// jitter and pixel noise, clamped to [0,1]. Classes are balanced and the
// whole corpus is a pure function of (recipe, seed).
struct SynthRecipe {
    int classes = 2;
    int per_class_train = 1000;
    int per_class_test = 250;
    int side = 16;
    double separation = 0.8;  // fraction of the canvas radius between centers
    double blob_sigma = 2.2;  // blob width in pixels
    double center_jitter = 0.7; // per-sample center displacement std, pixels
    double pixel_noise = 0.15;  // additive N(0, sigma^2) per pixel
    double amplitude = 0.5;     // blob contrast against the 0.5 background
                                // (each sample is randomly bright or dark)

    void validate() const; // classes >= 2, counts >= 1, side >= 8, etc.
    uint64_t fingerprint() const;
};

struct SynthResult {
    Dataset train;
    Dataset test;
    double nn_accuracy = 0.0; // 1-NN (L2, train as reference) on the test split
    bool warning = false;     // true when nn_accuracy < 0.9
};

SynthResult synth_dataset(const SynthRecipe& recipe, uint64_t seed);

} // namespace datacook
