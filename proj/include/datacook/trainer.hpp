#pragma once

// Supervised training of the surrogate and protected classifiers: plain
// SGD with momentum on mean-batch cross-entropy, epoch-wise shuffling from
// a pinned RNG, fully deterministic.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "datacook/dataset.hpp"
#include "datacook/model.hpp"

namespace datacook {

struct TrainConfig {
    int epochs = 30;      // desk default; the full-scale setting is 200
    int batch_size = 128;
    double lr = 1e-3;
    double momentum = 0.9;
    uint64_t shuffle_seed = 0;

    void validate() const; // positive fields, momentum in [0,1)
    uint64_t fingerprint() const;
};

struct TrainHistory {
    std::vector<double> loss; // mean cross-entropy per epoch
    std::vector<double> acc;  // train accuracy per epoch
};

std::pair<ModelParams, TrainHistory> train(const ModelSpec& spec,
                                           const ModelParams& init_params,
                                           const Dataset& dataset,
                                           const TrainConfig& cfg);

// Argmax labels (lowest-index tie-break) and full softmax rows [N, classes].
std::pair<std::vector<int>, Tensor> predict(const ModelSpec& spec,
                                            const ModelParams& params,
                                            const Dataset& dataset);

void write_history_csv(const std::string& path, const TrainHistory& history);

} // namespace datacook
