#include "datacook/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "datacook/errors.hpp"
#include "datacook/optim.hpp"
#include "datacook/rng.hpp"

namespace datacook {

void TrainConfig::validate() const {
    if (epochs < 1) throw ParameterError("train epochs must be >= 1");
    if (batch_size < 1) throw ParameterError("train batch_size must be >= 1");
    if (!(lr > 0.0)) throw ParameterError("train lr must be > 0");
    if (momentum < 0.0 || momentum >= 1.0)
        throw ParameterError("train momentum must be in [0, 1)");
}

uint64_t TrainConfig::fingerprint() const {
    uint64_t h = 0xcbf29ce484222325ull;
    auto mix_i = [&h](int64_t v) { h = fnv1a(&v, sizeof v, h); };
    auto mix_d = [&h](double v) { h = fnv1a(&v, sizeof v, h); };
    mix_i(epochs);
    mix_i(batch_size);
    mix_d(lr);
    mix_d(momentum);
    h = fnv1a(&shuffle_seed, sizeof shuffle_seed, h);
    return h;
}

std::pair<ModelParams, TrainHistory> train(const ModelSpec& spec,
                                           const ModelParams& init_params,
                                           const Dataset& dataset,
                                           const TrainConfig& cfg) {
    cfg.validate();
    spec.validate();
    if (dataset.size() == 0) throw ParameterError("train: empty dataset");
    if (dataset.sample_shape() != spec.input_shape)
        throw ShapeError("train: dataset samples do not match model input shape");
    if (dataset.num_classes != spec.num_classes)
        throw ShapeError("train: dataset classes do not match model classes");

    const size_t n = dataset.size();
    ModelParams params = init_params;
    auto param_tensors = params.tensors();
    std::vector<SgdMomentum> opts(param_tensors.size(), SgdMomentum(cfg.lr, cfg.momentum));

    TrainHistory history;
    history.loss.reserve(cfg.epochs);
    history.acc.reserve(cfg.epochs);

    Rng rng(cfg.shuffle_seed);
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<size_t> rows;
    std::vector<int> labels;
    ModelParams grads;
    Tensor update;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates on the pinned stream, one pass per epoch.
        for (size_t i = n - 1; i > 0; --i)
            std::swap(order[i], order[rng.next_below(i + 1)]);

        double epoch_loss = 0.0;
        size_t epoch_correct = 0;
        for (size_t start = 0; start < n; start += cfg.batch_size) {
            const size_t stop = std::min(n, start + cfg.batch_size);
            rows.assign(order.begin() + start, order.begin() + stop);
            labels.resize(rows.size());
            for (size_t i = 0; i < rows.size(); ++i) labels[i] = dataset.labels[rows[i]];
            auto [mean_loss, correct] =
                batch_ce_backward(spec, params, dataset.images, rows, labels, grads);
            if (!std::isfinite(mean_loss))
                throw NumericError("non-finite training loss at epoch " +
                                   std::to_string(epoch));
            epoch_loss += mean_loss * static_cast<double>(rows.size());
            epoch_correct += static_cast<size_t>(correct);
            auto grad_tensors = grads.tensors();
            for (size_t t = 0; t < param_tensors.size(); ++t) {
                opts[t].step(*grad_tensors[t], update);
                param_tensors[t]->sub(update);
            }
        }
        history.loss.push_back(epoch_loss / static_cast<double>(n));
        history.acc.push_back(static_cast<double>(epoch_correct) /
                              static_cast<double>(n));
    }
    if (!params.all_finite()) throw NumericError("non-finite parameters after training");
    return {std::move(params), std::move(history)};
}

std::pair<std::vector<int>, Tensor> predict(const ModelSpec& spec,
                                            const ModelParams& params,
                                            const Dataset& dataset) {
    if (dataset.sample_shape() != spec.input_shape)
        throw ShapeError("predict: dataset samples do not match model input shape");
    const Tensor logits = forward(spec, params, dataset.images);
    const size_t n = dataset.size();
    const int k = spec.num_classes;
    Tensor probs({n, static_cast<size_t>(k)});
    std::vector<int> labels(n);
    for (size_t i = 0; i < n; ++i) {
        const double* row = logits.data() + i * k;
        labels[i] = argmax(row, k);
        auto p = softmax(row, k);
        std::copy(p.begin(), p.end(), probs.data() + i * k);
    }
    return {std::move(labels), std::move(probs)};
}

void write_history_csv(const std::string& path, const TrainHistory& history) {
    std::ofstream os(path);
    if (!os) throw Error("cannot open for writing: " + path);
    os << "epoch,loss,acc\n";
    char buf[64];
    for (size_t e = 0; e < history.loss.size(); ++e) {
        os << e + 1 << ",";
        std::snprintf(buf, sizeof buf, "%.17g", history.loss[e]);
        os << buf << ",";
        std::snprintf(buf, sizeof buf, "%.17g", history.acc[e]);
        os << buf << "\n";
    }
    if (!os) throw Error("write failed: " + path);
}

} // namespace datacook
