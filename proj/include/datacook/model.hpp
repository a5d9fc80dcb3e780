#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "datacook/tensor.hpp"

namespace datacook {

// Small differentiable classifiers with analytic backpropagation to both
// parameters and inputs. Layer kinds are deliberately few; shapes are
// checked statically by ModelSpec::validate().

enum class LayerKind { Dense, Conv2d, Relu, MaxPool2d, Flatten };

struct LayerDesc {
    LayerKind kind = LayerKind::Relu;
    int in = 0;      // dense inputs / conv input channels
    int out = 0;     // dense outputs / conv output channels
    int kernel = 0;  // conv / pool kernel side
    int stride = 1;  // conv stride (pool stride == kernel)

    static LayerDesc dense(int in, int out) { return {LayerKind::Dense, in, out, 0, 1}; }
    static LayerDesc conv2d(int in_ch, int out_ch, int k, int stride = 1) {
        return {LayerKind::Conv2d, in_ch, out_ch, k, stride};
    }
    static LayerDesc relu() { return {LayerKind::Relu, 0, 0, 0, 1}; }
    static LayerDesc maxpool2d(int k) { return {LayerKind::MaxPool2d, 0, 0, k, 1}; }
    static LayerDesc flatten() { return {LayerKind::Flatten, 0, 0, 0, 1}; }

    bool has_params() const { return kind == LayerKind::Dense || kind == LayerKind::Conv2d; }
};

struct ModelSpec {
    std::vector<LayerDesc> layers;
    int num_classes = 0;
    std::vector<size_t> input_shape;

    // Throws ShapeError unless consecutive layer shapes compose and the
    // final output is [num_classes].
    void validate() const;

    // Output shape after each layer, starting from input_shape.
    std::vector<std::vector<size_t>> layer_shapes() const;

    uint64_t fingerprint() const;
};

// Desk-scale reference architectures.
ModelSpec small_cnn(const std::vector<size_t>& input_shape, int num_classes);
ModelSpec small_mlp(const std::vector<size_t>& input_shape, int num_classes);
// arch is "smallcnn" or "smallmlp".
ModelSpec make_model(const std::string& arch, const std::vector<size_t>& input_shape,
                     int num_classes);

struct LayerParams {
    Tensor w, b; // empty for layers without parameters
};

struct ModelParams {
    std::vector<LayerParams> layers; // aligned with ModelSpec::layers
    uint64_t init_seed = 0;

    std::vector<Tensor*> tensors();
    std::vector<const Tensor*> tensors() const;
    uint64_t content_fingerprint() const;
    bool all_finite() const;
};

// He-uniform weights (bound sqrt(6/fan_in)), zero biases; deterministic per seed.
ModelParams init_params(const ModelSpec& spec, uint64_t seed);
// Zero tensors in the spec's parameter shapes (gradient / velocity buffers).
ModelParams zeros_like(const ModelSpec& spec);

struct LossSpec {
    enum class Form { TargetLogit, TargetLogProb, CrossEntropy };
    Form form = Form::CrossEntropy;
    int target_class = -1; // present iff form is TargetLogit / TargetLogProb

    static LossSpec target_logit(int t) { return {Form::TargetLogit, t}; }
    static LossSpec target_log_prob(int t) { return {Form::TargetLogProb, t}; }
    static LossSpec cross_entropy() { return {Form::CrossEntropy, -1}; }
};

// Max-subtracted softmax of a logit row.
std::vector<double> softmax(const double* logits, int n);
int argmax(const double* values, int n); // lowest index wins ties

// TargetLogit: -logit[target]; TargetLogProb: -log softmax[target];
// CrossEntropy: -log softmax[label]. Crafting minimizes this for AntiAdv
// and maximizes it for Adv.
double loss_value(const Tensor& logits, const LossSpec& loss, int label = -1);

// Per-layer outputs of one sample; reusable across calls.
struct Activations {
    std::vector<Tensor> out;
};

// Single-sample forward; returns the logits (== acts.out.back()).
const Tensor& forward_sample(const ModelSpec& spec, const ModelParams& params,
                             const Tensor& x, Activations& acts);

// Single-sample backward from d(loss)/d(logits). Accumulates parameter
// gradients into grad_accum and/or writes the input gradient; either may
// be null.
void backward_sample(const ModelSpec& spec, const ModelParams& params,
                     const Activations& acts, const Tensor& x,
                     const Tensor& dlogits, ModelParams* grad_accum, Tensor* dx);

// Batch forward: batch is [B] + input_shape, result [B, num_classes].
// Sample-parallel; bits do not depend on thread count.
Tensor forward(const ModelSpec& spec, const ModelParams& params, const Tensor& batch);

// Gradient of mean cross-entropy over the batch w.r.t. every parameter.
ModelParams backward_params(const ModelSpec& spec, const ModelParams& params,
                            const Tensor& batch, const std::vector<int>& labels);

// Mean-CE gradient over a row subset of `images`; returns (mean loss,
// argmax-correct count). Per-sample gradients are reduced in sample order,
// so the result is identical for any thread count.
std::pair<double, int> batch_ce_backward(const ModelSpec& spec, const ModelParams& params,
                                         const Tensor& images,
                                         const std::vector<size_t>& rows,
                                         const std::vector<int>& labels,
                                         ModelParams& grad_out);

// d loss_value / d x for a single sample.
Tensor input_gradient(const ModelSpec& spec, const ModelParams& params,
                      const Tensor& x, const LossSpec& loss);

// Workspace variant used by the crafting loop; returns the loss value.
double loss_and_input_grad(const ModelSpec& spec, const ModelParams& params,
                           const Tensor& x, const LossSpec& loss,
                           Activations& acts, Tensor& dx);

// Checkpoint container: "DCM1" | u8 version | u64 spec fingerprint |
// per-layer w,b tensors in DCT1 framing.
void save_params(const std::string& path, const ModelSpec& spec, const ModelParams& params);
ModelParams load_params(const std::string& path, const ModelSpec& spec);
// Content hash of a checkpoint file (provenance stamp for cooked datasets).
uint64_t checkpoint_fingerprint(const std::string& path);

} // namespace datacook
