#include "datacook/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "datacook/errors.hpp"
#include "datacook/rng.hpp"

namespace datacook {

namespace {

size_t shape_numel(const std::vector<size_t>& s) {
    size_t n = 1;
    for (size_t d : s) n *= d;
    return n;
}

std::string shape_str(const std::vector<size_t>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

// Normalizes a conv/pool input to (C, H, W); rank-2 means a single channel.
void as_chw(const std::vector<size_t>& s, size_t& c, size_t& h, size_t& w,
            const char* layer) {
    if (s.size() == 2) {
        c = 1;
        h = s[0];
        w = s[1];
    } else if (s.size() == 3) {
        c = s[0];
        h = s[1];
        w = s[2];
    } else {
        throw ShapeError(std::string(layer) + ": expected rank-2 or rank-3 input, got " +
                         shape_str(s));
    }
}

std::vector<size_t> layer_output_shape(const LayerDesc& d, const std::vector<size_t>& in) {
    switch (d.kind) {
        case LayerKind::Dense: {
            if (in.size() != 1)
                throw ShapeError("dense: expected rank-1 input, got " + shape_str(in) +
                                 " (flatten first)");
            if (in[0] != static_cast<size_t>(d.in))
                throw ShapeError("dense: input length " + shape_str(in) + " != " +
                                 std::to_string(d.in));
            return {static_cast<size_t>(d.out)};
        }
        case LayerKind::Conv2d: {
            size_t c, h, w;
            as_chw(in, c, h, w, "conv2d");
            if (c != static_cast<size_t>(d.in))
                throw ShapeError("conv2d: input channels " + std::to_string(c) + " != " +
                                 std::to_string(d.in));
            size_t k = static_cast<size_t>(d.kernel), s = static_cast<size_t>(d.stride);
            if (k < 1 || s < 1) throw ShapeError("conv2d: kernel and stride must be >= 1");
            if (h < k || w < k)
                throw ShapeError("conv2d: kernel larger than input " + shape_str(in));
            return {static_cast<size_t>(d.out), (h - k) / s + 1, (w - k) / s + 1};
        }
        case LayerKind::Relu:
            return in;
        case LayerKind::MaxPool2d: {
            size_t c, h, w;
            as_chw(in, c, h, w, "maxpool2d");
            size_t k = static_cast<size_t>(d.kernel);
            if (k < 1) throw ShapeError("maxpool2d: kernel must be >= 1");
            if (h < k || w < k)
                throw ShapeError("maxpool2d: kernel larger than input " + shape_str(in));
            if (in.size() == 2) return {h / k, w / k};
            return {c, h / k, w / k};
        }
        case LayerKind::Flatten:
            return {shape_numel(in)};
    }
    throw ShapeError("unknown layer kind");
}

void ensure_shape(Tensor& t, const std::vector<size_t>& shape) {
    if (t.shape() != shape) t = Tensor(shape);
}

// ---- layer kernels (single sample, fully deterministic loop order) ----

void dense_forward(const LayerDesc& d, const LayerParams& p, const double* x, double* y) {
    const int in = d.in, out = d.out;
    const double* w = p.w.data();
    const double* b = p.b.data();
    for (int o = 0; o < out; ++o) {
        double acc = b[o];
        const double* wr = w + static_cast<size_t>(o) * in;
        for (int i = 0; i < in; ++i) acc += wr[i] * x[i];
        y[o] = acc;
    }
}

void dense_backward(const LayerDesc& d, const LayerParams& p, const double* x,
                    const double* dy, LayerParams* gp, double* dx) {
    const int in = d.in, out = d.out;
    const double* w = p.w.data();
    if (dx) std::fill(dx, dx + in, 0.0);
    for (int o = 0; o < out; ++o) {
        const double g = dy[o];
        const double* wr = w + static_cast<size_t>(o) * in;
        if (gp) {
            double* gw = gp->w.data() + static_cast<size_t>(o) * in;
            for (int i = 0; i < in; ++i) gw[i] += g * x[i];
            gp->b[o] += g;
        }
        if (dx)
            for (int i = 0; i < in; ++i) dx[i] += g * wr[i];
    }
}

struct ConvDims {
    size_t c, h, w, o, oh, ow, k, s;
};

ConvDims conv_dims(const LayerDesc& d, const std::vector<size_t>& in_shape) {
    ConvDims cd;
    as_chw(in_shape, cd.c, cd.h, cd.w, "conv2d");
    cd.k = static_cast<size_t>(d.kernel);
    cd.s = static_cast<size_t>(d.stride);
    cd.o = static_cast<size_t>(d.out);
    cd.oh = (cd.h - cd.k) / cd.s + 1;
    cd.ow = (cd.w - cd.k) / cd.s + 1;
    return cd;
}

void conv_forward(const LayerDesc& d, const LayerParams& p,
                  const std::vector<size_t>& in_shape, const double* x, double* y) {
    const ConvDims cd = conv_dims(d, in_shape);
    const double* w = p.w.data();
    const double* b = p.b.data();
    for (size_t o = 0; o < cd.o; ++o) {
        for (size_t oy = 0; oy < cd.oh; ++oy) {
            for (size_t ox = 0; ox < cd.ow; ++ox) {
                double acc = b[o];
                for (size_t c = 0; c < cd.c; ++c) {
                    const double* wp = w + ((o * cd.c + c) * cd.k) * cd.k;
                    const double* xp = x + (c * cd.h + oy * cd.s) * cd.w + ox * cd.s;
                    for (size_t ky = 0; ky < cd.k; ++ky) {
                        const double* xr = xp + ky * cd.w;
                        const double* wr = wp + ky * cd.k;
                        for (size_t kx = 0; kx < cd.k; ++kx) acc += wr[kx] * xr[kx];
                    }
                }
                y[(o * cd.oh + oy) * cd.ow + ox] = acc;
            }
        }
    }
}

void conv_backward(const LayerDesc& d, const LayerParams& p,
                   const std::vector<size_t>& in_shape, const double* x,
                   const double* dy, LayerParams* gp, double* dx) {
    const ConvDims cd = conv_dims(d, in_shape);
    const double* w = p.w.data();
    if (dx) std::fill(dx, dx + cd.c * cd.h * cd.w, 0.0);
    for (size_t o = 0; o < cd.o; ++o) {
        for (size_t oy = 0; oy < cd.oh; ++oy) {
            for (size_t ox = 0; ox < cd.ow; ++ox) {
                const double g = dy[(o * cd.oh + oy) * cd.ow + ox];
                if (gp) gp->b[o] += g;
                for (size_t c = 0; c < cd.c; ++c) {
                    const size_t base = (c * cd.h + oy * cd.s) * cd.w + ox * cd.s;
                    const size_t wbase = ((o * cd.c + c) * cd.k) * cd.k;
                    for (size_t ky = 0; ky < cd.k; ++ky) {
                        for (size_t kx = 0; kx < cd.k; ++kx) {
                            const size_t xi = base + ky * cd.w + kx;
                            if (gp) gp->w[wbase + ky * cd.k + kx] += g * x[xi];
                            if (dx) dx[xi] += g * w[wbase + ky * cd.k + kx];
                        }
                    }
                }
            }
        }
    }
}

void pool_forward(const LayerDesc& d, const std::vector<size_t>& in_shape,
                  const double* x, double* y) {
    size_t c, h, w;
    as_chw(in_shape, c, h, w, "maxpool2d");
    const size_t k = static_cast<size_t>(d.kernel);
    const size_t oh = h / k, ow = w / k;
    for (size_t ch = 0; ch < c; ++ch) {
        const double* xc = x + ch * h * w;
        double* yc = y + ch * oh * ow;
        for (size_t oy = 0; oy < oh; ++oy) {
            for (size_t ox = 0; ox < ow; ++ox) {
                double m = xc[(oy * k) * w + ox * k];
                for (size_t ky = 0; ky < k; ++ky)
                    for (size_t kx = 0; kx < k; ++kx)
                        m = std::max(m, xc[(oy * k + ky) * w + ox * k + kx]);
                yc[oy * ow + ox] = m;
            }
        }
    }
}

// Gradient goes to the first maximal element in window scan order; the
// same rule on forward and backward keeps the pair consistent.
void pool_backward(const LayerDesc& d, const std::vector<size_t>& in_shape,
                   const double* x, const double* dy, double* dx) {
    size_t c, h, w;
    as_chw(in_shape, c, h, w, "maxpool2d");
    const size_t k = static_cast<size_t>(d.kernel);
    const size_t oh = h / k, ow = w / k;
    std::fill(dx, dx + c * h * w, 0.0);
    for (size_t ch = 0; ch < c; ++ch) {
        const double* xc = x + ch * h * w;
        double* dxc = dx + ch * h * w;
        const double* dyc = dy + ch * oh * ow;
        for (size_t oy = 0; oy < oh; ++oy) {
            for (size_t ox = 0; ox < ow; ++ox) {
                size_t best = (oy * k) * w + ox * k;
                double m = xc[best];
                for (size_t ky = 0; ky < k; ++ky) {
                    for (size_t kx = 0; kx < k; ++kx) {
                        size_t idx = (oy * k + ky) * w + ox * k + kx;
                        if (xc[idx] > m) {
                            m = xc[idx];
                            best = idx;
                        }
                    }
                }
                dxc[best] += dyc[oy * ow + ox];
            }
        }
    }
}

} // namespace

void ModelSpec::validate() const {
    if (layers.empty()) throw ShapeError("model has no layers");
    if (num_classes < 2) throw ShapeError("num_classes must be >= 2");
    if (input_shape.empty()) throw ShapeError("model input shape is empty");
    for (size_t d : input_shape)
        if (d == 0) throw ShapeError("model input shape has a zero dimension");
    auto shapes = layer_shapes();
    const auto& out = shapes.back();
    if (out.size() != 1 || out[0] != static_cast<size_t>(num_classes))
        throw ShapeError("final layer output " + shape_str(out) + " != [" +
                         std::to_string(num_classes) + "]");
}

std::vector<std::vector<size_t>> ModelSpec::layer_shapes() const {
    std::vector<std::vector<size_t>> shapes;
    shapes.reserve(layers.size());
    std::vector<size_t> cur = input_shape;
    for (const auto& l : layers) {
        cur = layer_output_shape(l, cur);
        shapes.push_back(cur);
    }
    return shapes;
}

uint64_t ModelSpec::fingerprint() const {
    uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](uint64_t v) { h = fnv1a(&v, sizeof v, h); };
    for (const auto& l : layers) {
        mix(static_cast<uint64_t>(l.kind));
        mix(static_cast<uint64_t>(l.in));
        mix(static_cast<uint64_t>(l.out));
        mix(static_cast<uint64_t>(l.kernel));
        mix(static_cast<uint64_t>(l.stride));
    }
    mix(static_cast<uint64_t>(num_classes));
    for (size_t d : input_shape) mix(d);
    return h;
}

ModelSpec small_cnn(const std::vector<size_t>& input_shape, int num_classes) {
    ModelSpec spec;
    spec.input_shape = input_shape;
    spec.num_classes = num_classes;
    size_t c = input_shape.size() == 3 ? input_shape[0] : 1;
    spec.layers = {
        LayerDesc::conv2d(static_cast<int>(c), 8, 3), LayerDesc::relu(),
        LayerDesc::maxpool2d(2),
        LayerDesc::conv2d(8, 16, 3),                  LayerDesc::relu(),
        LayerDesc::maxpool2d(2),
        LayerDesc::flatten(),
    };
    // Derive the dense input length from the shape chain so far.
    ModelSpec probe = spec;
    auto shapes = probe.layer_shapes();
    spec.layers.push_back(
        LayerDesc::dense(static_cast<int>(shapes.back()[0]), num_classes));
    spec.validate();
    return spec;
}

ModelSpec small_mlp(const std::vector<size_t>& input_shape, int num_classes) {
    ModelSpec spec;
    spec.input_shape = input_shape;
    spec.num_classes = num_classes;
    size_t n = shape_numel(input_shape);
    spec.layers = {
        LayerDesc::flatten(),
        LayerDesc::dense(static_cast<int>(n), 64),
        LayerDesc::relu(),
        LayerDesc::dense(64, num_classes),
    };
    spec.validate();
    return spec;
}

ModelSpec make_model(const std::string& arch, const std::vector<size_t>& input_shape,
                     int num_classes) {
    if (arch == "smallcnn") return small_cnn(input_shape, num_classes);
    if (arch == "smallmlp") return small_mlp(input_shape, num_classes);
    throw ParameterError("unknown model arch: " + arch + " (expected smallcnn|smallmlp)");
}

std::vector<Tensor*> ModelParams::tensors() {
    std::vector<Tensor*> out;
    for (auto& l : layers) {
        if (!l.w.empty()) out.push_back(&l.w);
        if (!l.b.empty()) out.push_back(&l.b);
    }
    return out;
}

std::vector<const Tensor*> ModelParams::tensors() const {
    std::vector<const Tensor*> out;
    for (const auto& l : layers) {
        if (!l.w.empty()) out.push_back(&l.w);
        if (!l.b.empty()) out.push_back(&l.b);
    }
    return out;
}

uint64_t ModelParams::content_fingerprint() const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const Tensor* t : tensors()) {
        for (size_t d : t->shape()) h = fnv1a(&d, sizeof d, h);
        h = fnv1a(t->data(), t->numel() * sizeof(double), h);
    }
    return h;
}

bool ModelParams::all_finite() const {
    for (const Tensor* t : tensors())
        if (!t->all_finite()) return false;
    return true;
}

namespace {

std::pair<Tensor, Tensor> param_shapes_for(const LayerDesc& d) {
    if (d.kind == LayerKind::Dense)
        return {Tensor({static_cast<size_t>(d.out), static_cast<size_t>(d.in)}),
                Tensor({static_cast<size_t>(d.out)})};
    // conv2d
    return {Tensor({static_cast<size_t>(d.out), static_cast<size_t>(d.in),
                    static_cast<size_t>(d.kernel), static_cast<size_t>(d.kernel)}),
            Tensor({static_cast<size_t>(d.out)})};
}

} // namespace

ModelParams zeros_like(const ModelSpec& spec) {
    ModelParams p;
    p.layers.resize(spec.layers.size());
    for (size_t i = 0; i < spec.layers.size(); ++i) {
        if (!spec.layers[i].has_params()) continue;
        auto [w, b] = param_shapes_for(spec.layers[i]);
        p.layers[i].w = std::move(w);
        p.layers[i].b = std::move(b);
    }
    return p;
}

ModelParams init_params(const ModelSpec& spec, uint64_t seed) {
    spec.validate();
    ModelParams p = zeros_like(spec);
    p.init_seed = seed;
    Rng rng(seed);
    for (size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& d = spec.layers[i];
        if (!d.has_params()) continue;
        double fan_in = d.kind == LayerKind::Dense
                            ? static_cast<double>(d.in)
                            : static_cast<double>(d.in) * d.kernel * d.kernel;
        double bound = std::sqrt(6.0 / fan_in);
        Tensor& w = p.layers[i].w;
        for (size_t j = 0; j < w.numel(); ++j) w[j] = rng.uniform(-bound, bound);
        // biases stay zero
    }
    return p;
}

std::vector<double> softmax(const double* logits, int n) {
    double m = logits[0];
    for (int i = 1; i < n; ++i) m = std::max(m, logits[i]);
    std::vector<double> p(n);
    double z = 0.0;
    for (int i = 0; i < n; ++i) {
        p[i] = std::exp(logits[i] - m);
        z += p[i];
    }
    for (int i = 0; i < n; ++i) p[i] /= z;
    return p;
}

int argmax(const double* values, int n) {
    int best = 0;
    for (int i = 1; i < n; ++i)
        if (values[i] > values[best]) best = i;
    return best;
}

namespace {

// Stable -log softmax(logits)[t].
double neg_log_prob(const double* logits, int n, int t) {
    double m = logits[0];
    for (int i = 1; i < n; ++i) m = std::max(m, logits[i]);
    double z = 0.0;
    for (int i = 0; i < n; ++i) z += std::exp(logits[i] - m);
    return std::log(z) - (logits[t] - m);
}

void check_target(int t, int n, const char* what) {
    if (t < 0 || t >= n)
        throw ParameterError(std::string(what) + ": class index " + std::to_string(t) +
                             " out of range [0," + std::to_string(n) + ")");
}

} // namespace

double loss_value(const Tensor& logits, const LossSpec& loss, int label) {
    if (logits.rank() != 1) throw ShapeError("loss_value: logits must be rank-1");
    const int n = static_cast<int>(logits.numel());
    switch (loss.form) {
        case LossSpec::Form::TargetLogit:
            check_target(loss.target_class, n, "TargetLogit");
            return -logits[loss.target_class];
        case LossSpec::Form::TargetLogProb:
            check_target(loss.target_class, n, "TargetLogProb");
            return neg_log_prob(logits.data(), n, loss.target_class);
        case LossSpec::Form::CrossEntropy:
            check_target(label, n, "CrossEntropy label");
            return neg_log_prob(logits.data(), n, label);
    }
    throw ParameterError("unknown loss form");
}

const Tensor& forward_sample(const ModelSpec& spec, const ModelParams& params,
                             const Tensor& x, Activations& acts) {
    if (x.shape() != spec.input_shape)
        throw ShapeError("forward: sample shape " + shape_str(x.shape()) +
                         " != model input " + shape_str(spec.input_shape));
    const auto shapes = spec.layer_shapes();
    acts.out.resize(spec.layers.size());
    const double* in = x.data();
    std::vector<size_t> in_shape = spec.input_shape;
    for (size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& d = spec.layers[i];
        ensure_shape(acts.out[i], shapes[i]);
        double* out = acts.out[i].data();
        switch (d.kind) {
            case LayerKind::Dense:
                dense_forward(d, params.layers[i], in, out);
                break;
            case LayerKind::Conv2d:
                conv_forward(d, params.layers[i], in_shape, in, out);
                break;
            case LayerKind::Relu: {
                const size_t n = acts.out[i].numel();
                for (size_t j = 0; j < n; ++j) out[j] = in[j] > 0.0 ? in[j] : 0.0;
                break;
            }
            case LayerKind::MaxPool2d:
                pool_forward(d, in_shape, in, out);
                break;
            case LayerKind::Flatten:
                std::memcpy(out, in, acts.out[i].numel() * sizeof(double));
                break;
        }
        in = out;
        in_shape = shapes[i];
    }
    return acts.out.back();
}

void backward_sample(const ModelSpec& spec, const ModelParams& params,
                     const Activations& acts, const Tensor& x,
                     const Tensor& dlogits, ModelParams* grad_accum, Tensor* dx) {
    const auto shapes = spec.layer_shapes();
    const size_t L = spec.layers.size();
    // dcur holds d(loss)/d(output of layer i) while walking backwards.
    thread_local Tensor dcur, dprev;
    dcur = dlogits;
    for (size_t ri = L; ri-- > 0;) {
        const auto& d = spec.layers[ri];
        const std::vector<size_t>& in_shape = ri == 0 ? spec.input_shape : shapes[ri - 1];
        const double* in = ri == 0 ? x.data() : acts.out[ri - 1].data();
        const bool want_dx = ri > 0 || dx != nullptr;
        ensure_shape(dprev, in_shape);
        switch (d.kind) {
            case LayerKind::Dense:
                dense_backward(d, params.layers[ri], in, dcur.data(),
                               grad_accum ? &grad_accum->layers[ri] : nullptr,
                               want_dx ? dprev.data() : nullptr);
                break;
            case LayerKind::Conv2d:
                conv_backward(d, params.layers[ri], in_shape, in, dcur.data(),
                              grad_accum ? &grad_accum->layers[ri] : nullptr,
                              want_dx ? dprev.data() : nullptr);
                break;
            case LayerKind::Relu: {
                const size_t n = dprev.numel();
                double* dp = dprev.data();
                const double* dc = dcur.data();
                for (size_t j = 0; j < n; ++j) dp[j] = in[j] > 0.0 ? dc[j] : 0.0;
                break;
            }
            case LayerKind::MaxPool2d:
                pool_backward(d, in_shape, in, dcur.data(), dprev.data());
                break;
            case LayerKind::Flatten:
                std::memcpy(dprev.data(), dcur.data(), dprev.numel() * sizeof(double));
                break;
        }
        if (!want_dx) return; // no parameters below the first layer
        std::swap(dcur, dprev);
    }
    if (dx) *dx = dcur;
}

namespace {

void check_batch(const ModelSpec& spec, const Tensor& batch) {
    const auto& bs = batch.shape();
    if (bs.size() != spec.input_shape.size() + 1 ||
        !std::equal(spec.input_shape.begin(), spec.input_shape.end(), bs.begin() + 1))
        throw ShapeError("batch shape " + shape_str(bs) + " != [B] + " +
                         shape_str(spec.input_shape));
}

Tensor batch_row(const Tensor& batch, const std::vector<size_t>& sample_shape, size_t b) {
    const size_t n = shape_numel(sample_shape);
    std::vector<double> v(batch.data() + b * n, batch.data() + (b + 1) * n);
    return Tensor::from_data(sample_shape, std::move(v));
}

} // namespace

Tensor forward(const ModelSpec& spec, const ModelParams& params, const Tensor& batch) {
    check_batch(spec, batch);
    const size_t B = batch.shape()[0];
    const size_t k = static_cast<size_t>(spec.num_classes);
    Tensor logits({B, k});
#pragma omp parallel for schedule(static)
    for (long b = 0; b < static_cast<long>(B); ++b) {
        thread_local Activations acts;
        Tensor x = batch_row(batch, spec.input_shape, static_cast<size_t>(b));
        const Tensor& out = forward_sample(spec, params, x, acts);
        std::memcpy(logits.data() + static_cast<size_t>(b) * k, out.data(),
                    k * sizeof(double));
    }
    return logits;
}

std::pair<double, int> batch_ce_backward(const ModelSpec& spec, const ModelParams& params,
                                         const Tensor& images,
                                         const std::vector<size_t>& rows,
                                         const std::vector<int>& labels,
                                         ModelParams& grad_out) {
    const size_t B = rows.size();
    if (B == 0) throw ParameterError("batch_ce_backward: empty batch");
    if (labels.size() != B) throw ParameterError("batch_ce_backward: labels/rows mismatch");
    const int k = spec.num_classes;

    std::vector<ModelParams> slots(B);
    std::vector<double> losses(B);
    std::vector<unsigned char> correct(B, 0);
    const double inv_b = 1.0 / static_cast<double>(B);

#pragma omp parallel for schedule(static)
    for (long i = 0; i < static_cast<long>(B); ++i) {
        thread_local Activations acts;
        const size_t s = static_cast<size_t>(i);
        Tensor x = batch_row(images, spec.input_shape, rows[s]);
        const Tensor& logits = forward_sample(spec, params, x, acts);
        const int label = labels[s];
        check_target(label, k, "train label");
        losses[s] = neg_log_prob(logits.data(), k, label);
        correct[s] = argmax(logits.data(), k) == label ? 1 : 0;
        auto probs = softmax(logits.data(), k);
        Tensor dlogits({static_cast<size_t>(k)});
        for (int c = 0; c < k; ++c)
            dlogits[c] = (probs[c] - (c == label ? 1.0 : 0.0)) * inv_b;
        slots[s] = zeros_like(spec);
        backward_sample(spec, params, acts, x, dlogits, &slots[s], nullptr);
    }

    // Fixed-order reduction: bits are independent of the thread count.
    grad_out = zeros_like(spec);
    auto out_tensors = grad_out.tensors();
    for (size_t s = 0; s < B; ++s) {
        auto st = slots[s].tensors();
        for (size_t t = 0; t < out_tensors.size(); ++t) out_tensors[t]->add(*st[t]);
    }
    double loss = 0.0;
    int ncorrect = 0;
    for (size_t s = 0; s < B; ++s) {
        loss += losses[s];
        ncorrect += correct[s];
    }
    return {loss * inv_b, ncorrect};
}

ModelParams backward_params(const ModelSpec& spec, const ModelParams& params,
                            const Tensor& batch, const std::vector<int>& labels) {
    check_batch(spec, batch);
    const size_t B = batch.shape()[0];
    if (labels.size() != B) throw ShapeError("backward_params: labels length != batch size");
    std::vector<size_t> rows(B);
    for (size_t i = 0; i < B; ++i) rows[i] = i;
    ModelParams grads;
    batch_ce_backward(spec, params, batch, rows, labels, grads);
    return grads;
}

double loss_and_input_grad(const ModelSpec& spec, const ModelParams& params,
                           const Tensor& x, const LossSpec& loss,
                           Activations& acts, Tensor& dx) {
    const Tensor& logits = forward_sample(spec, params, x, acts);
    const int k = static_cast<int>(logits.numel());
    const double value = loss_value(logits, loss);
    Tensor dlogits({static_cast<size_t>(k)});
    switch (loss.form) {
        case LossSpec::Form::TargetLogit:
            dlogits[loss.target_class] = -1.0;
            break;
        case LossSpec::Form::TargetLogProb: {
            auto probs = softmax(logits.data(), k);
            for (int c = 0; c < k; ++c)
                dlogits[c] = probs[c] - (c == loss.target_class ? 1.0 : 0.0);
            break;
        }
        case LossSpec::Form::CrossEntropy:
            throw ParameterError("input gradient needs a target-form loss");
    }
    backward_sample(spec, params, acts, x, dlogits, nullptr, &dx);
    return value;
}

Tensor input_gradient(const ModelSpec& spec, const ModelParams& params,
                      const Tensor& x, const LossSpec& loss) {
    Activations acts;
    Tensor dx;
    loss_and_input_grad(spec, params, x, loss, acts, dx);
    return dx;
}

// ---- checkpoint I/O ----

namespace {
constexpr char kParamsMagic[4] = {'D', 'C', 'M', '1'};
constexpr uint8_t kParamsVersion = 1;

void write_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t read_u64(std::istream& is, const char* what) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (is.gcount() != 8)
        throw FormatError(std::string("truncated checkpoint while reading ") + what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}
} // namespace

void save_params(const std::string& path, const ModelSpec& spec, const ModelParams& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open for writing: " + path);
    os.write(kParamsMagic, 4);
    os.put(static_cast<char>(kParamsVersion));
    write_u64(os, spec.fingerprint());
    for (const Tensor* t : params.tensors()) write_tensor(os, *t);
    if (!os) throw Error("write failed: " + path);
}

ModelParams load_params(const std::string& path, const ModelSpec& spec) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open for reading: " + path);
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, kParamsMagic, 4) != 0)
        throw FormatError("bad checkpoint magic (expected DCM1)");
    int version = is.get();
    if (version != kParamsVersion) throw FormatError("unsupported checkpoint version");
    uint64_t fp = read_u64(is, "spec fingerprint");
    if (fp != spec.fingerprint())
        throw FormatError("checkpoint was written for a different model spec");
    ModelParams p = zeros_like(spec);
    for (Tensor* t : p.tensors()) {
        Tensor loaded = read_tensor(is);
        if (loaded.shape() != t->shape())
            throw FormatError("checkpoint tensor shape mismatch");
        if (!loaded.all_finite())
            throw FormatError("checkpoint contains non-finite parameters");
        *t = std::move(loaded);
    }
    is.peek();
    if (!is.eof()) throw FormatError("trailing bytes after checkpoint payload");
    return p;
}

uint64_t checkpoint_fingerprint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open for reading: " + path);
    char buf[4096];
    uint64_t h = 0xcbf29ce484222325ull;
    while (is) {
        is.read(buf, sizeof buf);
        h = fnv1a(buf, static_cast<size_t>(is.gcount()), h);
    }
    return h;
}

} // namespace datacook
