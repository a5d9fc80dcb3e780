#include "datacook/cook.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "datacook/errors.hpp"
#include "datacook/optim.hpp"
#include "datacook/rng.hpp"

namespace datacook {

const char* direction_name(Direction d) {
    return d == Direction::Adv ? "Adv" : "AntiAdv";
}

const char* target_rule_name(TargetRule t) {
    switch (t) {
        case TargetRule::Oracle: return "Oracle";
        case TargetRule::Pseudo: return "Pseudo";
        case TargetRule::MaxP: return "MaxP";
    }
    return "unknown";
}

const char* craft_optimizer_name(CraftOptimizer o) {
    return o == CraftOptimizer::Adam ? "Adam" : "SGD-M";
}

const char* loss_form_name(LossSpec::Form f) {
    switch (f) {
        case LossSpec::Form::TargetLogit: return "Logit";
        case LossSpec::Form::TargetLogProb: return "LogP";
        case LossSpec::Form::CrossEntropy: return "CE";
    }
    return "unknown";
}

const char* termination_name(Termination t) {
    return t == Termination::SsimBoundary ? "SsimBoundary" : "MaxIters";
}

void CraftConfig::validate() const {
    if (!(ssim_threshold > 0.0) || ssim_threshold > 1.0)
        throw ParameterError("craft ssim_threshold must satisfy 0 < tau <= 1");
    if (!(lr > 0.0)) throw ParameterError("craft lr must be > 0");
    if (max_iters < 1) throw ParameterError("craft max_iters must be >= 1");
    if (loss_form == LossSpec::Form::CrossEntropy)
        throw ParameterError("crafting uses a target-form loss (Logit or LogP)");
    if (!(clamp_lo < clamp_hi)) throw ParameterError("craft clamp range is empty");
    if (momentum < 0.0 || momentum >= 1.0)
        throw ParameterError("craft momentum must be in [0, 1)");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 &&
          adam_beta2 < 1.0 && adam_eps > 0.0))
        throw ParameterError("craft Adam parameters out of range");
    ssim_cfg.validate();
}

uint64_t CraftConfig::fingerprint() const {
    uint64_t h = 0xcbf29ce484222325ull;
    auto mix_i = [&h](int64_t v) { h = fnv1a(&v, sizeof v, h); };
    auto mix_d = [&h](double v) { h = fnv1a(&v, sizeof v, h); };
    mix_i(static_cast<int64_t>(direction));
    mix_i(static_cast<int64_t>(target_rule));
    mix_i(static_cast<int64_t>(loss_form));
    mix_i(static_cast<int64_t>(optimizer));
    mix_d(lr);
    mix_d(adam_beta1);
    mix_d(adam_beta2);
    mix_d(adam_eps);
    mix_d(momentum);
    mix_i(max_iters);
    mix_d(ssim_threshold);
    mix_i(ssim_cfg.window);
    mix_d(ssim_cfg.k1);
    mix_d(ssim_cfg.k2);
    mix_d(ssim_cfg.dynamic_range);
    mix_i(static_cast<int64_t>(ssim_cfg.mode));
    mix_d(clamp_lo);
    mix_d(clamp_hi);
    // seed deliberately left out: crafting draws no random numbers, so the
    // fingerprint covers exactly the fields that determine the output bits.
    mix_i(max_p_frozen ? 1 : 0);
    return h;
}

PseudoLabels assign_pseudo_labels(const ModelSpec& spec, const ModelParams& params,
                                  const Dataset& dataset) {
    if (dataset.sample_shape() != spec.input_shape)
        throw ShapeError("assign_pseudo_labels: dataset samples do not match model input");
    const Tensor logits = forward(spec, params, dataset.images);
    PseudoLabels out;
    out.labels.resize(dataset.size());
    for (size_t i = 0; i < dataset.size(); ++i)
        out.labels[i] = argmax(logits.data() + i * spec.num_classes, spec.num_classes);
    out.source_model_fingerprint = params.content_fingerprint();
    return out;
}

namespace {

// Stateful input-space stepper shared between Adam and SGD-M so the craft
// loop stays optimizer-agnostic. State is fresh per sample.
struct InputStepper {
    CraftOptimizer kind;
    Adam adam;
    SgdMomentum sgdm;
    Tensor update;

    explicit InputStepper(const CraftConfig& cfg)
        : kind(cfg.optimizer),
          adam(cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps),
          sgdm(cfg.lr, cfg.momentum) {}

    const Tensor& step(const Tensor& grad) {
        if (kind == CraftOptimizer::Adam)
            adam.step(grad, update);
        else
            sgdm.step(grad, update);
        return update;
    }
};

} // namespace

std::pair<Tensor, CraftTrace> craft_example(const ModelSpec& spec,
                                            const ModelParams& params,
                                            const Tensor& x_raw, int target,
                                            const CraftConfig& cfg) {
    cfg.validate();
    if (x_raw.shape() != spec.input_shape)
        throw ShapeError("craft_example: sample does not match model input shape");
    if (target < 0 || target >= spec.num_classes)
        throw ParameterError("craft_example: target class out of range");

    CraftTrace trace;
    trace.target_class = target;
    trace.loss_history.reserve(cfg.max_iters);

    Tensor x = x_raw;          // current feasible iterate
    InputStepper stepper(cfg);
    Activations acts;
    Tensor dx;
    Tensor candidate;
    const bool descend = cfg.direction == Direction::AntiAdv;
    const bool running_target =
        cfg.target_rule == TargetRule::MaxP && !cfg.max_p_frozen;

    for (int iter = 0; iter < cfg.max_iters; ++iter) {
        int step_target = target;
        if (running_target) {
            const Tensor& logits = forward_sample(spec, params, x, acts);
            step_target = argmax(logits.data(), spec.num_classes);
        }
        const LossSpec loss = cfg.loss_form == LossSpec::Form::TargetLogit
                                  ? LossSpec::target_logit(step_target)
                                  : LossSpec::target_log_prob(step_target);
        const double loss_now = loss_and_input_grad(spec, params, x, loss, acts, dx);
        if (!std::isfinite(loss_now) || !dx.all_finite())
            throw NumericError("non-finite crafting gradient");
        if (iter == 0) trace.start_loss = loss_now;

        const Tensor& update = stepper.step(dx);
        candidate = x;
        if (descend)
            candidate.sub(update); // minimize the loss (Eq. 5 direction)
        else
            candidate.add(update); // maximize it (Eq. 4 direction)
        candidate.clamp(cfg.clamp_lo, cfg.clamp_hi);

        const double s = ssim(x_raw, candidate, cfg.ssim_cfg);
        if (s < cfg.ssim_threshold) {
            // revert to the last feasible iterate and stop
            trace.terminated_by = Termination::SsimBoundary;
            return {std::move(x), std::move(trace)};
        }
        std::swap(x, candidate);
        trace.loss_history.push_back(loss_now);
        trace.iterations_run += 1;
        trace.final_ssim = s;
    }
    trace.terminated_by = Termination::MaxIters;
    return {std::move(x), std::move(trace)};
}

std::pair<Dataset, std::vector<CraftTrace>> craft_dataset(const ModelSpec& spec,
                                                          const ModelParams& params,
                                                          const Dataset& dataset,
                                                          const CraftConfig& cfg) {
    cfg.validate();
    dataset.validate();
    if (dataset.sample_shape() != spec.input_shape)
        throw ShapeError("craft_dataset: dataset samples do not match model input");
    if (dataset.num_classes != spec.num_classes)
        throw ShapeError("craft_dataset: dataset classes do not match model classes");

    std::vector<int> targets;
    switch (cfg.target_rule) {
        case TargetRule::Oracle:
            targets = dataset.labels;
            break;
        case TargetRule::Pseudo:
        case TargetRule::MaxP:
            // MaxP starts from the initial prediction and re-evaluates inside
            // craft_example; the trace records the initial target.
            targets = assign_pseudo_labels(spec, params, dataset).labels;
            break;
    }

    Dataset protected_ds = dataset;
    protected_ds.provenance = Provenance::Cooked;
    uint64_t fp = cfg.fingerprint();
    const uint64_t model_fp = params.content_fingerprint();
    protected_ds.config_fingerprint = fnv1a(&model_fp, sizeof model_fp, fp);

    const size_t n = dataset.size();
    std::vector<CraftTrace> traces(n);
#pragma omp parallel for schedule(dynamic, 8)
    for (long i = 0; i < static_cast<long>(n); ++i) {
        const size_t s = static_cast<size_t>(i);
        auto [xp, trace] = craft_example(spec, params, dataset.sample(s), targets[s], cfg);
        trace.sample_index = s;
        protected_ds.set_sample(s, xp);
        traces[s] = std::move(trace);
    }

    const double min_ssim = ssim_batch_min(dataset, protected_ds, cfg.ssim_cfg);
    if (min_ssim < cfg.ssim_threshold)
        throw ConstraintError("cooked dataset violates the SSIM floor: min " +
                              std::to_string(min_ssim));
    protected_ds.validate();
    return {std::move(protected_ds), std::move(traces)};
}

Dataset random_noise_dataset(const Dataset& dataset, double sigma, uint64_t seed,
                             double threshold, const SsimConfig& ssim_cfg,
                             double* final_sigma) {
    dataset.validate();
    if (sigma < 0.0) throw ParameterError("noise sigma must be >= 0");
    ssim_cfg.validate();

    // One standard-normal field per seed; halving only rescales it so every
    // attempt stays a pure function of (dataset, sigma, seed).
    Rng rng(seed);
    Tensor z = gaussian_tensor(rng, dataset.images.shape(), 1.0);

    Dataset out = dataset;
    out.provenance = Provenance::Noise;
    double cur = sigma;
    for (int attempt = 0; attempt <= 10; ++attempt) {
        for (size_t i = 0; i < out.images.numel(); ++i)
            out.images[i] = std::clamp(dataset.images[i] + cur * z[i], 0.0, 1.0);
        const double min_ssim = ssim_batch_min(dataset.images, out.images, ssim_cfg);
        if (min_ssim >= threshold) {
            out.config_fingerprint = 0;
            std::memcpy(&out.config_fingerprint, &cur, sizeof cur);
            if (final_sigma) *final_sigma = cur;
            out.validate();
            return out;
        }
        cur *= 0.5;
    }
    throw ConstraintError("noise baseline could not reach the SSIM threshold "
                          "after 10 halvings of sigma");
}

Dataset extract_perturbations(const Dataset& raw, const Dataset& protected_ds) {
    if (raw.size() != protected_ds.size())
        throw ParameterError("extract_perturbations: datasets differ in length");
    if (raw.images.shape() != protected_ds.images.shape())
        throw ShapeError("extract_perturbations: datasets differ in shape");
    Dataset out = protected_ds;
    out.provenance = Provenance::Perturbation;
    for (size_t i = 0; i < out.images.numel(); ++i)
        out.images[i] = (protected_ds.images[i] - raw.images[i]) + 0.5;
    const uint64_t a = raw.content_fingerprint();
    const uint64_t b = protected_ds.content_fingerprint();
    out.config_fingerprint = fnv1a(&b, sizeof b, fnv1a(&a, sizeof a));
    out.validate();
    return out;
}

void write_traces_csv(const std::string& path, const std::vector<CraftTrace>& traces) {
    std::ofstream os(path);
    if (!os) throw Error("cannot open for writing: " + path);
    os << "sample_index,target_class,iterations_run,final_ssim,terminated_by,"
          "first_loss,last_loss\n";
    char buf[64];
    for (const auto& t : traces) {
        os << t.sample_index << "," << t.target_class << "," << t.iterations_run << ",";
        std::snprintf(buf, sizeof buf, "%.17g", t.final_ssim);
        os << buf << "," << termination_name(t.terminated_by) << ",";
        const double first = t.loss_history.empty() ? t.start_loss : t.loss_history.front();
        const double last = t.loss_history.empty() ? t.start_loss : t.loss_history.back();
        std::snprintf(buf, sizeof buf, "%.17g", first);
        os << buf << ",";
        std::snprintf(buf, sizeof buf, "%.17g", last);
        os << buf << "\n";
    }
    if (!os) throw Error("write failed: " + path);
}

} // namespace datacook
