#pragma once

// The crafting engine: per-sample gradient optimization against a frozen
// surrogate, bounded by the SSIM constraint with revert-and-stop, plus the
// SSIM-matched Gaussian-noise baseline and perturbation extraction.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "datacook/dataset.hpp"
#include "datacook/model.hpp"
#include "datacook/ssim.hpp"

namespace datacook {

enum class Direction { Adv, AntiAdv };
enum class TargetRule { Oracle, Pseudo, MaxP };
enum class CraftOptimizer { Adam, SgdMomentum };

const char* direction_name(Direction d);
const char* target_rule_name(TargetRule t);
const char* craft_optimizer_name(CraftOptimizer o);
const char* loss_form_name(LossSpec::Form f);

struct CraftConfig {
    Direction direction = Direction::AntiAdv;
    TargetRule target_rule = TargetRule::Pseudo;
    LossSpec::Form loss_form = LossSpec::Form::TargetLogit;
    CraftOptimizer optimizer = CraftOptimizer::Adam;
    double lr = 5e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double momentum = 0.9;
    int max_iters = 200;
    double ssim_threshold = 0.8; // tau
    SsimConfig ssim_cfg;
    double clamp_lo = 0.0;
    double clamp_hi = 1.0;
    uint64_t seed = 0;
    // MaxP re-evaluates the argmax target every iteration by default; this
    // switch freezes it at the initial prediction instead.
    bool max_p_frozen = false;

    void validate() const;
    uint64_t fingerprint() const;
};

enum class Termination { SsimBoundary, MaxIters };

const char* termination_name(Termination t);

struct CraftTrace {
    size_t sample_index = 0;
    int target_class = -1;
    int iterations_run = 0;
    // loss_history[i] is the loss at the iterate from which committed step i
    // was taken, so loss_history.size() == iterations_run and
    // loss_history.front() is the loss at the raw sample.
    std::vector<double> loss_history;
    double start_loss = 0.0; // loss at the raw sample (kept even at 0 steps)
    double final_ssim = 1.0;
    Termination terminated_by = Termination::MaxIters;
};

struct PseudoLabels {
    std::vector<int> labels;
    uint64_t source_model_fingerprint = 0;
};

// Frozen surrogate argmax on every raw sample (lowest-index tie-break).
PseudoLabels assign_pseudo_labels(const ModelSpec& spec, const ModelParams& params,
                                  const Dataset& dataset);

// One sample: step the pixels along (AntiAdv) or against (Adv) the descent
// direction of the target loss, clamp, and stop at the SSIM boundary by
// reverting to the last feasible iterate. The returned sample always has
// ssim(x_raw, x) >= tau. For target_rule == MaxP the target argument is the
// initial target and the running argmax steers subsequent iterations.
std::pair<Tensor, CraftTrace> craft_example(const ModelSpec& spec,
                                            const ModelParams& params,
                                            const Tensor& x_raw, int target,
                                            const CraftConfig& cfg);

// Whole dataset: targets per cfg.target_rule (Oracle = true labels, Pseudo =
// frozen surrogate argmax, MaxP = running argmax), labels carried over
// unchanged, sample-parallel with pre-assigned output slots.
std::pair<Dataset, std::vector<CraftTrace>> craft_dataset(const ModelSpec& spec,
                                                          const ModelParams& params,
                                                          const Dataset& dataset,
                                                          const CraftConfig& cfg);

// Gaussian baseline, SSIM-matched: x + N(0, sigma^2) clamped, halving sigma
// (at most 10 times) until ssim_batch_min >= threshold. final_sigma, when
// given, receives the sigma actually used.
Dataset random_noise_dataset(const Dataset& dataset, double sigma, uint64_t seed,
                             double threshold = 0.8, const SsimConfig& ssim_cfg = {},
                             double* final_sigma = nullptr);

// Re-centered differences (x^p - x^r) + 0.5 with labels carried over.
Dataset extract_perturbations(const Dataset& raw, const Dataset& protected_ds);

void write_traces_csv(const std::string& path, const std::vector<CraftTrace>& traces);

} // namespace datacook
