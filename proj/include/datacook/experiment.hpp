#pragma once

// End-to-end orchestration: configuration, the full train/cook/train/eval
// pipeline, and the ablation sweep over the crafting grid.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "datacook/cook.hpp"
#include "datacook/dataset.hpp"
#include "datacook/evalkit.hpp"
#include "datacook/trainer.hpp"

namespace datacook {

struct ExperimentConfig {
    // [data]
    bool synthetic = true;
    SynthRecipe recipe;
    std::string train_path; // used when synthetic == false
    std::string test_path;

    // [model]
    std::string arch = "smallcnn";

    // [train] — shared by the surrogate and the protected model
    TrainConfig train_cfg;

    // [craft]
    CraftConfig craft;

    // [run]
    std::string method = "antiadv"; // antiadv | adv | noise
    // Starting sigma for the noise baseline, picked to match the RMS of the
    // crafted perturbations at the default recipe; it is halved further if
    // the SSIM floor demands it.
    double noise_sigma = 0.12;
    uint64_t master_seed = 42;
    std::string out_dir = "out";
    bool perturbation_arm = false;
    double epsilon = 5.0;

    void validate() const;
};

// Flat key=value configuration with [data]/[model]/[train]/[craft]/[run]
// sections; '#' and ';' start comments. Unknown sections or keys are
// configuration errors. The file overlays the defaults.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);
std::string default_config_text();

// Seed streams derived from the master seed, one per pipeline stage.
enum class SeedStream : uint64_t {
    Data = 1,
    SurrogateInit = 2,
    SurrogateShuffle = 3,
    Craft = 4,
    ProtectedInit = 5,
    ProtectedShuffle = 6,
    NoiseTrain = 7,
    NoiseTest = 8,
    PerturbationInit = 9,
    PerturbationShuffle = 10,
};
uint64_t stage_seed(uint64_t master_seed, SeedStream stream);

struct RunResult {
    EvalReport report;
    std::optional<EvalReport> perturbation_report;
    double surrogate_train_acc = 0.0;
    double noise_sigma_used = 0.0;  // only for method == noise
    double min_ssim = 1.0;          // over both protected splits
    bool recipe_warning = false;
    std::string report_csv_path;
    std::string report_text_path;
};

// Full protocol: train f^r on raw train, craft (or noise) both splits with
// the frozen surrogate, train f^p from a fresh init on the protected train
// split, evaluate the four cells on the test split, and optionally run the
// perturbation arm. All artifacts are written under cfg.out_dir with the
// master seed in every filename.
RunResult run_experiment(const ExperimentConfig& cfg);

// Sweep 2 directions x 3 targets x 2 losses x 2 optimizers (24 rows) plus
// the noise baseline row, sharing one raw corpus and one surrogate; writes
// a single CSV and returns the rows.
std::vector<EvalReport> ablate(const ExperimentConfig& cfg);

} // namespace datacook
