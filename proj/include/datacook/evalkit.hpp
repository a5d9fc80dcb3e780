#pragma once

// ACC, AUC, the four-cell {surrogate, protected} x {raw data, protected
// data} grid, and the derived copyright-protection (CP) and
// performance-preservation (PP) scores in percentage points.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "datacook/dataset.hpp"
#include "datacook/model.hpp"

namespace datacook {

// Fraction of exact matches; lengths must agree and be nonzero.
double accuracy(const std::vector<int>& pred_labels, const std::vector<int>& true_labels);

// Mann-Whitney statistic: over all (positive, negative) pairs the mean of
// [score_p > score_n], ties counted 0.5. Computed by midranks, which agrees
// with brute-force pairwise counting bit-for-bit. Labels must be 0/1 with
// both classes present.
double auc_binary(const std::vector<double>& scores, const std::vector<int>& labels);

// Macro one-vs-rest: mean over classes that appear of
// auc_binary(prob[:,c], label==c). prob_rows is [N, num_classes].
double auc_multiclass(const Tensor& prob_rows, const std::vector<int>& labels);

// cp = e_fp_dr - e_fr_dr, pp = -|e_fp_dp - e_fr_dr|, both in percentage
// points (x100). Inputs are plain [0,1] rates.
std::pair<double, double> compute_cp_pp(double e_fp_dr, double e_fr_dr, double e_fp_dp);

struct EvalCell {
    double acc = 0.0;
    double auc = 0.0;
};

struct EvalReport {
    // experiment identity for the CSV row
    std::string method = "AntiAdv"; // AntiAdv / Adv / Noise / Perturbation
    std::string direction = "AntiAdv";
    std::string target = "Pseudo";
    std::string loss = "Logit";
    std::string optimizer = "Adam";
    uint64_t seed = 0;

    EvalCell fr_dr, fp_dr, fp_dp, fr_dp; // model f^{r,p} x data D^{r,p}
    double cp_acc = 0.0, pp_acc = 0.0;
    double cp_auc = 0.0, pp_auc = 0.0;

    double epsilon_budget = 5.0; // reporting threshold for |pp_acc|
    uint64_t surrogate_fingerprint = 0;
    uint64_t protected_model_fingerprint = 0;
    uint64_t raw_data_fingerprint = 0;
    uint64_t protected_data_fingerprint = 0;

    bool exceeds_epsilon() const { return -pp_acc > epsilon_budget; }
};

// Evaluates both models on both test sets and derives CP/PP for ACC and AUC.
EvalReport build_report(const ModelSpec& spec, const ModelParams& surrogate,
                        const ModelParams& protected_model, const Dataset& raw_test,
                        const Dataset& protected_test, double epsilon_budget = 5.0);

// CSV schema (one header line, one row per report):
// method, direction, target, loss, optimizer, seed, acc_fr_dr, acc_fp_dr,
// acc_fp_dp, acc_fr_dp, auc_fr_dr, auc_fp_dr, auc_fp_dp, auc_fr_dp,
// cp_acc, pp_acc, cp_auc, pp_auc
void write_report_csv(const std::string& path, const std::vector<EvalReport>& reports);
std::vector<EvalReport> read_report_csv(const std::string& path);

// Human-readable aligned table of the four cells plus the derived scores.
std::string format_report_text(const EvalReport& report);

} // namespace datacook
