#include "datacook/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "datacook/errors.hpp"
#include "datacook/trainer.hpp"

namespace datacook {

double accuracy(const std::vector<int>& pred_labels, const std::vector<int>& true_labels) {
    if (pred_labels.empty()) throw ParameterError("accuracy on empty inputs");
    if (pred_labels.size() != true_labels.size())
        throw ParameterError("accuracy: prediction/label length mismatch");
    size_t hits = 0;
    for (size_t i = 0; i < pred_labels.size(); ++i)
        if (pred_labels[i] == true_labels[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(pred_labels.size());
}

double auc_binary(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw ParameterError("auc_binary: score/label length mismatch");
    if (scores.empty()) throw ParameterError("auc_binary on empty inputs");
    size_t pos = 0, neg = 0;
    for (int l : labels) {
        if (l == 1)
            ++pos;
        else if (l == 0)
            ++neg;
        else
            throw ParameterError("auc_binary: labels must be 0 or 1");
    }
    if (pos == 0 || neg == 0)
        throw UndefinedMetricError("auc_binary needs both classes present");

    // Midrank formulation: AUC = (R_pos - P(P+1)/2) / (P*N) where R_pos is
    // the positives' rank sum with tied scores sharing the average rank.
    // Every quantity below is an exact half-integer, so the result matches
    // per-pair counting (ties as 0.5) bit-for-bit.
    const size_t n = scores.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&scores](size_t a, size_t b) { return scores[a] < scores[b]; });
    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
        // ranks are 1-based: the tied block [i, j) shares (i+1 + j) / 2
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (size_t t = i; t < j; ++t)
            if (labels[idx[t]] == 1) rank_sum_pos += midrank;
        i = j;
    }
    const double p = static_cast<double>(pos);
    const double numer = rank_sum_pos - p * (p + 1.0) / 2.0;
    return numer / (p * static_cast<double>(neg));
}

double auc_multiclass(const Tensor& prob_rows, const std::vector<int>& labels) {
    if (prob_rows.rank() != 2) throw ShapeError("auc_multiclass: probs must be [N, classes]");
    const size_t n = prob_rows.shape()[0];
    const size_t k = prob_rows.shape()[1];
    if (labels.size() != n)
        throw ParameterError("auc_multiclass: probs/labels length mismatch");
    std::vector<size_t> counts(k, 0);
    for (int l : labels) {
        if (l < 0 || l >= static_cast<int>(k))
            throw ParameterError("auc_multiclass: label out of range");
        ++counts[l];
    }
    size_t present = 0;
    for (size_t c = 0; c < k; ++c)
        if (counts[c] > 0) ++present;
    if (present < 2)
        throw UndefinedMetricError("auc_multiclass needs >= 2 classes present");

    std::vector<double> scores(n);
    std::vector<int> binary(n);
    double total = 0.0;
    for (size_t c = 0; c < k; ++c) {
        if (counts[c] == 0) continue;
        for (size_t s = 0; s < n; ++s) {
            scores[s] = prob_rows[s * k + c];
            binary[s] = labels[s] == static_cast<int>(c) ? 1 : 0;
        }
        total += auc_binary(scores, binary);
    }
    return total / static_cast<double>(present);
}

std::pair<double, double> compute_cp_pp(double e_fp_dr, double e_fr_dr, double e_fp_dp) {
    for (double v : {e_fp_dr, e_fr_dr, e_fp_dp})
        if (!(v >= 0.0 && v <= 1.0))
            throw ParameterError("compute_cp_pp inputs must lie in [0,1]");
    const double cp = (e_fp_dr - e_fr_dr) * 100.0;
    const double pp = -std::abs(e_fp_dp - e_fr_dr) * 100.0;
    return {cp, pp};
}

namespace {

EvalCell eval_cell(const ModelSpec& spec, const ModelParams& params, const Dataset& data) {
    auto [labels, probs] = predict(spec, params, data);
    EvalCell cell;
    cell.acc = accuracy(labels, data.labels);
    cell.auc = auc_multiclass(probs, data.labels);
    return cell;
}

} // namespace

EvalReport build_report(const ModelSpec& spec, const ModelParams& surrogate,
                        const ModelParams& protected_model, const Dataset& raw_test,
                        const Dataset& protected_test, double epsilon_budget) {
    if (raw_test.size() != protected_test.size())
        throw ParameterError("build_report: test splits differ in length");
    EvalReport r;
    r.epsilon_budget = epsilon_budget;
    r.fr_dr = eval_cell(spec, surrogate, raw_test);
    r.fr_dp = eval_cell(spec, surrogate, protected_test);
    r.fp_dr = eval_cell(spec, protected_model, raw_test);
    r.fp_dp = eval_cell(spec, protected_model, protected_test);
    std::tie(r.cp_acc, r.pp_acc) = compute_cp_pp(r.fp_dr.acc, r.fr_dr.acc, r.fp_dp.acc);
    std::tie(r.cp_auc, r.pp_auc) = compute_cp_pp(r.fp_dr.auc, r.fr_dr.auc, r.fp_dp.auc);
    r.surrogate_fingerprint = surrogate.content_fingerprint();
    r.protected_model_fingerprint = protected_model.content_fingerprint();
    r.raw_data_fingerprint = raw_test.content_fingerprint();
    r.protected_data_fingerprint = protected_test.content_fingerprint();
    return r;
}

namespace {

constexpr const char* kReportHeader =
    "method,direction,target,loss,optimizer,seed,acc_fr_dr,acc_fp_dr,acc_fp_dp,"
    "acc_fr_dp,auc_fr_dr,auc_fp_dr,auc_fp_dp,auc_fr_dp,cp_acc,pp_acc,cp_auc,pp_auc";

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

void write_report_csv(const std::string& path, const std::vector<EvalReport>& reports) {
    std::ofstream os(path);
    if (!os) throw Error("cannot open for writing: " + path);
    os << kReportHeader << "\n";
    for (const auto& r : reports) {
        os << r.method << "," << r.direction << "," << r.target << "," << r.loss << ","
           << r.optimizer << "," << r.seed;
        for (double v : {r.fr_dr.acc, r.fp_dr.acc, r.fp_dp.acc, r.fr_dp.acc,
                         r.fr_dr.auc, r.fp_dr.auc, r.fp_dp.auc, r.fr_dp.auc,
                         r.cp_acc, r.pp_acc, r.cp_auc, r.pp_auc})
            os << "," << fmt(v);
        os << "\n";
    }
    if (!os) throw Error("write failed: " + path);
}

std::vector<EvalReport> read_report_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open for reading: " + path);
    std::string line;
    if (!std::getline(is, line) || line != kReportHeader)
        throw FormatError("report CSV header does not match the documented schema");
    std::vector<EvalReport> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 18)
            throw FormatError("report CSV row has " + std::to_string(cells.size()) +
                              " fields, expected 18");
        EvalReport r;
        r.method = cells[0];
        r.direction = cells[1];
        r.target = cells[2];
        r.loss = cells[3];
        r.optimizer = cells[4];
        try {
            r.seed = std::stoull(cells[5]);
            double v[12];
            for (int i = 0; i < 12; ++i) v[i] = std::stod(cells[6 + i]);
            r.fr_dr.acc = v[0];
            r.fp_dr.acc = v[1];
            r.fp_dp.acc = v[2];
            r.fr_dp.acc = v[3];
            r.fr_dr.auc = v[4];
            r.fp_dr.auc = v[5];
            r.fp_dp.auc = v[6];
            r.fr_dp.auc = v[7];
            r.cp_acc = v[8];
            r.pp_acc = v[9];
            r.cp_auc = v[10];
            r.pp_auc = v[11];
        } catch (const std::exception&) {
            throw FormatError("report CSV row has a malformed numeric field");
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::string format_report_text(const EvalReport& r) {
    char buf[512];
    std::string out;
    std::snprintf(buf, sizeof buf, "%s  direction=%s target=%s loss=%s optimizer=%s seed=%llu\n",
                  r.method.c_str(), r.direction.c_str(), r.target.c_str(), r.loss.c_str(),
                  r.optimizer.c_str(), static_cast<unsigned long long>(r.seed));
    out += buf;
    out += "              ACC        AUC\n";
    std::snprintf(buf, sizeof buf, "  f^r on D^r  %8.4f   %8.4f\n", r.fr_dr.acc, r.fr_dr.auc);
    out += buf;
    std::snprintf(buf, sizeof buf, "  f^r on D^p  %8.4f   %8.4f\n", r.fr_dp.acc, r.fr_dp.auc);
    out += buf;
    std::snprintf(buf, sizeof buf, "  f^p on D^r  %8.4f   %8.4f\n", r.fp_dr.acc, r.fp_dr.auc);
    out += buf;
    std::snprintf(buf, sizeof buf, "  f^p on D^p  %8.4f   %8.4f\n", r.fp_dp.acc, r.fp_dp.auc);
    out += buf;
    std::snprintf(buf, sizeof buf, "  CP %+7.2f pts (ACC)  %+7.2f pts (AUC)\n", r.cp_acc,
                  r.cp_auc);
    out += buf;
    std::snprintf(buf, sizeof buf, "  PP %+7.2f pts (ACC)  %+7.2f pts (AUC)\n", r.pp_acc,
                  r.pp_auc);
    out += buf;
    if (r.exceeds_epsilon()) {
        std::snprintf(buf, sizeof buf, "  warning: |pp_acc| exceeds the epsilon budget (%g pts)\n",
                      r.epsilon_budget);
        out += buf;
    }
    out += "  auc averaging: macro one-vs-rest\n";
    return out;
}

} // namespace datacook
