#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"

#include "datacook/errors.hpp"
#include "datacook/evalkit.hpp"
#include "datacook/reference.hpp"
#include "datacook/rng.hpp"

using namespace datacook;

namespace {

std::string temp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "datacook_tests";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

} // namespace

TEST_CASE("accuracy counts exact matches") {
    CHECK(accuracy({1, 0, 1, 1}, {1, 1, 1, 0}) == 0.5);
    CHECK(accuracy({2, 2}, {2, 2}) == 1.0);
    CHECK_THROWS_AS(accuracy({}, {}), ParameterError);
    CHECK_THROWS_AS(accuracy({1}, {1, 0}), ParameterError);
}

TEST_CASE("auc extremes and hand-worked ties") {
    // Perfect separation.
    CHECK(auc_binary({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == 1.0);
    // Perfectly wrong.
    CHECK(auc_binary({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1}) == 0.0);
    // All scores equal: every pair is a tie worth 0.5.
    CHECK(auc_binary({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}) == 0.5);

    // scores (0.2,0) (0.5,1) (0.5,0) (0.7,1): pairs are
    // (0.5>0.2)=1, (0.5=0.5)=0.5, (0.7>0.2)=1, (0.7>0.5)=1 -> 3.5/4
    CHECK(auc_binary({0.2, 0.5, 0.5, 0.7}, {0, 1, 0, 1}) == 3.5 / 4.0);

    CHECK_THROWS_AS(auc_binary({0.1, 0.2}, {1, 1}), UndefinedMetricError);
    CHECK_THROWS_AS(auc_binary({0.1, 0.2}, {0, 2}), ParameterError);
    CHECK_THROWS_AS(auc_binary({}, {}), ParameterError);
}

TEST_CASE("midrank auc equals pairwise counting exactly") {
    Rng rng(55);
    for (int fixture = 0; fixture < 100; ++fixture) {
        const size_t n = 2 + rng.next_below(199);
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        bool has0 = false, has1 = false;
        for (size_t i = 0; i < n; ++i) {
            // Coarse grid forces plenty of exact ties.
            scores[i] = static_cast<double>(rng.next_below(12)) / 11.0;
            labels[i] = static_cast<int>(rng.next_below(2));
            (labels[i] ? has1 : has0) = true;
        }
        if (!has0) labels[0] = 0;
        if (!has1) labels[n - 1] = 1;
        CHECK(auc_binary(scores, labels) == ref::auc_pairwise(scores, labels));
    }
}

TEST_CASE("macro multiclass auc averages per-class one-vs-rest exactly") {
    Rng rng(56);
    const size_t n = 90;
    const int k = 4;
    Tensor probs({n, static_cast<size_t>(k)});
    std::vector<int> labels(n);
    for (size_t i = 0; i < n; ++i) {
        labels[i] = static_cast<int>(rng.next_below(k));
        double row = 0.0;
        for (int c = 0; c < k; ++c) {
            probs[i * k + c] = 0.125 * static_cast<double>(1 + rng.next_below(8));
            row += probs[i * k + c];
        }
        for (int c = 0; c < k; ++c) probs[i * k + c] /= row;
    }

    double macro = 0.0;
    for (int c = 0; c < k; ++c) {
        std::vector<double> s(n);
        std::vector<int> onevr(n);
        for (size_t i = 0; i < n; ++i) {
            s[i] = probs[i * k + c];
            onevr[i] = labels[i] == c ? 1 : 0;
        }
        macro += ref::auc_pairwise(s, onevr);
    }
    macro /= k;
    CHECK(auc_multiclass(probs, labels) == macro);
}

TEST_CASE("multiclass auc skips absent classes") {
    // Class 2 never appears: the macro average covers classes 0 and 1 only.
    Tensor probs = Tensor::from_data(
        {4, 3}, {0.7, 0.2, 0.1, 0.6, 0.3, 0.1, 0.2, 0.7, 0.1, 0.3, 0.6, 0.1});
    std::vector<int> labels = {0, 0, 1, 1};

    std::vector<double> s0 = {0.7, 0.6, 0.2, 0.3};
    std::vector<double> s1 = {0.2, 0.3, 0.7, 0.6};
    const double expect = (ref::auc_pairwise(s0, {1, 1, 0, 0}) +
                           ref::auc_pairwise(s1, {0, 0, 1, 1})) /
                          2.0;
    CHECK(auc_multiclass(probs, labels) == expect);

    CHECK_THROWS_AS(auc_multiclass(probs, std::vector<int>{0, 0, 0, 0}),
                    UndefinedMetricError);
}

TEST_CASE("cp and pp derive from the error grid in percentage points") {
    // Worked example: errors e(f^p,D^r)=0.686, e(f^r,D^r)=0.744, e(f^p,D^p)=0.745
    // give cp = -5.8 and pp = -0.1.
    auto [cp, pp] = compute_cp_pp(0.686, 0.744, 0.745);
    CHECK(cp == doctest::Approx(-5.8).epsilon(1e-9));
    CHECK(pp == doctest::Approx(-0.1).epsilon(1e-9));

    auto [cp2, pp2] = compute_cp_pp(0.5, 0.5, 0.5);
    CHECK(cp2 == 0.0);
    CHECK(pp2 == 0.0);

    CHECK_THROWS_AS(compute_cp_pp(1.5, 0.5, 0.5), ParameterError);
    CHECK_THROWS_AS(compute_cp_pp(0.5, -0.1, 0.5), ParameterError);
}

TEST_CASE("epsilon budget flags only pp below the threshold") {
    EvalReport r;
    r.epsilon_budget = 5.0;
    r.pp_acc = -4.9;
    CHECK_FALSE(r.exceeds_epsilon());
    r.pp_acc = -5.0;
    CHECK_FALSE(r.exceeds_epsilon());
    r.pp_acc = -5.1;
    CHECK(r.exceeds_epsilon());
}

TEST_CASE("report csv round trips bitwise through 17 significant digits") {
    EvalReport a;
    a.method = "AntiAdv";
    a.direction = "AntiAdv";
    a.target = "Pseudo";
    a.loss = "Logit";
    a.optimizer = "Adam";
    a.seed = 42;
    a.fr_dr = {1.0 / 3.0, 0.987654321};
    a.fp_dr = {0.25, 0.5};
    a.fp_dp = {1e-17, 1.0 - 1e-16};
    a.fr_dp = {0.75, 0.5};
    a.cp_acc = -8.25;
    a.pp_acc = -0.001;
    a.cp_auc = -48.7654321;
    a.pp_auc = 0.0;

    EvalReport b = a;
    b.method = "Noise";
    b.direction = b.target = b.loss = b.optimizer = "-";
    b.seed = 7;

    const std::string path = temp_path("report.csv");
    write_report_csv(path, {a, b});

    {
        std::ifstream is(path);
        std::string header;
        std::getline(is, header);
        CHECK(header ==
              "method,direction,target,loss,optimizer,seed,acc_fr_dr,acc_fp_dr,"
              "acc_fp_dp,acc_fr_dp,auc_fr_dr,auc_fp_dr,auc_fp_dp,auc_fr_dp,"
              "cp_acc,pp_acc,cp_auc,pp_auc");
    }

    auto back = read_report_csv(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].method == "AntiAdv");
    CHECK(back[0].seed == 42);
    CHECK(back[0].fr_dr.acc == a.fr_dr.acc);
    CHECK(back[0].fp_dp.acc == a.fp_dp.acc);
    CHECK(back[0].fp_dp.auc == a.fp_dp.auc);
    CHECK(back[0].cp_auc == a.cp_auc);
    CHECK(back[1].method == "Noise");
    CHECK(back[1].direction == "-");

    // Header tampering must be rejected.
    {
        std::ofstream os(path);
        os << "method,direction\nAntiAdv,AntiAdv\n";
    }
    CHECK_THROWS_AS(read_report_csv(path), FormatError);
}

TEST_CASE("text report shows the grid and the averaging rule") {
    EvalReport r;
    r.fr_dr = {0.9, 0.95};
    r.fp_dr = {0.7, 0.8};
    r.fp_dp = {0.88, 0.93};
    r.fr_dp = {0.85, 0.9};
    r.cp_acc = -20.0;
    r.pp_acc = -2.0;

    const std::string text = format_report_text(r);
    CHECK(text.find("f^r on D^r") != std::string::npos);
    CHECK(text.find("f^p on D^p") != std::string::npos);
    CHECK(text.find("macro one-vs-rest") != std::string::npos);
    CHECK(text.find("warning") == std::string::npos);

    r.pp_acc = -7.5;
    const std::string warned = format_report_text(r);
    CHECK(warned.find("warning") != std::string::npos);
}
