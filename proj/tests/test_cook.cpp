#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

#include "datacook/cook.hpp"
#include "datacook/dataset.hpp"
#include "datacook/errors.hpp"
#include "datacook/model.hpp"
#include "datacook/optim.hpp"
#include "datacook/reference.hpp"
#include "datacook/rng.hpp"
#include "datacook/trainer.hpp"

using namespace datacook;

namespace {

std::string temp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "datacook_tests";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

// Small trained surrogate shared by the crafting tests: confident enough to
// give informative gradients, cheap enough for a unit test.
struct Fixture {
    SynthResult synth;
    ModelSpec spec;
    ModelParams params;

    Fixture() {
        SynthRecipe recipe;
        recipe.per_class_train = 60;
        recipe.per_class_test = 15;
        recipe.side = 12;
        synth = synth_dataset(recipe, 77);
        spec = make_model("smallmlp", synth.train.sample_shape(),
                          synth.train.num_classes);
        TrainConfig tc;
        tc.epochs = 8;
        tc.shuffle_seed = 5;
        params = train(spec, init_params(spec, 4), synth.train, tc).first;
    }
};

const Fixture& fixture() {
    static Fixture f;
    return f;
}

double target_prob(const ModelSpec& spec, const ModelParams& params, const Tensor& x,
                   int target) {
    Activations acts;
    const Tensor& logits = forward_sample(spec, params, x, acts);
    return softmax(logits.data(), static_cast<int>(logits.numel()))[target];
}

} // namespace

TEST_CASE("adam matches the scalar reference bitwise") {
    Rng rng(10);
    Adam opt(0.01, 0.9, 0.999, 1e-8);
    ref::ScalarAdam a0(0.01), a1(0.01), a2(0.01);
    ref::ScalarAdam* scalars[3] = {&a0, &a1, &a2};

    Tensor grad({3});
    Tensor update({3});
    for (int step = 0; step < 25; ++step) {
        for (size_t i = 0; i < 3; ++i) grad[i] = rng.normal();
        opt.step(grad, update);
        for (size_t i = 0; i < 3; ++i) CHECK(update[i] == scalars[i]->step(grad[i]));
    }
}

TEST_CASE("sgd momentum matches the scalar recurrence bitwise") {
    Rng rng(11);
    SgdMomentum opt(0.05, 0.9);
    double v[2] = {0.0, 0.0};

    Tensor grad({2});
    Tensor update({2});
    for (int step = 0; step < 25; ++step) {
        for (size_t i = 0; i < 2; ++i) grad[i] = rng.normal();
        opt.step(grad, update);
        for (size_t i = 0; i < 2; ++i) {
            v[i] = 0.9 * v[i] + grad[i];
            CHECK(update[i] == 0.05 * v[i]);
        }
    }
}

TEST_CASE("craft config validation") {
    CraftConfig cfg;
    CHECK_NOTHROW(cfg.validate());

    CraftConfig bad = cfg;
    bad.max_iters = 0;
    CHECK_THROWS_AS(bad.validate(), ParameterError);

    bad = cfg;
    bad.loss_form = LossSpec::Form::CrossEntropy;
    CHECK_THROWS_AS(bad.validate(), ParameterError);

    bad = cfg;
    bad.ssim_threshold = 1.5;
    CHECK_THROWS_AS(bad.validate(), ParameterError);

    bad = cfg;
    bad.lr = 0.0;
    CHECK_THROWS_AS(bad.validate(), ParameterError);

    bad = cfg;
    bad.clamp_lo = 1.0;
    bad.clamp_hi = 0.0;
    CHECK_THROWS_AS(bad.validate(), ParameterError);
}

TEST_CASE("craft config fingerprint covers outputs, not the seed") {
    CraftConfig a;
    CraftConfig b = a;
    b.seed = 999; // crafting draws no randomness, so the seed is not identity
    CHECK(a.fingerprint() == b.fingerprint());

    b = a;
    b.direction = Direction::Adv;
    CHECK(a.fingerprint() != b.fingerprint());
    b = a;
    b.lr = 1e-2;
    CHECK(a.fingerprint() != b.fingerprint());
    b = a;
    b.target_rule = TargetRule::Oracle;
    CHECK(a.fingerprint() != b.fingerprint());
    b = a;
    b.max_iters = 100;
    CHECK(a.fingerprint() != b.fingerprint());
}

TEST_CASE("pseudo labels are the frozen surrogate argmax") {
    const Fixture& f = fixture();
    PseudoLabels pl = assign_pseudo_labels(f.spec, f.params, f.synth.train);
    REQUIRE(pl.labels.size() == f.synth.train.size());
    CHECK(pl.source_model_fingerprint == f.params.content_fingerprint());

    Tensor logits = forward(f.spec, f.params, f.synth.train.images);
    const int k = f.synth.train.num_classes;
    for (size_t i = 0; i < pl.labels.size(); ++i)
        CHECK(pl.labels[i] == argmax(logits.data() + i * k, k));
}

TEST_CASE("craft_example respects the similarity floor and pixel range") {
    const Fixture& f = fixture();
    CraftConfig cfg;
    cfg.ssim_cfg.window = 5;
    cfg.max_iters = 60;

    for (size_t i = 0; i < 6; ++i) {
        Tensor raw = f.synth.train.sample(i);
        const int target = f.synth.train.labels[i];
        auto [cooked, trace] = craft_example(f.spec, f.params, raw, target, cfg);

        CHECK(ssim(raw, cooked, cfg.ssim_cfg) >= cfg.ssim_threshold);
        for (size_t j = 0; j < cooked.numel(); ++j) {
            CHECK(cooked[j] >= 0.0);
            CHECK(cooked[j] <= 1.0);
        }
        CHECK(trace.sample_index == 0); // set by craft_dataset, not here
        CHECK(trace.target_class == target);
        CHECK(trace.loss_history.size() ==
              static_cast<size_t>(trace.iterations_run));
        if (trace.iterations_run > 0)
            CHECK(trace.loss_history.front() == trace.start_loss);
        CHECK(trace.final_ssim >= cfg.ssim_threshold);
    }
}

TEST_CASE("a step that would cross the boundary reverts to the raw sample") {
    const Fixture& f = fixture();
    CraftConfig cfg;
    cfg.ssim_cfg.window = 5;
    cfg.optimizer = CraftOptimizer::SgdMomentum;
    cfg.lr = 50.0; // one step destroys the image
    cfg.max_iters = 10;

    Tensor raw = f.synth.train.sample(0);
    auto [cooked, trace] = craft_example(f.spec, f.params, raw, 0, cfg);
    CHECK(trace.terminated_by == Termination::SsimBoundary);
    CHECK(trace.iterations_run == 0);
    CHECK(trace.final_ssim == 1.0);
    CHECK(std::memcmp(cooked.data(), raw.data(), raw.numel() * sizeof(double)) == 0);
}

TEST_CASE("anti-adversarial crafting raises the target probability") {
    const Fixture& f = fixture();
    CraftConfig cfg;
    cfg.ssim_cfg.window = 5;
    cfg.loss_form = LossSpec::Form::TargetLogProb;
    cfg.max_iters = 40;

    int raised = 0, lowered = 0;
    const int n = 10;
    for (int i = 0; i < n; ++i) {
        Tensor raw = f.synth.train.sample(static_cast<size_t>(i));
        const int target = f.synth.train.labels[static_cast<size_t>(i)];
        const double before = target_prob(f.spec, f.params, raw, target);

        auto [up, tr_up] = craft_example(f.spec, f.params, raw, target, cfg);
        if (target_prob(f.spec, f.params, up, target) >= before) ++raised;

        CraftConfig adv = cfg;
        adv.direction = Direction::Adv;
        auto [down, tr_down] = craft_example(f.spec, f.params, raw, target, adv);
        if (target_prob(f.spec, f.params, down, target) <= before) ++lowered;
    }
    CHECK(raised == n);
    CHECK(lowered >= n - 1);
}

TEST_CASE("craft_dataset matches a serial loop of craft_example") {
    const Fixture& f = fixture();
    CraftConfig cfg;
    cfg.ssim_cfg.window = 5;
    cfg.max_iters = 15;
    cfg.target_rule = TargetRule::Oracle;

    Dataset subset = f.synth.test;
    auto [cooked, traces] = craft_dataset(f.spec, f.params, subset, cfg);
    REQUIRE(cooked.size() == subset.size());
    REQUIRE(traces.size() == subset.size());
    CHECK(cooked.provenance == Provenance::Cooked);
    CHECK(cooked.labels == subset.labels);

    const uint64_t model_fp = f.params.content_fingerprint();
    CHECK(cooked.config_fingerprint ==
          fnv1a(&model_fp, sizeof model_fp, cfg.fingerprint()));

    for (size_t i = 0; i < subset.size(); ++i) {
        auto [one, tr] = craft_example(f.spec, f.params, subset.sample(i),
                                       subset.labels[i], cfg);
        Tensor got = cooked.sample(i);
        CHECK(std::memcmp(one.data(), got.data(), one.numel() * sizeof(double)) == 0);
        CHECK(traces[i].sample_index == i);
        CHECK(traces[i].iterations_run == tr.iterations_run);
        CHECK(traces[i].terminated_by == tr.terminated_by);
    }
}

TEST_CASE("max-p retargets while the frozen switch pins the first target") {
    const Fixture& f = fixture();
    CraftConfig cfg;
    cfg.ssim_cfg.window = 5;
    cfg.target_rule = TargetRule::MaxP;
    cfg.max_iters = 20;

    // With anti-adversarial steps the argmax stays put, so frozen vs running
    // targets agree; the switch must not change the result here.
    CraftConfig frozen = cfg;
    frozen.max_p_frozen = true;
    CHECK(cfg.fingerprint() != frozen.fingerprint());

    auto [a, t1] = craft_dataset(f.spec, f.params, f.synth.test, cfg);
    auto [b, t2] = craft_dataset(f.spec, f.params, f.synth.test, frozen);
    CHECK(a.content_fingerprint() == b.content_fingerprint());
}

TEST_CASE("noise baseline holds the ssim floor and is reproducible") {
    const Fixture& f = fixture();
    SsimConfig scfg;
    scfg.window = 5;

    double used = 0.0;
    Dataset noised = random_noise_dataset(f.synth.train, 0.25, 123, 0.8, scfg, &used);
    CHECK(noised.provenance == Provenance::Noise);
    CHECK(noised.labels == f.synth.train.labels);
    CHECK(used <= 0.25);
    CHECK(ssim_batch_min(f.synth.train, noised, scfg) >= 0.8);

    uint64_t bits = 0;
    std::memcpy(&bits, &used, sizeof bits);
    CHECK(noised.config_fingerprint == bits);

    Dataset again = random_noise_dataset(f.synth.train, 0.25, 123, 0.8, scfg);
    CHECK(again.content_fingerprint() == noised.content_fingerprint());

    // A large requested sigma halves down to something feasible.
    double big_used = 0.0;
    Dataset tamed =
        random_noise_dataset(f.synth.train, 8.0, 9, 0.8, scfg, &big_used);
    CHECK(big_used < 8.0);
    CHECK(ssim_batch_min(f.synth.train, tamed, scfg) >= 0.8);
}

TEST_CASE("perturbation extraction recenters differences") {
    const Fixture& f = fixture();
    CraftConfig cfg;
    cfg.ssim_cfg.window = 5;
    cfg.max_iters = 10;
    auto [cooked, traces] = craft_dataset(f.spec, f.params, f.synth.test, cfg);

    Dataset pert = extract_perturbations(f.synth.test, cooked);
    CHECK(pert.provenance == Provenance::Perturbation);
    CHECK(pert.labels == f.synth.test.labels);
    CHECK_NOTHROW(pert.validate());

    for (size_t i = 0; i < 40; ++i) {
        const double raw = f.synth.test.images[i];
        const double prot = cooked.images[i];
        CHECK(pert.images[i] == (prot - raw) + 0.5);
        // Recovery raw + (pert - 0.5) is exact to double rounding, not bitwise.
        CHECK(std::abs((raw + (pert.images[i] - 0.5)) - prot) <= 1e-15);
    }

    Dataset mismatched = f.synth.train;
    CHECK_THROWS_AS(extract_perturbations(mismatched, cooked), ParameterError);
}

TEST_CASE("trace csv lists one row per sample with the documented header") {
    std::vector<CraftTrace> traces(2);
    traces[0].sample_index = 0;
    traces[0].target_class = 1;
    traces[0].iterations_run = 2;
    traces[0].loss_history = {1.5, 0.75};
    traces[0].start_loss = 1.5;
    traces[0].final_ssim = 0.875;
    traces[0].terminated_by = Termination::SsimBoundary;
    traces[1].sample_index = 1;
    traces[1].target_class = 0;
    traces[1].iterations_run = 0;
    traces[1].loss_history = {};
    traces[1].start_loss = 0.25;
    traces[1].final_ssim = 1.0;
    traces[1].terminated_by = Termination::MaxIters;

    const std::string path = temp_path("traces.csv");
    write_traces_csv(path, traces);

    std::ifstream is(path);
    std::string line;
    std::getline(is, line);
    CHECK(line ==
          "sample_index,target_class,iterations_run,final_ssim,terminated_by,"
          "first_loss,last_loss");
    std::getline(is, line);
    CHECK(line == "0,1,2,0.875,SsimBoundary,1.5,0.75");
    std::getline(is, line);
    CHECK(line == "1,0,0,1,MaxIters,0.25,0.25");
    CHECK_FALSE(std::getline(is, line));
}

TEST_CASE("first sgd-m step on a linear model moves along the target row") {
    // flatten + dense is linear, so grad_x of -logit[0] is exactly -W_row0 and
    // the first anti-adversarial SGD-M step lands on x + lr * W_row0.
    ModelSpec spec;
    spec.input_shape = {1, 4, 4};
    spec.num_classes = 2;
    spec.layers = {LayerDesc::flatten(), LayerDesc::dense(16, 2)};
    spec.validate();

    Rng rng(19);
    ModelParams params = init_params(spec, 19);
    Tensor x(spec.input_shape);
    for (size_t i = 0; i < x.numel(); ++i) x[i] = 0.2 + 0.6 * rng.uniform();

    CraftConfig cfg;
    cfg.optimizer = CraftOptimizer::SgdMomentum;
    cfg.loss_form = LossSpec::Form::TargetLogit;
    cfg.lr = 1e-3;
    cfg.max_iters = 1;
    cfg.ssim_cfg.window = 3;

    auto [cooked, trace] = craft_example(spec, params, x, 0, cfg);
    REQUIRE(trace.iterations_run == 1);
    const Tensor& w = params.layers[1].w; // dense weights, [out=2, in=16]
    for (size_t j = 0; j < 16; ++j) {
        CHECK(cooked[j] == x[j] + cfg.lr * w[j]); // row 0 is the first 16 entries
    }
}

TEST_CASE("a zero gradient leaves the sample untouched") {
    // Zero parameters give identically zero input gradients, so one iteration
    // commits a zero step: the protected sample is the raw sample, bit for bit.
    ModelSpec spec = small_mlp({1, 6, 6}, 2);
    ModelParams params = zeros_like(spec);

    Rng rng(20);
    Tensor x(spec.input_shape);
    for (size_t i = 0; i < x.numel(); ++i) x[i] = rng.uniform();

    CraftConfig cfg;
    cfg.max_iters = 1;
    cfg.ssim_cfg.window = 5;

    auto [cooked, trace] = craft_example(spec, params, x, 0, cfg);
    CHECK(trace.terminated_by == Termination::MaxIters);
    CHECK(trace.final_ssim == 1.0);
    CHECK(std::memcmp(cooked.data(), x.data(), x.numel() * sizeof(double)) == 0);
}
