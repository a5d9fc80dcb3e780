// Command-line front end: synth | train | cook | noise | eval | run | ablate.
// Exit codes: 0 success, 2 configuration error, 3 runtime failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "datacook/cook.hpp"
#include "datacook/dataset.hpp"
#include "datacook/errors.hpp"
#include "datacook/evalkit.hpp"
#include "datacook/experiment.hpp"
#include "datacook/rng.hpp"
#include "datacook/trainer.hpp"

namespace fs = std::filesystem;
using namespace datacook;

namespace {

struct CliOptions {
    std::string config;
    std::string out;
    std::string data;
    std::string model;
    std::string raw_test;
    std::string protected_test;
    std::string surrogate;
    std::string protected_model;
    std::string prefix = "model";
    uint64_t seed = 0;
    bool seed_given = false;
    bool out_given = false;
    double sigma = -1.0; // <0 means "use the config value"
    bool force = false;
};

ExperimentConfig load_config(const CliOptions& opt) {
    ExperimentConfig cfg =
        opt.config.empty() ? ExperimentConfig{} : parse_config_file(opt.config);
    if (opt.seed_given) cfg.master_seed = opt.seed;
    if (opt.out_given) cfg.out_dir = opt.out;
    cfg.validate();
    return cfg;
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

std::string join(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

int cmd_synth(const CliOptions& opt) {
    ExperimentConfig cfg = load_config(opt);
    fs::create_directories(cfg.out_dir);
    SynthResult res = synth_dataset(cfg.recipe, stage_seed(cfg.master_seed, SeedStream::Data));
    const std::string tag = "_s" + std::to_string(cfg.master_seed);
    save_dataset(join(cfg.out_dir, "raw_train" + tag + ".dcd"), res.train);
    save_dataset(join(cfg.out_dir, "raw_test" + tag + ".dcd"), res.test);
    std::printf("wrote %zu train / %zu test samples (%d classes, side %d)\n",
                res.train.size(), res.test.size(), cfg.recipe.classes, cfg.recipe.side);
    std::printf("1-NN oracle accuracy: %.4f%s\n", res.nn_accuracy,
                res.warning ? "  (warning: below 0.9, classes may be too entangled)"
                            : "");
    return 0;
}

int cmd_train(const CliOptions& opt) {
    ExperimentConfig cfg = load_config(opt);
    fs::create_directories(cfg.out_dir);
    Dataset data = load_dataset(opt.data);
    const ModelSpec spec = make_model(cfg.arch, data.sample_shape(), data.num_classes);
    TrainConfig tc = cfg.train_cfg;
    tc.shuffle_seed = stage_seed(cfg.master_seed, SeedStream::SurrogateShuffle);
    auto [params, history] =
        train(spec, init_params(spec, stage_seed(cfg.master_seed, SeedStream::SurrogateInit)),
              data, tc);
    const std::string tag = "_s" + std::to_string(cfg.master_seed);
    const std::string model_path = join(cfg.out_dir, opt.prefix + tag + ".dcm");
    save_params(model_path, spec, params);
    write_history_csv(join(cfg.out_dir, opt.prefix + "_history" + tag + ".csv"), history);
    std::printf("trained %s for %d epochs: final loss %.6f, train acc %.4f\n",
                cfg.arch.c_str(), tc.epochs, history.loss.back(), history.acc.back());
    std::printf("checkpoint: %s\n", model_path.c_str());
    return 0;
}

int cmd_cook(const CliOptions& opt) {
    ExperimentConfig cfg = load_config(opt);
    fs::create_directories(cfg.out_dir);
    Dataset data = load_dataset(opt.data);
    const ModelSpec spec = make_model(cfg.arch, data.sample_shape(), data.num_classes);
    ModelParams surrogate = load_params(opt.model, spec);
    CraftConfig craft = cfg.craft;
    craft.seed = stage_seed(cfg.master_seed, SeedStream::Craft);
    auto [protected_ds, traces] = craft_dataset(spec, surrogate, data, craft);
    const std::string stem = stem_of(opt.data);
    const std::string ds_path = join(cfg.out_dir, "cooked_" + stem + ".dcd");
    save_dataset(ds_path, protected_ds);
    write_traces_csv(join(cfg.out_dir, "traces_" + stem + ".csv"), traces);
    size_t boundary = 0;
    for (const auto& t : traces)
        if (t.terminated_by == Termination::SsimBoundary) ++boundary;
    std::printf("cooked %zu samples (%s/%s/%s/%s): %zu stopped at the SSIM boundary\n",
                protected_ds.size(), direction_name(craft.direction),
                target_rule_name(craft.target_rule), loss_form_name(craft.loss_form),
                craft_optimizer_name(craft.optimizer), boundary);
    std::printf("min ssim: %.6f\n", ssim_batch_min(data, protected_ds, craft.ssim_cfg));
    std::printf("dataset: %s\n", ds_path.c_str());
    return 0;
}

int cmd_noise(const CliOptions& opt) {
    ExperimentConfig cfg = load_config(opt);
    fs::create_directories(cfg.out_dir);
    Dataset data = load_dataset(opt.data);
    const double sigma = opt.sigma >= 0.0 ? opt.sigma : cfg.noise_sigma;
    double used = 0.0;
    Dataset noised =
        random_noise_dataset(data, sigma, stage_seed(cfg.master_seed, SeedStream::NoiseTrain),
                             cfg.craft.ssim_threshold, cfg.craft.ssim_cfg, &used);
    const std::string ds_path = join(cfg.out_dir, "noise_" + stem_of(opt.data) + ".dcd");
    save_dataset(ds_path, noised);
    std::printf("noised %zu samples: requested sigma %g, used %g (SSIM-matched)\n",
                noised.size(), sigma, used);
    std::printf("dataset: %s\n", ds_path.c_str());
    return 0;
}

int cmd_eval(const CliOptions& opt) {
    ExperimentConfig cfg = load_config(opt);
    fs::create_directories(cfg.out_dir);
    Dataset raw_test = load_dataset(opt.raw_test);
    Dataset prot_test = load_dataset(opt.protected_test);
    if (raw_test.sample_shape() != prot_test.sample_shape())
        throw ShapeError("raw and protected test sets have different sample shapes");
    const ModelSpec spec = make_model(cfg.arch, raw_test.sample_shape(), raw_test.num_classes);
    ModelParams fr = load_params(opt.surrogate, spec);
    ModelParams fp = load_params(opt.protected_model, spec);

    if (prot_test.provenance == Provenance::Cooked) {
        const uint64_t model_fp = fr.content_fingerprint();
        const uint64_t expect = fnv1a(&model_fp, sizeof model_fp, cfg.craft.fingerprint());
        if (expect != prot_test.config_fingerprint) {
            if (!opt.force)
                throw ConfigError(
                    "protected dataset was cooked against a different surrogate or "
                    "craft config than supplied (pass --force to evaluate anyway)");
            std::fprintf(stderr, "warning: fingerprint mismatch overridden by --force\n");
        }
    }
    if (prot_test.provenance == Provenance::Cooked ||
        prot_test.provenance == Provenance::Noise) {
        const double m = ssim_batch_min(raw_test, prot_test, cfg.craft.ssim_cfg);
        if (m < cfg.craft.ssim_threshold)
            throw ConstraintError("reloaded protected dataset violates the SSIM floor: "
                                  "min " + std::to_string(m));
    }

    EvalReport rep = build_report(spec, fr, fp, raw_test, prot_test, cfg.epsilon);
    switch (prot_test.provenance) {
        case Provenance::Noise:
            rep.method = "Noise";
            rep.direction = rep.target = rep.loss = rep.optimizer = "-";
            break;
        case Provenance::Perturbation:
            rep.method = "Perturbation";
            break;
        default:
            rep.method = direction_name(cfg.craft.direction);
            rep.direction = direction_name(cfg.craft.direction);
            rep.target = target_rule_name(cfg.craft.target_rule);
            rep.loss = loss_form_name(cfg.craft.loss_form);
            rep.optimizer = craft_optimizer_name(cfg.craft.optimizer);
            break;
    }
    rep.seed = cfg.master_seed;
    const std::string tag = "_s" + std::to_string(cfg.master_seed);
    write_report_csv(join(cfg.out_dir, "report" + tag + ".csv"), {rep});
    const std::string text = format_report_text(rep);
    std::ofstream os(join(cfg.out_dir, "report" + tag + ".txt"));
    os << text;
    std::cout << text;
    return 0;
}

int cmd_run(const CliOptions& opt) {
    ExperimentConfig cfg = load_config(opt);
    RunResult res = run_experiment(cfg);
    std::cout << format_report_text(res.report);
    if (res.perturbation_report) std::cout << "\n" << format_report_text(*res.perturbation_report);
    std::printf("min ssim across protected splits: %.6f\n", res.min_ssim);
    std::printf("report: %s\n", res.report_csv_path.c_str());
    return 0;
}

int cmd_ablate(const CliOptions& opt) {
    ExperimentConfig cfg = load_config(opt);
    auto rows = ablate(cfg);
    std::printf("ablation wrote %zu rows (24 grid + 1 noise) to %s\n", rows.size(),
                join(cfg.out_dir, "ablation_s" + std::to_string(cfg.master_seed) + ".csv")
                    .c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"datacook: anti-adversarial dataset cooking, training and evaluation"};
    app.require_subcommand(0, 1);

    bool print_defaults = false;
    app.add_flag("--print-defaults", print_defaults,
                 "print the default configuration and exit");

    CliOptions opt;
    const auto add_common = [&opt](CLI::App* sub) {
        sub->add_option("--config", opt.config, "configuration file")
            ->check(CLI::ExistingFile);
        sub->add_option("--seed", opt.seed, "master seed (overrides the config)")
            ->each([&opt](const std::string&) { opt.seed_given = true; });
        sub->add_option("--out", opt.out, "output directory (overrides the config)")
            ->each([&opt](const std::string&) { opt.out_given = true; });
    };

    CLI::App* synth = app.add_subcommand("synth", "generate the synthetic corpus");
    add_common(synth);

    CLI::App* train = app.add_subcommand("train", "train a classifier on a dataset");
    add_common(train);
    train->add_option("--data", opt.data, "input dataset (DCD1)")
        ->required()
        ->check(CLI::ExistingFile);
    train->add_option("--prefix", opt.prefix, "checkpoint name prefix");

    CLI::App* cook = app.add_subcommand("cook", "craft a protected dataset");
    add_common(cook);
    cook->add_option("--data", opt.data, "raw dataset (DCD1)")
        ->required()
        ->check(CLI::ExistingFile);
    cook->add_option("--model", opt.model, "surrogate checkpoint (DCM1)")
        ->required()
        ->check(CLI::ExistingFile);

    CLI::App* noise = app.add_subcommand("noise", "SSIM-matched Gaussian baseline");
    add_common(noise);
    noise->add_option("--data", opt.data, "raw dataset (DCD1)")
        ->required()
        ->check(CLI::ExistingFile);
    noise->add_option("--sigma", opt.sigma, "noise sigma before SSIM matching");

    CLI::App* eval = app.add_subcommand("eval", "four-cell report from existing artifacts");
    add_common(eval);
    eval->add_option("--raw-test", opt.raw_test, "raw test dataset")
        ->required()
        ->check(CLI::ExistingFile);
    eval->add_option("--protected-test", opt.protected_test, "protected test dataset")
        ->required()
        ->check(CLI::ExistingFile);
    eval->add_option("--surrogate", opt.surrogate, "surrogate checkpoint f^r")
        ->required()
        ->check(CLI::ExistingFile);
    eval->add_option("--protected-model", opt.protected_model, "protected checkpoint f^p")
        ->required()
        ->check(CLI::ExistingFile);
    eval->add_flag("--force", opt.force, "evaluate despite fingerprint mismatches");

    CLI::App* run = app.add_subcommand("run", "full experiment pipeline");
    add_common(run);

    CLI::App* ablate_cmd = app.add_subcommand("ablate", "sweep the crafting grid");
    add_common(ablate_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (print_defaults) {
            std::cout << default_config_text();
            return 0;
        }
        if (app.got_subcommand(synth)) return cmd_synth(opt);
        if (app.got_subcommand(train)) return cmd_train(opt);
        if (app.got_subcommand(cook)) return cmd_cook(opt);
        if (app.got_subcommand(noise)) return cmd_noise(opt);
        if (app.got_subcommand(eval)) return cmd_eval(opt);
        if (app.got_subcommand(run)) return cmd_run(opt);
        if (app.got_subcommand(ablate_cmd)) return cmd_ablate(opt);
        std::cout << app.help();
        return 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 2;
    } catch (const ParameterError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 2;
    } catch (const ShapeError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 2;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 2;
    } catch (const UndefinedMetricError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "runtime failure: %s\n", e.what());
        return 3;
    }
}
