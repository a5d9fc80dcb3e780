#include "datacook/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "datacook/errors.hpp"
#include "datacook/rng.hpp"

namespace fs = std::filesystem;

namespace datacook {

void ExperimentConfig::validate() const {
    if (synthetic) {
        recipe.validate();
    } else {
        if (train_path.empty() || test_path.empty())
            throw ConfigError("file-sourced data needs train_path and test_path");
    }
    if (arch != "smallcnn" && arch != "smallmlp")
        throw ConfigError("model arch must be smallcnn or smallmlp");
    train_cfg.validate();
    craft.validate();
    if (method != "antiadv" && method != "adv" && method != "noise")
        throw ConfigError("run method must be antiadv, adv or noise");
    if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
    if (out_dir.empty()) throw ConfigError("output directory must not be empty");
    if (epsilon < 0.0) throw ConfigError("epsilon budget must be >= 0");
}

uint64_t stage_seed(uint64_t master_seed, SeedStream stream) {
    return derive_seed(master_seed, static_cast<uint64_t>(stream));
}

// ---- configuration text ----

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_line(int lineno, const std::string& why) {
    throw ConfigError("config line " + std::to_string(lineno) + ": " + why);
}

int to_int(const std::string& v, int lineno) {
    try {
        size_t pos = 0;
        int x = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (const std::exception&) {
        bad_line(lineno, "expected an integer, got '" + v + "'");
    }
}

double to_double(const std::string& v, int lineno) {
    try {
        size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (const std::exception&) {
        bad_line(lineno, "expected a number, got '" + v + "'");
    }
}

uint64_t to_u64(const std::string& v, int lineno) {
    try {
        size_t pos = 0;
        uint64_t x = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (const std::exception&) {
        bad_line(lineno, "expected an unsigned integer, got '" + v + "'");
    }
}

bool to_bool(const std::string& v, int lineno) {
    if (v == "true" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "no" || v == "0") return false;
    bad_line(lineno, "expected a boolean, got '" + v + "'");
}

void apply_key(ExperimentConfig& cfg, const std::string& section, const std::string& key,
               const std::string& value, int lineno) {
    if (section == "data") {
        if (key == "source") {
            if (value == "synth")
                cfg.synthetic = true;
            else if (value == "file")
                cfg.synthetic = false;
            else
                bad_line(lineno, "data source must be synth or file");
        } else if (key == "classes")
            cfg.recipe.classes = to_int(value, lineno);
        else if (key == "per_class_train")
            cfg.recipe.per_class_train = to_int(value, lineno);
        else if (key == "per_class_test")
            cfg.recipe.per_class_test = to_int(value, lineno);
        else if (key == "side")
            cfg.recipe.side = to_int(value, lineno);
        else if (key == "separation")
            cfg.recipe.separation = to_double(value, lineno);
        else if (key == "blob_sigma")
            cfg.recipe.blob_sigma = to_double(value, lineno);
        else if (key == "center_jitter")
            cfg.recipe.center_jitter = to_double(value, lineno);
        else if (key == "pixel_noise")
            cfg.recipe.pixel_noise = to_double(value, lineno);
        else if (key == "amplitude")
            cfg.recipe.amplitude = to_double(value, lineno);
        else if (key == "train_path")
            cfg.train_path = value;
        else if (key == "test_path")
            cfg.test_path = value;
        else
            bad_line(lineno, "unknown [data] key '" + key + "'");
    } else if (section == "model") {
        if (key == "arch")
            cfg.arch = value;
        else
            bad_line(lineno, "unknown [model] key '" + key + "'");
    } else if (section == "train") {
        if (key == "epochs")
            cfg.train_cfg.epochs = to_int(value, lineno);
        else if (key == "batch_size")
            cfg.train_cfg.batch_size = to_int(value, lineno);
        else if (key == "lr")
            cfg.train_cfg.lr = to_double(value, lineno);
        else if (key == "momentum")
            cfg.train_cfg.momentum = to_double(value, lineno);
        else
            bad_line(lineno, "unknown [train] key '" + key + "'");
    } else if (section == "craft") {
        if (key == "direction") {
            if (value == "antiadv")
                cfg.craft.direction = Direction::AntiAdv;
            else if (value == "adv")
                cfg.craft.direction = Direction::Adv;
            else
                bad_line(lineno, "craft direction must be antiadv or adv");
        } else if (key == "target") {
            if (value == "pseudo")
                cfg.craft.target_rule = TargetRule::Pseudo;
            else if (value == "oracle")
                cfg.craft.target_rule = TargetRule::Oracle;
            else if (value == "maxp")
                cfg.craft.target_rule = TargetRule::MaxP;
            else
                bad_line(lineno, "craft target must be pseudo, oracle or maxp");
        } else if (key == "loss") {
            if (value == "logit")
                cfg.craft.loss_form = LossSpec::Form::TargetLogit;
            else if (value == "logp")
                cfg.craft.loss_form = LossSpec::Form::TargetLogProb;
            else
                bad_line(lineno, "craft loss must be logit or logp");
        } else if (key == "optimizer") {
            if (value == "adam")
                cfg.craft.optimizer = CraftOptimizer::Adam;
            else if (value == "sgdm")
                cfg.craft.optimizer = CraftOptimizer::SgdMomentum;
            else
                bad_line(lineno, "craft optimizer must be adam or sgdm");
        } else if (key == "lr")
            cfg.craft.lr = to_double(value, lineno);
        else if (key == "max_iters")
            cfg.craft.max_iters = to_int(value, lineno);
        else if (key == "ssim_threshold")
            cfg.craft.ssim_threshold = to_double(value, lineno);
        else if (key == "ssim_window")
            cfg.craft.ssim_cfg.window = to_int(value, lineno);
        else if (key == "ssim_k1")
            cfg.craft.ssim_cfg.k1 = to_double(value, lineno);
        else if (key == "ssim_k2")
            cfg.craft.ssim_cfg.k2 = to_double(value, lineno);
        else if (key == "ssim_l")
            cfg.craft.ssim_cfg.dynamic_range = to_double(value, lineno);
        else if (key == "ssim_mode") {
            if (value == "per-channel")
                cfg.craft.ssim_cfg.mode = SsimMode::PerChannel2d;
            else if (value == "volumetric")
                cfg.craft.ssim_cfg.mode = SsimMode::Volumetric;
            else
                bad_line(lineno, "ssim_mode must be per-channel or volumetric");
        } else if (key == "max_p_frozen")
            cfg.craft.max_p_frozen = to_bool(value, lineno);
        else
            bad_line(lineno, "unknown [craft] key '" + key + "'");
    } else if (section == "run") {
        if (key == "method") {
            if (value != "antiadv" && value != "adv" && value != "noise")
                bad_line(lineno, "run method must be antiadv, adv or noise");
            cfg.method = value;
        } else if (key == "noise_sigma")
            cfg.noise_sigma = to_double(value, lineno);
        else if (key == "seed")
            cfg.master_seed = to_u64(value, lineno);
        else if (key == "out")
            cfg.out_dir = value;
        else if (key == "perturbation_arm")
            cfg.perturbation_arm = to_bool(value, lineno);
        else if (key == "epsilon")
            cfg.epsilon = to_double(value, lineno);
        else
            bad_line(lineno, "unknown [run] key '" + key + "'");
    } else {
        bad_line(lineno, "key outside of any [section]");
    }
}

} // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const size_t comment = line.find_first_of("#;");
        if (comment != std::string::npos) line = line.substr(0, comment);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') bad_line(lineno, "unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section != "data" && section != "model" && section != "train" &&
                section != "craft" && section != "run")
                bad_line(lineno, "unknown section [" + section + "]");
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos) bad_line(lineno, "expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) bad_line(lineno, "empty key");
        apply_key(cfg, section, key, value, lineno);
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str());
}

std::string default_config_text() {
    const ExperimentConfig d;
    char buf[4096];
    std::snprintf(
        buf, sizeof buf,
        "[data]\n"
        "source = synth          # synth | file\n"
        "classes = %d\n"
        "per_class_train = %d\n"
        "per_class_test = %d\n"
        "side = %d\n"
        "separation = %g\n"
        "blob_sigma = %g\n"
        "center_jitter = %g\n"
        "pixel_noise = %g\n"
        "amplitude = %g\n"
        "train_path =            # used when source = file\n"
        "test_path =\n"
        "\n"
        "[model]\n"
        "arch = %s           # smallcnn | smallmlp\n"
        "\n"
        "[train]\n"
        "epochs = %d\n"
        "batch_size = %d\n"
        "lr = %g\n"
        "momentum = %g\n"
        "\n"
        "[craft]\n"
        "direction = antiadv     # antiadv | adv\n"
        "target = pseudo         # pseudo | oracle | maxp\n"
        "loss = logit            # logit | logp\n"
        "optimizer = adam        # adam | sgdm\n"
        "lr = %g\n"
        "max_iters = %d\n"
        "ssim_threshold = %g\n"
        "ssim_window = %d\n"
        "ssim_k1 = %g\n"
        "ssim_k2 = %g\n"
        "ssim_l = %g\n"
        "ssim_mode = per-channel # per-channel | volumetric\n"
        "max_p_frozen = false\n"
        "\n"
        "[run]\n"
        "method = %s        # antiadv | adv | noise\n"
        "noise_sigma = %g\n"
        "seed = %llu\n"
        "out = %s\n"
        "perturbation_arm = %s\n"
        "epsilon = %g\n",
        d.recipe.classes, d.recipe.per_class_train, d.recipe.per_class_test,
        d.recipe.side, d.recipe.separation, d.recipe.blob_sigma, d.recipe.center_jitter,
        d.recipe.pixel_noise, d.recipe.amplitude, d.arch.c_str(), d.train_cfg.epochs,
        d.train_cfg.batch_size, d.train_cfg.lr, d.train_cfg.momentum, d.craft.lr,
        d.craft.max_iters, d.craft.ssim_threshold, d.craft.ssim_cfg.window,
        d.craft.ssim_cfg.k1, d.craft.ssim_cfg.k2, d.craft.ssim_cfg.dynamic_range,
        d.method.c_str(), d.noise_sigma,
        static_cast<unsigned long long>(d.master_seed), d.out_dir.c_str(),
        d.perturbation_arm ? "true" : "false", d.epsilon);
    return buf;
}

// ---- pipeline ----

namespace {

// Reruns of a failing stage need the stage name in the message without
// losing the exception type (the CLI maps types to exit codes).
template <typename Fn>
auto run_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
    const auto tag = [&stage](const char* what) { return "[" + stage + "] " + what; };
    try {
        return fn();
    } catch (const ConfigError& e) {
        throw ConfigError(tag(e.what()));
    } catch (const ParameterError& e) {
        throw ParameterError(tag(e.what()));
    } catch (const ShapeError& e) {
        throw ShapeError(tag(e.what()));
    } catch (const FormatError& e) {
        throw FormatError(tag(e.what()));
    } catch (const NumericError& e) {
        throw NumericError(tag(e.what()));
    } catch (const ConstraintError& e) {
        throw ConstraintError(tag(e.what()));
    } catch (const UndefinedMetricError& e) {
        throw UndefinedMetricError(tag(e.what()));
    } catch (const Error& e) {
        throw Error(tag(e.what()));
    }
}

struct RawCorpus {
    Dataset train;
    Dataset test;
    bool warning = false;
};

RawCorpus load_raw(const ExperimentConfig& cfg) {
    RawCorpus c;
    if (cfg.synthetic) {
        SynthResult res =
            synth_dataset(cfg.recipe, stage_seed(cfg.master_seed, SeedStream::Data));
        c.train = std::move(res.train);
        c.test = std::move(res.test);
        c.warning = res.warning;
        if (res.warning)
            std::fprintf(stderr,
                         "warning: synthetic recipe 1-NN accuracy %.3f < 0.9; "
                         "classes may be too entangled\n",
                         res.nn_accuracy);
    } else {
        c.train = load_dataset(cfg.train_path);
        c.test = load_dataset(cfg.test_path);
        if (c.train.sample_shape() != c.test.sample_shape())
            throw ShapeError("train and test sample shapes differ");
        if (c.train.num_classes != c.test.num_classes)
            throw ShapeError("train and test class counts differ");
    }
    return c;
}

std::string seed_tag(uint64_t seed) { return "_s" + std::to_string(seed); }

void fill_identity(EvalReport& r, const ExperimentConfig& cfg, const CraftConfig& craft) {
    if (cfg.method == "noise") {
        r.method = "Noise";
        r.direction = r.target = r.loss = r.optimizer = "-";
    } else {
        r.method = direction_name(craft.direction);
        r.direction = direction_name(craft.direction);
        r.target = target_rule_name(craft.target_rule);
        r.loss = loss_form_name(craft.loss_form);
        r.optimizer = craft_optimizer_name(craft.optimizer);
    }
    r.seed = cfg.master_seed;
}

} // namespace

RunResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    fs::create_directories(cfg.out_dir);
    const std::string tag = seed_tag(cfg.master_seed);
    const auto path = [&](const std::string& stem, const char* ext) {
        return (fs::path(cfg.out_dir) / (stem + tag + ext)).string();
    };

    RunResult result;

    RawCorpus raw = run_stage("data", [&] { return load_raw(cfg); });
    result.recipe_warning = raw.warning;
    run_stage("data", [&] {
        save_dataset(path("raw_train", ".dcd"), raw.train);
        save_dataset(path("raw_test", ".dcd"), raw.test);
        return 0;
    });

    const ModelSpec spec =
        make_model(cfg.arch, raw.train.sample_shape(), raw.train.num_classes);

    ModelParams surrogate;
    {
        auto [params, history] = run_stage("surrogate-training", [&] {
            TrainConfig tc = cfg.train_cfg;
            tc.shuffle_seed = stage_seed(cfg.master_seed, SeedStream::SurrogateShuffle);
            return train(spec,
                         init_params(spec, stage_seed(cfg.master_seed,
                                                      SeedStream::SurrogateInit)),
                         raw.train, tc);
        });
        surrogate = std::move(params);
        result.surrogate_train_acc = history.acc.back();
        save_params(path("surrogate", ".dcm"), spec, surrogate);
        write_history_csv(path("surrogate_history", ".csv"), history);
    }

    CraftConfig craft = cfg.craft;
    craft.seed = stage_seed(cfg.master_seed, SeedStream::Craft);
    if (cfg.method == "adv") craft.direction = Direction::Adv;
    if (cfg.method == "antiadv") craft.direction = Direction::AntiAdv;

    Dataset prot_train, prot_test;
    if (cfg.method == "noise") {
        double sig_train = 0.0, sig_test = 0.0;
        prot_train = run_stage("noise-baseline", [&] {
            return random_noise_dataset(raw.train, cfg.noise_sigma,
                                        stage_seed(cfg.master_seed, SeedStream::NoiseTrain),
                                        craft.ssim_threshold, craft.ssim_cfg, &sig_train);
        });
        prot_test = run_stage("noise-baseline", [&] {
            return random_noise_dataset(raw.test, cfg.noise_sigma,
                                        stage_seed(cfg.master_seed, SeedStream::NoiseTest),
                                        craft.ssim_threshold, craft.ssim_cfg, &sig_test);
        });
        result.noise_sigma_used = std::min(sig_train, sig_test);
    } else {
        auto [pt, traces_train] = run_stage("cook-train", [&] {
            return craft_dataset(spec, surrogate, raw.train, craft);
        });
        auto [pe, traces_test] = run_stage("cook-test", [&] {
            return craft_dataset(spec, surrogate, raw.test, craft);
        });
        prot_train = std::move(pt);
        prot_test = std::move(pe);
        write_traces_csv(path("traces_train", ".csv"), traces_train);
        write_traces_csv(path("traces_test", ".csv"), traces_test);
    }
    save_dataset(path("protected_train", ".dcd"), prot_train);
    save_dataset(path("protected_test", ".dcd"), prot_test);
    result.min_ssim = std::min(ssim_batch_min(raw.train, prot_train, craft.ssim_cfg),
                               ssim_batch_min(raw.test, prot_test, craft.ssim_cfg));

    ModelParams protected_model;
    {
        auto [params, history] = run_stage("protected-training", [&] {
            TrainConfig tc = cfg.train_cfg;
            tc.shuffle_seed = stage_seed(cfg.master_seed, SeedStream::ProtectedShuffle);
            return train(spec,
                         init_params(spec, stage_seed(cfg.master_seed,
                                                      SeedStream::ProtectedInit)),
                         prot_train, tc);
        });
        protected_model = std::move(params);
        save_params(path("protected_model", ".dcm"), spec, protected_model);
        write_history_csv(path("protected_history", ".csv"), history);
    }

    std::vector<EvalReport> rows;
    {
        EvalReport rep = run_stage("evaluation", [&] {
            return build_report(spec, surrogate, protected_model, raw.test, prot_test,
                                cfg.epsilon);
        });
        fill_identity(rep, cfg, craft);
        result.report = rep;
        rows.push_back(std::move(rep));
    }

    if (cfg.perturbation_arm) {
        EvalReport prep = run_stage("perturbation-arm", [&] {
            Dataset pert_train = extract_perturbations(raw.train, prot_train);
            Dataset pert_test = extract_perturbations(raw.test, prot_test);
            save_dataset(path("perturbation_train", ".dcd"), pert_train);
            save_dataset(path("perturbation_test", ".dcd"), pert_test);
            TrainConfig tc = cfg.train_cfg;
            tc.shuffle_seed =
                stage_seed(cfg.master_seed, SeedStream::PerturbationShuffle);
            auto [params, history] = train(
                spec,
                init_params(spec,
                            stage_seed(cfg.master_seed, SeedStream::PerturbationInit)),
                pert_train, tc);
            save_params(path("perturbation_model", ".dcm"), spec, params);
            write_history_csv(path("perturbation_history", ".csv"), history);
            return build_report(spec, surrogate, params, raw.test, pert_test,
                                cfg.epsilon);
        });
        fill_identity(prep, cfg, craft);
        prep.method = "Perturbation";
        result.perturbation_report = prep;
        rows.push_back(std::move(prep));
    }

    result.report_csv_path = path("report", ".csv");
    result.report_text_path = path("report", ".txt");
    write_report_csv(result.report_csv_path, rows);
    {
        std::ofstream os(result.report_text_path);
        if (!os) throw Error("cannot open for writing: " + result.report_text_path);
        for (const auto& r : rows) os << format_report_text(r) << "\n";
    }
    return result;
}

std::vector<EvalReport> ablate(const ExperimentConfig& cfg) {
    cfg.validate();
    fs::create_directories(cfg.out_dir);

    RawCorpus raw = run_stage("data", [&] { return load_raw(cfg); });
    const ModelSpec spec =
        make_model(cfg.arch, raw.train.sample_shape(), raw.train.num_classes);

    ModelParams surrogate = run_stage("surrogate-training", [&] {
        TrainConfig tc = cfg.train_cfg;
        tc.shuffle_seed = stage_seed(cfg.master_seed, SeedStream::SurrogateShuffle);
        return train(spec,
                     init_params(spec,
                                 stage_seed(cfg.master_seed, SeedStream::SurrogateInit)),
                     raw.train, tc)
            .first;
    });

    const auto protected_model_for = [&](const Dataset& prot_train) {
        TrainConfig tc = cfg.train_cfg;
        tc.shuffle_seed = stage_seed(cfg.master_seed, SeedStream::ProtectedShuffle);
        return train(spec,
                     init_params(spec,
                                 stage_seed(cfg.master_seed, SeedStream::ProtectedInit)),
                     prot_train, tc)
            .first;
    };

    std::vector<EvalReport> rows;
    for (Direction dir : {Direction::AntiAdv, Direction::Adv}) {
        for (TargetRule target : {TargetRule::Oracle, TargetRule::Pseudo, TargetRule::MaxP}) {
            for (LossSpec::Form loss :
                 {LossSpec::Form::TargetLogit, LossSpec::Form::TargetLogProb}) {
                for (CraftOptimizer opt :
                     {CraftOptimizer::Adam, CraftOptimizer::SgdMomentum}) {
                    CraftConfig craft = cfg.craft;
                    craft.direction = dir;
                    craft.target_rule = target;
                    craft.loss_form = loss;
                    craft.optimizer = opt;
                    craft.seed = stage_seed(cfg.master_seed, SeedStream::Craft);
                    const std::string combo =
                        std::string(direction_name(dir)) + "/" +
                        target_rule_name(target) + "/" + loss_form_name(loss) + "/" +
                        craft_optimizer_name(opt);
                    EvalReport rep = run_stage("ablate " + combo, [&] {
                        auto prot_train =
                            craft_dataset(spec, surrogate, raw.train, craft).first;
                        auto prot_test =
                            craft_dataset(spec, surrogate, raw.test, craft).first;
                        ModelParams fp = protected_model_for(prot_train);
                        return build_report(spec, surrogate, fp, raw.test, prot_test,
                                            cfg.epsilon);
                    });
                    rep.method = direction_name(dir);
                    rep.direction = direction_name(dir);
                    rep.target = target_rule_name(target);
                    rep.loss = loss_form_name(loss);
                    rep.optimizer = craft_optimizer_name(opt);
                    rep.seed = cfg.master_seed;
                    rows.push_back(std::move(rep));
                }
            }
        }
    }

    EvalReport noise_rep = run_stage("ablate noise", [&] {
        auto prot_train = random_noise_dataset(
            raw.train, cfg.noise_sigma, stage_seed(cfg.master_seed, SeedStream::NoiseTrain),
            cfg.craft.ssim_threshold, cfg.craft.ssim_cfg);
        auto prot_test = random_noise_dataset(
            raw.test, cfg.noise_sigma, stage_seed(cfg.master_seed, SeedStream::NoiseTest),
            cfg.craft.ssim_threshold, cfg.craft.ssim_cfg);
        ModelParams fp = protected_model_for(prot_train);
        return build_report(spec, surrogate, fp, raw.test, prot_test, cfg.epsilon);
    });
    noise_rep.method = "Noise";
    noise_rep.direction = noise_rep.target = noise_rep.loss = noise_rep.optimizer = "-";
    noise_rep.seed = cfg.master_seed;
    rows.push_back(std::move(noise_rep));

    const std::string out =
        (fs::path(cfg.out_dir) / ("ablation" + seed_tag(cfg.master_seed) + ".csv")).string();
    write_report_csv(out, rows);
    return rows;
}

} // namespace datacook
