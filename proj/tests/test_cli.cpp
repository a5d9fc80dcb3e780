// End-to-end smoke tests of the command-line binary: exit codes, artifact
// wiring and the fingerprint safety checks between subcommands.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"

#include "datacook/dataset.hpp"
#include "datacook/evalkit.hpp"
#include "datacook/experiment.hpp"

#ifdef _WIN32
#error "the CLI tests assume a POSIX shell"
#endif
#include <sys/wait.h>

using namespace datacook;
namespace fs = std::filesystem;

namespace {

fs::path work_dir() {
    static fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "datacook_cli_tests";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

int run_cli(const std::string& args) {
    const std::string cmd =
        std::string("'") + DATACOOK_CLI_PATH + "' " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

std::string capture_cli(const std::string& args) {
    const fs::path log = work_dir() / "capture.txt";
    const std::string cmd = std::string("'") + DATACOOK_CLI_PATH + "' " + args +
                            " >'" + log.string() + "' 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    std::ifstream is(log);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// Tiny corpus and schedule so each invocation stays around a second.
void write_tiny_config(const fs::path& path, const std::string& extra = "") {
    std::ofstream os(path);
    os << "[data]\n"
          "per_class_train = 25\n"
          "per_class_test = 8\n"
          "side = 12\n"
          "[model]\n"
          "arch = smallmlp\n"
          "[train]\n"
          "epochs = 3\n"
          "batch_size = 16\n"
          "[craft]\n"
          "max_iters = 6\n"
          "ssim_window = 5\n"
       << extra;
}

} // namespace

TEST_CASE("print-defaults emits a parseable configuration") {
    CHECK(run_cli("--print-defaults") == 0);
    const std::string text = capture_cli("--print-defaults");
    CHECK_NOTHROW(parse_config_text(text));
}

TEST_CASE("no subcommand is a usage error") {
    CHECK(run_cli("") == 2);
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("frobnicate") == 2);
}

TEST_CASE("synth, train, cook, noise and eval chain together") {
    const fs::path dir = work_dir() / "chain";
    fs::create_directories(dir);
    const fs::path cfg = dir / "tiny.cfg";
    write_tiny_config(cfg);
    const std::string common =
        " --config '" + cfg.string() + "' --out '" + dir.string() + "' --seed 7";

    REQUIRE(run_cli("synth" + common) == 0);
    REQUIRE(fs::exists(dir / "raw_train_s7.dcd"));
    REQUIRE(fs::exists(dir / "raw_test_s7.dcd"));

    REQUIRE(run_cli("train --data '" + (dir / "raw_train_s7.dcd").string() + "'" +
                    common + " --prefix surrogate") == 0);
    REQUIRE(fs::exists(dir / "surrogate_s7.dcm"));
    REQUIRE(fs::exists(dir / "surrogate_history_s7.csv"));

    REQUIRE(run_cli("cook --data '" + (dir / "raw_test_s7.dcd").string() +
                    "' --model '" + (dir / "surrogate_s7.dcm").string() + "'" +
                    common) == 0);
    REQUIRE(fs::exists(dir / "cooked_raw_test_s7.dcd"));
    REQUIRE(fs::exists(dir / "traces_raw_test_s7.csv"));
    {
        Dataset cooked = load_dataset((dir / "cooked_raw_test_s7.dcd").string());
        CHECK(cooked.provenance == Provenance::Cooked);
    }

    REQUIRE(run_cli("noise --data '" + (dir / "raw_test_s7.dcd").string() +
                    "' --sigma 0.2" + common) == 0);
    REQUIRE(fs::exists(dir / "noise_raw_test_s7.dcd"));

    // A protected model for the eval step: train on the cooked test split
    // (tiny, but structurally complete).
    REQUIRE(run_cli("train --data '" + (dir / "cooked_raw_test_s7.dcd").string() +
                    "'" + common + " --prefix protected_model") == 0);

    REQUIRE(run_cli("eval --raw-test '" + (dir / "raw_test_s7.dcd").string() +
                    "' --protected-test '" + (dir / "cooked_raw_test_s7.dcd").string() +
                    "' --surrogate '" + (dir / "surrogate_s7.dcm").string() +
                    "' --protected-model '" + (dir / "protected_model_s7.dcm").string() +
                    "'" + common) == 0);
    REQUIRE(fs::exists(dir / "report_s7.csv"));
    auto rows = read_report_csv((dir / "report_s7.csv").string());
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].method == "AntiAdv");
}

TEST_CASE("eval rejects a surrogate that did not cook the dataset") {
    const fs::path dir = work_dir() / "mismatch";
    fs::create_directories(dir);
    const fs::path cfg = dir / "tiny.cfg";
    write_tiny_config(cfg);
    const std::string common =
        " --config '" + cfg.string() + "' --out '" + dir.string() + "' --seed 7";

    REQUIRE(run_cli("synth" + common) == 0);
    REQUIRE(run_cli("train --data '" + (dir / "raw_train_s7.dcd").string() + "'" +
                    common + " --prefix surrogate") == 0);
    // A second, different surrogate from another seed.
    const std::string other =
        " --config '" + cfg.string() + "' --out '" + dir.string() + "' --seed 8";
    REQUIRE(run_cli("train --data '" + (dir / "raw_train_s7.dcd").string() + "'" +
                    other + " --prefix surrogate") == 0);

    REQUIRE(run_cli("cook --data '" + (dir / "raw_test_s7.dcd").string() +
                    "' --model '" + (dir / "surrogate_s7.dcm").string() + "'" +
                    common) == 0);

    const std::string eval_args =
        "eval --raw-test '" + (dir / "raw_test_s7.dcd").string() +
        "' --protected-test '" + (dir / "cooked_raw_test_s7.dcd").string() +
        "' --protected-model '" + (dir / "surrogate_s7.dcm").string() + "'";

    // Wrong surrogate: fingerprint mismatch is a configuration error...
    CHECK(run_cli(eval_args + " --surrogate '" + (dir / "surrogate_s8.dcm").string() +
                  "'" + common) == 2);
    // ...unless explicitly overridden.
    CHECK(run_cli(eval_args + " --surrogate '" + (dir / "surrogate_s8.dcm").string() +
                  "' --force" + common) == 0);
    // Matching surrogate passes without force.
    CHECK(run_cli(eval_args + " --surrogate '" + (dir / "surrogate_s7.dcm").string() +
                  "'" + common) == 0);
}

TEST_CASE("config mistakes exit with status 2") {
    const fs::path dir = work_dir() / "bad";
    fs::create_directories(dir);
    const fs::path cfg = dir / "bad.cfg";
    {
        std::ofstream os(cfg);
        os << "[data]\nwibble = 3\n";
    }
    CHECK(run_cli("synth --config '" + cfg.string() + "'") == 2);
    CHECK(run_cli("synth --config '" + (dir / "missing.cfg").string() + "'") == 2);
    CHECK(run_cli("train --data '" + (dir / "missing.dcd").string() + "'") == 2);
}

TEST_CASE("run and ablate drive the full pipeline from the command line") {
    const fs::path dir = work_dir() / "full";
    fs::create_directories(dir);
    const fs::path cfg = dir / "tiny.cfg";
    write_tiny_config(cfg, "[run]\nperturbation_arm = true\n");
    const std::string common =
        " --config '" + cfg.string() + "' --out '" + dir.string() + "' --seed 5";

    REQUIRE(run_cli("run" + common) == 0);
    CHECK(fs::exists(dir / "report_s5.csv"));
    CHECK(fs::exists(dir / "report_s5.txt"));
    auto rows = read_report_csv((dir / "report_s5.csv").string());
    REQUIRE(rows.size() == 2);

    const fs::path ab_cfg = dir / "ablate.cfg";
    write_tiny_config(ab_cfg);
    {
        std::ofstream os(ab_cfg, std::ios::app);
        os << "[data]\nper_class_train = 15\nper_class_test = 6\n"
              "[train]\nepochs = 2\n[craft]\nmax_iters = 3\n";
    }
    REQUIRE(run_cli("ablate --config '" + ab_cfg.string() + "' --out '" +
                    dir.string() + "' --seed 5") == 0);
    auto ab_rows = read_report_csv((dir / "ablation_s5.csv").string());
    CHECK(ab_rows.size() == 25);
}
