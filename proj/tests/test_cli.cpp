#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "alf/binio.hpp"
#include "alf/cli.hpp"

using namespace alf;

namespace {

struct TempTree {
    std::filesystem::path root;
    TempTree() {
        root = std::filesystem::temp_directory_path() /
               ("alf_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
        std::filesystem::create_directories(root);
    }
    ~TempTree() { std::filesystem::remove_all(root); }
    static int& counter() {
        static int n = 0;
        return n;
    }
    std::string file(const std::string& name, const std::string& body) const {
        const std::string p = (root / name).string();
        write_file(p, body);
        return p;
    }
    std::string path(const std::string& name) const { return (root / name).string(); }
};

std::string small_config(const std::string& out_dir) {
    return std::string(R"({
  "out_dir": ")") +
           out_dir + R"(",
  "arch": {
    "input": {"h": 8, "w": 8, "c": 1},
    "classes": 4,
    "layers": [
      {"kind": "conv", "co": 8, "k": 3, "pad": 1},
      {"kind": "alf", "co": 12, "k": 3, "pad": 1}
    ]
  },
  "train": {"epochs": 2, "batch_size": 32, "lr": 0.05, "m": 8, "pr": 0.5, "seed": 7},
  "dataset": {"kind": "synthetic", "seed": 7, "n_train": 192, "n_test": 96,
              "rank": 2, "classes": 4, "min_margin": 0.05}
})";
}

// Runs fn with stdout redirected into a file and returns what it printed.
std::string capture_stdout(const std::function<void()>& fn) {
    std::fflush(stdout);
    const int saved = ::dup(1);
    REQUIRE(saved >= 0);
    const std::string tmp =
        (std::filesystem::temp_directory_path() / ("alf_cap_" + std::to_string(::getpid())))
            .string();
    FILE* f = std::fopen(tmp.c_str(), "w");
    REQUIRE(f != nullptr);
    ::dup2(::fileno(f), 1);
    fn();
    std::fflush(stdout);
    ::dup2(saved, 1);
    ::close(saved);
    std::fclose(f);
    std::string out = read_file(tmp);
    std::filesystem::remove(tmp);
    return out;
}

std::vector<std::string> split_lines(const std::string& s) {
    std::vector<std::string> lines;
    std::istringstream in(s);
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

}  // namespace

TEST_CASE("analyze projects the documented break-even width") {
    TempTree t;
    const std::string cfg = t.file("run.json", R"({
  "out_dir": ")" + t.path("out") + R"(",
  "arch": {
    "input": {"h": 32, "w": 32, "c": 3},
    "classes": 10,
    "layers": [
      {"kind": "conv", "co": 64, "k": 3, "pad": 1},
      {"kind": "alf", "co": 128, "k": 3, "pad": 1}
    ]
  },
  "dataset": {"kind": "cifar10", "path": "never-read", "classes": 10}
})");

    const std::string printed =
        capture_stdout([&] { CHECK(cli_dispatch({"analyze", "--config", cfg}) == 0); });
    const std::string csv = read_file(t.path("out") + "/cost.csv");
    CHECK(printed == csv);

    // pr defaults to 0.85, so 128 code channels keep 128 - floor(0.85*128) = 20.
    const std::vector<std::string> lines = split_lines(csv);
    REQUIRE(lines.size() == 3);
    CHECK(lines[1] ==
          "alf2,64,128,3,32,32,20,73728,14080,75497472,14417920,5.236364,5.236364,104");

    SUBCASE("the pruning-rate override moves the projection") {
        const std::string printed2 = capture_stdout(
            [&] { CHECK(cli_dispatch({"analyze", "--config", cfg, "--pr", "0.5"}) == 0); });
        const std::vector<std::string> lines2 = split_lines(printed2);
        REQUIRE(lines2.size() == 3);
        CHECK(lines2[1].find("alf2,64,128,3,32,32,64,") == 0);
    }
}

TEST_CASE("analyze runs a 100-layer description well under the time budget") {
    TempTree t;
    std::ostringstream cfg;
    cfg << R"({"out_dir": ")" << t.path("out") << R"(",
  "arch": {"input": {"h": 8, "w": 8, "c": 1}, "classes": 4, "layers": [)";
    for (int i = 0; i < 100; ++i) {
        if (i > 0) cfg << ",";
        cfg << R"({"kind": "alf", "co": 8, "k": 3, "pad": 1})";
    }
    cfg << R"(]}, "dataset": {"classes": 4}})";
    const std::string path = t.file("big.json", cfg.str());

    const auto start = std::chrono::steady_clock::now();
    std::string printed;
    capture_stdout([&] { CHECK(cli_dispatch({"analyze", "--config", path}) == 0); });
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CHECK(secs < 1.0);

    const std::vector<std::string> lines = split_lines(read_file(t.path("out") + "/cost.csv"));
    CHECK(lines.size() == 102);  // header + 100 layers + total
}

TEST_CASE("training with zero epochs still produces valid artifacts") {
    TempTree t;
    const std::string cfg = t.file("run.json", small_config(t.path("out")));
    CHECK(cli_dispatch({"train", "--config", cfg, "--epochs", "0"}) == 0);
    CHECK(read_file(t.path("out") + "/metrics.csv") ==
          "epoch,task_loss,rec_loss,accuracy,masked_count,gain\n");
    CHECK(std::filesystem::exists(t.path("out") + "/model.alfckpt"));
}

TEST_CASE("cli artifacts are byte-reproducible for a fixed config and seed") {
    TempTree t;
    const std::string cfg = t.file("run.json", small_config(t.path("unused")));

    for (const char* out : {"a", "b"}) {
        CHECK(capture_stdout([&] {
                  CHECK(cli_dispatch({"train", "--config", cfg, "--out-dir", t.path(out)}) == 0);
              }) != "");
        CHECK(cli_dispatch({"compress", "--config", cfg, "--out-dir", t.path(out)}) == 0);
    }
    for (const char* name : {"/metrics.csv", "/model.alfckpt", "/model.alf1", "/cost.csv"}) {
        CAPTURE(name);
        CHECK(read_file(t.path("a") + name) == read_file(t.path("b") + name));
    }
}

TEST_CASE("eval reproduces the final training accuracy through the container") {
    TempTree t;
    const std::string cfg = t.file("run.json", small_config(t.path("out")));

    const std::string train_out =
        capture_stdout([&] { CHECK(cli_dispatch({"train", "--config", cfg}) == 0); });
    capture_stdout([&] { CHECK(cli_dispatch({"compress", "--config", cfg}) == 0); });
    const std::string eval_out =
        capture_stdout([&] { CHECK(cli_dispatch({"eval", "--config", cfg}) == 0); });

    const double trained = std::atof(train_out.c_str());
    const double evaled = std::atof(eval_out.c_str());
    CHECK(trained > 0.0);
    CHECK(std::abs(trained - evaled) <= 1e-6);

    const std::vector<std::string> metric_lines =
        split_lines(read_file(t.path("out") + "/metrics.csv"));
    REQUIRE(metric_lines.size() == 3);
    const std::string& last = metric_lines.back();
    // accuracy is the fourth column
    std::istringstream row(last);
    std::string field;
    for (int i = 0; i < 4; ++i) std::getline(row, field, ',');
    CHECK(std::abs(std::atof(field.c_str()) - evaled) <= 1e-6);
}

TEST_CASE("exit codes distinguish usage, config, and runtime failures") {
    TempTree t;
    const std::string cfg = t.file("run.json", small_config(t.path("out")));

    SUBCASE("usage errors exit 2") {
        CHECK(cli_dispatch({}) == 2);
        CHECK(cli_dispatch({"frobnicate"}) == 2);
        CHECK(cli_dispatch({"train", "--config", cfg, "--no-such-flag"}) == 2);
        CHECK(cli_dispatch({"train"}) == 2);  // --config is required
    }

    SUBCASE("config errors exit 3") {
        CHECK(cli_dispatch({"train", "--config", t.path("missing.json")}) == 3);
        CHECK(cli_dispatch({"train", "--config", t.file("bad.json", "{nope")}) == 3);
        CHECK(cli_dispatch({"train", "--config",
                            t.file("unknown.json",
                                   R"({"arch": {"input": {"h":8,"w":8,"c":1}, "classes": 4,
                                        "layers": [{"kind":"alf","co":4,"k":3,"pad":1}]},
                                       "dataset": {"classes": 4}, "typo_key": 1})")}) == 3);
        CHECK(cli_dispatch({"train", "--config",
                            t.file("chain.json",
                                   R"({"arch": {"input": {"h":8,"w":8,"c":1}, "classes": 4,
                                        "layers": [{"kind":"alf","co":4,"k":3,"pad":1,"ci":9}]},
                                       "dataset": {"classes": 4}})")}) == 3);
        CHECK(cli_dispatch({"train", "--config", cfg, "--pr", "1.5"}) == 3);
    }

    SUBCASE("runtime errors exit 4") {
        // No checkpoint has been produced yet.
        CHECK(cli_dispatch({"compress", "--config", cfg}) == 4);
        // Corrupt container.
        std::filesystem::create_directories(t.path("out"));
        write_file(t.path("out") + "/model.alf1", "not a container");
        CHECK(cli_dispatch({"eval", "--config", cfg}) == 4);
    }
}

TEST_CASE("seed and dataset overrides change the run") {
    TempTree t;
    const std::string cfg = t.file("run.json", small_config(t.path("out")));

    capture_stdout([&] {
        CHECK(cli_dispatch({"train", "--config", cfg, "--out-dir", t.path("s7")}) == 0);
        CHECK(cli_dispatch(
                  {"train", "--config", cfg, "--out-dir", t.path("s8"), "--seed", "8"}) == 0);
    });
    CHECK(read_file(t.path("s7") + "/model.alfckpt") !=
          read_file(t.path("s8") + "/model.alfckpt"));
}
