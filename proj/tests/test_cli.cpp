#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "gravilon/data.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out;
};

// Runs the CLI with stderr discarded.
Run cli(const std::string& args) {
    const std::string cmd = std::string(GRAVILON_CLI) + " " + args + " 2>/dev/null";
    Run r;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    char buf[4096];
    while (std::fgets(buf, sizeof buf, pipe) != nullptr) r.out += buf;
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

std::size_t count_lines(const std::string& text) {
    std::size_t n = 0;
    for (char c : text) n += c == '\n';
    return n;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("gravilon_cli_test_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& name) const { return (path / name).string(); }
};

const std::string kSmall = " --synthetic --synthetic-count 1200 --batch 32 --eval-subset 200 ";

}  // namespace

TEST_CASE("usage errors exit 1") {
    CHECK(cli("").code == 1);
    CHECK(cli("train").code == 1);
    CHECK(cli("accuracy --methods lbfgs --synthetic").code == 1);
    CHECK(cli("accuracy --methods gravilon").code == 1);  // no data source
    CHECK(cli("accuracy --trials 0 --synthetic").code == 1);
    CHECK(cli("testbed --objective rosenbrock --x0 1").code == 1);
    CHECK(cli("testbed --objective quadratic --x0 a,b").code == 1);
    CHECK(cli("--help").code == 0);
}

TEST_CASE("data errors exit 2") {
    TempDir tmp;
    CHECK(cli("accuracy --data-dir " + tmp / "missing" + " --steps 1 --trials 1 --out " + tmp / "r.csv").code == 2);

    // Files with the wrong magic.
    const std::vector<std::uint8_t> labels(60000, 1);
    for (const char* name : {"train-images-idx3-ubyte", "t10k-images-idx3-ubyte"}) {
        gravilon::data::write_idx_labels(tmp.path / name, labels);
    }
    for (const char* name : {"train-labels-idx1-ubyte", "t10k-labels-idx1-ubyte"}) {
        gravilon::data::write_idx_labels(tmp.path / name, labels);
    }
    CHECK(cli("accuracy --data-dir " + tmp.path.string() + " --steps 1 --trials 1 --out " + tmp / "r.csv").code == 2);

    std::ofstream(tmp / "bad.cfg") << "no equals sign\n";
    CHECK(cli("accuracy --synthetic --config " + tmp / "bad.cfg").code == 2);
}

TEST_CASE("accuracy writes csv and manifest") {
    TempDir tmp;
    const auto r = cli("accuracy --methods gravilon,adam --trials 2 --steps 20 --eval-every 10" + kSmall +
                       "--out " + tmp / "acc.csv");
    REQUIRE(r.code == 0);
    CHECK(r.out.rfind("method,trials,failed,mean_final_acc", 0) == 0);
    CHECK(count_lines(r.out) == 3);

    const auto csv = slurp(tmp / "acc.csv");
    CHECK(csv.rfind("method,seed,steps_run,steps_to_target,final_test_acc,best_test_acc,failed\n", 0) == 0);
    CHECK(count_lines(csv) == 5);
    CHECK(csv.find("\ngravilon,1,20,,") != std::string::npos);

    const auto manifest = slurp(tmp / "acc.csv.manifest");
    CHECK(manifest.find("mode=accuracy\n") != std::string::npos);
    CHECK(manifest.find("steps=20\n") != std::string::npos);
    CHECK(manifest.find("methods=gravilon,adam\n") != std::string::npos);
}

TEST_CASE("config file values yield to flags") {
    TempDir tmp;
    std::ofstream(tmp / "run.cfg") << "# small run\nmethods=gravilon\ntrials=3\nsteps=10\nsynthetic=true\n"
                                   << "synthetic-count=1200\nbatch=32\neval-subset=200\n";
    const auto r = cli("accuracy --config " + tmp / "run.cfg" + " --trials 1 --out " + tmp / "c.csv");
    REQUIRE(r.code == 0);
    const auto csv = slurp(tmp / "c.csv");
    CHECK(count_lines(csv) == 2);
    CHECK(csv.find("\ngravilon,0,10,,") != std::string::npos);
    CHECK(slurp(tmp / "c.csv.manifest").find("trials=1\n") != std::string::npos);

    std::ofstream(tmp / "unknown.cfg") << "learning-rate=3\n";
    CHECK(cli("accuracy --synthetic --config " + tmp / "unknown.cfg").code == 1);
}

TEST_CASE("steps mode reports steps to target") {
    TempDir tmp;
    const auto r = cli("steps --methods gravilon --trials 1 --target 0.5 --cap 300" + kSmall + "--out " +
                       tmp / "s.csv");
    REQUIRE(r.code == 0);
    CHECK(r.out.find("mean_steps_capped") != std::string::npos);
    const auto csv = slurp(tmp / "s.csv");
    const auto row = csv.substr(csv.find('\n') + 1);
    CHECK(row.find("gravilon,0,") == 0);
    CHECK(row.find(",,") == std::string::npos);  // steps_to_target present
}

TEST_CASE("diverging trials exit 3") {
    TempDir tmp;
    const auto r = cli("accuracy --methods sgd:1e308 --trials 1 --steps 20" + kSmall + "--out " + tmp / "d.csv");
    CHECK(r.code == 3);
    const auto csv = slurp(tmp / "d.csv");
    CHECK(csv.find(",,,1\n") != std::string::npos);
}

TEST_CASE("testbed and gradcheck") {
    const auto t = cli("testbed --objective quadratic --method gravilon --x0 1 --max-steps 3");
    REQUIRE(t.code == 0);
    CHECK(t.out == "step,f,beta,x0\n0,1,0.25,1\n1,0.25,0.25,0.5\n2,0.0625,0.25,0.25\n3,0.015625,,0.125\n");

    const auto g = cli("gradcheck --seed 3 --samples 20 --batch 4");
    REQUIRE(g.code == 0);
    const auto pos = g.out.find("max_relative_error=");
    REQUIRE(pos != std::string::npos);
    CHECK(g.out.find("coordinates=20") == 0);
    CHECK(std::stod(g.out.substr(pos + 19)) <= 1e-6);
}
