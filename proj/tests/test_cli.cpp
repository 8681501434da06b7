#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path& workdir() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / ("esscoord_cli_" + std::to_string(::getpid()));
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

int cli(const std::string& args, const std::string& out = "out.txt") {
    const std::string cmd = std::string(ESSCOORD_CLI_PATH) + " " + args + " > " + (workdir() / out).string() + " 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const std::string& name) {
    std::ifstream in(workdir() / name, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string at(const std::string& name) { return (workdir() / name).string(); }

}  // namespace

TEST_CASE("usage errors") {
    CHECK(cli("") == 2);
    CHECK(cli("run --bogus") == 2);
    CHECK(cli("frobnicate") == 2);
    CHECK(cli("run --scenario scenario2 --horizon 5") == 2);
    CHECK(slurp("out.txt").find("seed") != std::string::npos);
}

TEST_CASE("missing files and bad values") {
    CHECK(cli("run --scenario " + at("nope.cfg")) == 3);
    CHECK(cli("run --scenario scenario1 --fleet " + at("missing.csv")) == 3);
    CHECK(cli("run --scenario scenario1 --mode smart") == 4);
    CHECK(cli("run --scenario scenario1 --horizon 0") == 4);
    std::ofstream(workdir() / "bad.feeder") << "v0=1 alpha=-0.02 beta=0.02\n0 1 0.01 0.01\n1 2 0.01\n";
    CHECK(cli("validate-feeder " + at("bad.feeder")) == 4);
    CHECK(slurp("out.txt").find("line 3") != std::string::npos);
}

TEST_CASE("run writes metrics and trajectories") {
    REQUIRE(cli("run --scenario scenario1 --horizon 40 --trajectory " + at("a.csv") + " --metrics " + at("a.txt")) ==
            0);
    REQUIRE(cli("run --scenario scenario1 --horizon 40 --trajectory " + at("b.csv") + " --metrics " + at("b.txt")) ==
            0);
    CHECK(slurp("a.csv") == slurp("b.csv"));
    CHECK(slurp("a.txt") == slurp("b.txt"));
    CHECK(slurp("a.csv").rfind("# esscoord trajectory v1 ", 0) == 0);
    CHECK(slurp("a.txt").find("periods=40") != std::string::npos);
}

TEST_CASE("backends give byte-identical distributed trajectories") {
    const std::string common = "run --scenario scenario2 --seed 3 --horizon 15 --solver distributed --random-tree";
    REQUIRE(cli(common + " --backend serial --trajectory " + at("s.csv")) == 0);
    REQUIRE(cli(common + " --backend openmp --trajectory " + at("p.csv")) == 0);
    CHECK(slurp("s.csv") == slurp("p.csv"));
}

TEST_CASE("solve-step compares the two solvers") {
    REQUIRE(cli("solve-step --scenario scenario2 --seed 8 --period 3 --compare") == 0);
    const auto out = slurp("out.txt");
    CHECK(out.find("within_1e-6=true") != std::string::npos);
    CHECK(out.find("converged=true") != std::string::npos);
}

TEST_CASE("tune and validate-feeder") {
    REQUIRE(cli("tune --scenario scenario2") == 0);
    CHECK(slurp("out.txt").find("k_star=") != std::string::npos);
    CHECK(cli("validate-feeder " + std::string(ESSCOORD_DATA_DIR) + "/feeders/ieee34_synth.feeder") == 0);
    CHECK(cli("validate-feeder " + std::string(ESSCOORD_DATA_DIR) + "/feeders/ieee34_synth.feeder --limit 1e-12") == 4);
}
