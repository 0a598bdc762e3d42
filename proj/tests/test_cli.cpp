#include "solarst/csv_io.hpp"

#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace {

struct Scratch {
    fs::path root;
    Scratch()
    {
        root = fs::temp_directory_path() / ("solarst_cli_" + std::to_string(::getpid()));
        fs::remove_all(root);
        fs::create_directories(root);
    }
    ~Scratch() { fs::remove_all(root); }
    std::string dir(const std::string& name) const { return (root / name).string(); }
};

int run(const std::string& args, const std::string& stdout_path = "/dev/null")
{
    const std::string cmd = std::string(SOLARST_CLI_PATH) + " " + args + " > " + stdout_path + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<std::vector<std::string>> rows(const std::string& path)
{
    std::ifstream in(path);
    std::vector<std::vector<std::string>> out;
    for (std::string line; std::getline(in, line);)
        out.push_back(solarst::split_csv_line(line));
    return out;
}

std::string data_args(const std::string& dir)
{
    return "--measurements " + dir + "/measurements.csv --layout " + dir + "/layout.csv";
}

} // namespace

TEST_CASE("cli simulate")
{
    Scratch s;
    SUBCASE("byte-reproducible")
    {
        REQUIRE(run("simulate --seed 4 --out " + s.dir("a")) == 0);
        REQUIRE(run("simulate --seed 4 --out " + s.dir("b")) == 0);
        REQUIRE(run("simulate --seed 5 --out " + s.dir("c")) == 0);
        for (const char* f : {"measurements.csv", "layout.csv"})
            CHECK(slurp(s.dir("a") + "/" + f) == slurp(s.dir("b") + "/" + f));
        const std::string first_run = slurp(s.dir("a") + "/run.json");
        REQUIRE(run("simulate --seed 4 --out " + s.dir("a")) == 0);
        CHECK(slurp(s.dir("a") + "/run.json") == first_run);
        CHECK(slurp(s.dir("a") + "/measurements.csv") != slurp(s.dir("c") + "/measurements.csv"));
        const auto m = rows(s.dir("a") + "/measurements.csv");
        CHECK(m.front() == std::vector<std::string>{"timestamp", "sensor_id", "value"});
        CHECK(m.size() == 1 + 16 * 144);
        const auto run_json = nlohmann::json::parse(slurp(s.dir("a") + "/run.json"));
        CHECK(run_json["command"] == "simulate");
        CHECK(run_json["options"]["seed"] == "4");
        CHECK(run_json["rng"] == "mt19937_64 + Box-Muller");
    }
    SUBCASE("EXPAR(2) series")
    {
        REQUIRE(run("simulate --mode expar2 --out " + s.dir("e")) == 0);
        const auto m = rows(s.dir("e") + "/measurements.csv");
        CHECK(m.size() == 501);
        CHECK(m[1][1] == "X");
        const auto l = rows(s.dir("e") + "/layout.csv");
        CHECK(l.size() == 2);
    }
    SUBCASE("configuration file with command-line precedence")
    {
        const std::string cfg = s.dir("sim.cfg");
        std::ofstream(cfg) << "# comment\nseed = 4\nregime = overcast\n";
        REQUIRE(run("simulate --config " + cfg + " --regime partly_cloudy --out " + s.dir("f")) == 0);
        REQUIRE(run("simulate --seed 4 --out " + s.dir("g")) == 0);
        CHECK(slurp(s.dir("f") + "/measurements.csv") == slurp(s.dir("g") + "/measurements.csv"));
    }
    SUBCASE("usage errors")
    {
        CHECK(run("simulate --mode spiral --out " + s.dir("x")) == 2);
        CHECK(run("nonsense") == 2);
        CHECK(run("--help") == 0);
    }
}

TEST_CASE("cli model commands")
{
    Scratch s;
    REQUIRE(run("simulate --seed 2 --out " + s.dir("data")) == 0);
    const std::string data = data_args(s.dir("data"));

    SUBCASE("fit writes a decomposition that adds up")
    {
        for (const char* model : {"fcar", "sar", "separable-st", "separable-ts", "fcsar"}) {
            const std::string out = s.dir(std::string("fit_") + model);
            REQUIRE(run("fit " + data + " --model " + model + " --out " + out) == 0);
            const auto plot = rows(out + "/plot_data.csv");
            const auto res = rows(out + "/residuals.csv");
            CHECK(plot.front() == std::vector<std::string>{"t", "sensor", "observed", "fitted"});
            CHECK(res.front() == std::vector<std::string>{"t", "sensor", "residual"});
            REQUIRE(plot.size() == res.size());
            double worst = 0.0;
            for (std::size_t i = 1; i < plot.size(); ++i) {
                const double o = std::stod(plot[i][2]), f = std::stod(plot[i][3]), r = std::stod(res[i][2]);
                worst = std::max(worst, std::abs(f + r - o));
            }
            CHECK(worst < 1e-12);
            CHECK(fs::exists(out + "/fit.json"));
            const auto j = nlohmann::json::parse(slurp(out + "/run.json"));
            CHECK(j["options"]["model"] == model);
        }
    }
    SUBCASE("fit is byte-reproducible")
    {
        REQUIRE(run("fit " + data + " --model fcsar --out " + s.dir("r1")) == 0);
        REQUIRE(run("fit " + data + " --model fcsar --threads 3 --out " + s.dir("r2")) == 0);
        for (const char* f : {"fit.json", "residuals.csv", "plot_data.csv"})
            CHECK(slurp(s.dir("r1") + "/" + f) == slurp(s.dir("r2") + "/" + f));
    }
    SUBCASE("invalid model order")
    {
        CHECK(run("fit " + data + " --model fcsar --b 0 --out " + s.dir("bad")) == 2);
        CHECK(run("fit " + data + " --p 1 --d 2 --out " + s.dir("bad")) == 2);
    }
    SUBCASE("cross-validation")
    {
        REQUIRE(run("crossval " + data + " --k 1 --out " + s.dir("cv")) == 0);
        const auto fig = rows(s.dir("cv") + "/fig8.csv");
        REQUIRE(fig.size() == 2);
        CHECK(fig[0] == std::vector<std::string>{"label", "k", "ratio"});
        CHECK(fig[1][1] == "1");
        CHECK(std::stod(fig[1][2]) > 0.0);
        CHECK(rows(s.dir("cv") + "/crossval.csv").size() == 17);
    }
    SUBCASE("diagnostic")
    {
        REQUIRE(run("diagnose " + data + " --label day1 --out " + s.dir("dg")) == 0);
        const auto t = rows(s.dir("dg") + "/table1.csv");
        REQUIRE(t.size() == 2);
        CHECK(t[1][0] == "day1");
        const auto j = nlohmann::json::parse(slurp(s.dir("dg") + "/diagnostic.json"));
        CHECK(j["verdict"].is_string());
    }
}

TEST_CASE("cli window report")
{
    Scratch s;
    REQUIRE(run("simulate --regime overcast --dt 30 --seed 6 --out " + s.dir("data")) == 0);
    REQUIRE(run("report " + data_args(s.dir("data")) + " --label d --out " + s.dir("rep")) == 0);
    const auto t = rows(s.dir("rep") + "/table2.csv");
    REQUIRE(t.size() == 5);
    CHECK(t[0] == std::vector<std::string>{"label", "window", "rmse", "adj_r2"});
    for (std::size_t i = 1; i < t.size(); ++i) {
        CHECK(t[i][0] == "d");
        CHECK(std::stod(t[i][3]) <= 1.0);
        CHECK(std::stod(t[i][2]) > 0.0);
    }
}
