#include <doctest.h>

#include <json.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "droopgrid/io.hpp"

namespace fs = std::filesystem;
using droopgrid::read_text_file;
using droopgrid::write_text_file;

namespace {

struct Result {
    int code = -1;
    std::string out;
    std::string err;
};

class Sandbox {
public:
    Sandbox() : dir_(fs::temp_directory_path() / ("droopgrid-cli-" + std::to_string(::getpid())))
    {
        fs::create_directories(dir_);
    }
    ~Sandbox() { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    Result run(const std::string& args) const
    {
        const auto out = path("stdout.txt");
        const auto err = path("stderr.txt");
        const std::string cmd = std::string("\"") + DROOPGRID_CLI_PATH + "\" " + args + " >\"" + out + "\" 2>\"" + err + "\"";
        const int status = std::system(cmd.c_str());
        Result r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.out = read_text_file(out);
        r.err = read_text_file(err);
        return r;
    }

private:
    fs::path dir_;
};

} // namespace

TEST_CASE("cli: validating a broken case reports the field path")
{
    Sandbox box;
    write_text_file(box.path("broken.json"), R"({
  "meta": {"name": "broken"},
  "buses": [
    {"id": 1, "kind": "inverter", "p0_net": 0, "q0_net": 0, "d1": -5, "d2": 10, "t1": 0.1, "t2": 1, "v0": 1},
    {"id": 2, "kind": "load", "p0_net": -0.1, "q0_net": 0}
  ],
  "lines": [{"from": 1, "to": 2, "r": 0.01, "x": 0.1}]
})");
    const auto r = box.run("case validate " + box.path("broken.json"));
    CHECK(r.code == 2);
    CHECK(r.err.rfind("error: input: ", 0) == 0);
    CHECK(r.err.find("buses[0].d1") != std::string::npos);

    const auto ok = box.run("case validate ieee9");
    CHECK(ok.code == 0);
    CHECK(ok.out.rfind("ok: ieee9-lossy-radial (9 buses, 8 lines)", 0) == 0);

    const auto missing = box.run("case validate " + box.path("nope.json"));
    CHECK(missing.code == 2);
}

TEST_CASE("cli: usage errors")
{
    Sandbox box;
    CHECK(box.run("").code == 2);
    const auto r = box.run("stability ieee9 --alpha sideways");
    CHECK(r.code == 2);
    CHECK(r.err.rfind("error: input: ", 0) == 0);
    const auto u = box.run("simulate ieee9 --no-such-flag");
    CHECK(u.code == 2);
    CHECK(u.err.rfind("error: usage: ", 0) == 0);
}

TEST_CASE("cli: stability on the builtin case")
{
    Sandbox box;
    const auto r = box.run("stability ieee9 --alpha auto");
    CHECK(r.code == 0);
    const auto doc = nlohmann::json::parse(r.out);
    CHECK(doc["theorem1"]["verdict"] == "stable");
    CHECK(doc["theorem2"]["verdict"] == "stable");
    CHECK(doc["zero_modes"] == 1);

    const auto t = box.run("stability ieee9 -o " + box.path("report.json"));
    CHECK(t.code == 0);
    CHECK(t.out.find("verdict              stable") != std::string::npos);
    CHECK(nlohmann::json::parse(read_text_file(box.path("report.json")))["full_stable"] == true);

    const auto tight = box.run("stability ieee9 --max-angle-deg 1");
    CHECK(tight.code == 0);
    CHECK(nlohmann::json::parse(tight.out)["assumptions"]["angle_ok"] == false);
}

TEST_CASE("cli: equilibrium then smallsignal with matrix dumps")
{
    Sandbox box;
    const auto eq = box.run("equilibrium ieee9 -o " + box.path("eq.json"));
    REQUIRE(eq.code == 0);
    const auto doc = nlohmann::json::parse(read_text_file(box.path("eq.json")));
    CHECK(doc["v"][3].get<double>() == doctest::Approx(0.9780).epsilon(5e-4));

    const auto ss = box.run("smallsignal ieee9 --eq " + box.path("eq.json") + " --alpha auto -o "
                            + box.path("ss.json") + " --dump-matrices " + box.path("mats"));
    REQUIRE(ss.code == 0);
    const auto j = read_text_file(box.path("mats/J.csv"));
    CHECK(j.rfind("# matrix J n=27\n", 0) == 0);
    CHECK(std::count(j.begin(), j.end(), '\n') == 28);
    for (const char* name : {"J_A", "J_V", "L1", "L2", "L_lp"})
        CHECK(fs::exists(box.path(std::string("mats/") + name + ".csv")));
    const auto report = nlohmann::json::parse(read_text_file(box.path("ss.json")));
    CHECK(report["coupling"]["offblock_ratio"].get<double>() <= 0.1);

    // recalibrating from the solved point keeps the case consistent
    const auto again = box.run("equilibrium ieee9 --calibrate-from " + box.path("eq.json"));
    CHECK(again.code == 0);
}

TEST_CASE("cli: short simulation writes the trajectory CSV")
{
    Sandbox box;
    write_text_file(box.path("perturb.json"), R"({"dv": {"2": 0.02}})");
    const std::string args = "simulate ieee9 --perturb " + box.path("perturb.json")
        + " --t-end 0.1 --dt 1e-4 --output-dt 0.01 -o ";
    const auto a = box.run(args + box.path("a.csv"));
    REQUIRE(a.code == 0);
    const auto b = box.run(args + box.path("b.csv"));
    REQUIRE(b.code == 0);
    const auto csv = read_text_file(box.path("a.csv"));
    CHECK(csv == read_text_file(box.path("b.csv")));
    CHECK(csv.rfind("t,theta_1,", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 12);
}

TEST_CASE("cli: outputs are byte-identical across runs")
{
    Sandbox box;
    const auto a = box.run("stability ieee9 --timestamp --deterministic");
    const auto b = box.run("stability ieee9 --timestamp --deterministic");
    CHECK(a.out == b.out);
    CHECK(a.out.find("generated_at") == std::string::npos);
    const auto stamped = box.run("stability ieee9 --timestamp");
    CHECK(stamped.out.find("generated_at") != std::string::npos);

    CHECK(box.run("case gen --base ieee9 --rx-mean 0.7 --rx-std 0.02 --seed 4 -o " + box.path("g1.json")).code == 0);
    CHECK(box.run("case gen --base ieee9 --rx-mean 0.7 --rx-std 0.02 --seed 4 -o " + box.path("g2.json")).code == 0);
    CHECK(read_text_file(box.path("g1.json")) == read_text_file(box.path("g2.json")));
    CHECK(box.run("case validate " + box.path("g1.json")).code == 0);
}

TEST_CASE("cli: short sweep summary")
{
    Sandbox box;
    const auto r = box.run("sweep ieee9 --param T2 --values 0.1,0.2 --t-end 2 -o " + box.path("sweep.csv"));
    CHECK((r.code == 0 || r.code == 1));
    const auto csv = read_text_file(box.path("sweep.csv"));
    CHECK(csv.rfind("param_value,bus,signal,settling_time_s,converged\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * 9 * 2);
}

TEST_CASE("cli: help documents the defaults")
{
    Sandbox box;
    const auto top = box.run("--help");
    CHECK(top.code == 0);
    for (const char* sub : {"case", "equilibrium", "smallsignal", "stability", "simulate", "sweep"})
        CHECK(top.out.find(sub) != std::string::npos);

    const auto sim = box.run("simulate --help");
    CHECK(sim.code == 0);
    CHECK(sim.out.find("0.0001") != std::string::npos);
    CHECK(sim.out.find("rk4") != std::string::npos);
    CHECK(sim.out.find("30") != std::string::npos);

    const auto sw = box.run("sweep --help");
    CHECK(sw.code == 0);
    CHECK(sw.out.find("0.02") != std::string::npos);
    CHECK(sw.out.find("DROOPGRID_THREADS") != std::string::npos);
}
