#include "cli.hpp"

#include "mrsc/io.hpp"

#include <doctest.h>

#include <filesystem>
#include <sstream>

using namespace mrsc;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result mrsc_cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("mrsc_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string str(const fs::path& p) { return p.string(); }

}  // namespace

TEST_CASE("validate accepts a well-formed two-metric fixture") {
    const auto dir = scratch("valid");
    REQUIRE(mrsc_cli({"generate", "--donors", "12", "--periods", "8", "--t0", "4", "--out", str(dir)}).code == 0);
    const auto r = mrsc_cli({"validate", "--manifest", str(dir / "manifest.json")});
    CHECK(r.code == 0);
    const auto report = io::Json::parse(r.out);
    CHECK(report["valid"] == true);
    CHECK(report["n_units"] == 13);
    CHECK(report["n_periods"] == 8);
    CHECK(report["n_metrics"] == 2);
    CHECK(report["missing_percent"] == 0.0);
}

TEST_CASE("validate reports mismatched and empty inputs") {
    const auto dir = scratch("invalid");
    io::write_text(dir / "a.csv", "unit,1,2,3\nx,1,2,3\ny,4,5,6\n");
    io::write_text(dir / "b.csv", "unit,1,2\nx,1,2\ny,4,5\n");
    io::write_text(dir / "empty.csv", "");
    io::write_text(dir / "mismatch.json",
                   R"({"metrics":[{"name":"a","file":"a.csv"},{"name":"b","file":"b.csv"}]})");
    io::write_text(dir / "empty.json", R"({"metrics":[{"name":"e","file":"empty.csv"}]})");

    const auto mismatch = mrsc_cli({"validate", "--manifest", str(dir / "mismatch.json")});
    CHECK(mismatch.code == 2);
    CHECK(io::Json::parse(mismatch.out)["errors"][0]["code"] == "DimensionMismatch");

    const auto empty = mrsc_cli({"validate", "--manifest", str(dir / "empty.json")});
    CHECK(empty.code == 2);
    CHECK(io::Json::parse(empty.out)["errors"][0]["code"] == "EmptyInput");

    CHECK(mrsc_cli({"validate", "--manifest", str(dir / "missing.json")}).code == 2);
}

TEST_CASE("diagnose writes a report and spectra") {
    const auto dir = scratch("diagnose");
    REQUIRE(mrsc_cli({"generate", "--donors", "30", "--periods", "20", "--noise", "0", "--out",
                      str(dir / "data")})
                .code == 0);
    const auto r = mrsc_cli({"diagnose", "--manifest", str(dir / "data" / "manifest.json"),
                             "--rank-tol", "0", "--out", str(dir / "out")});
    CHECK(r.code == 0);
    const auto report = io::Json::parse(io::read_text(dir / "out" / "diagnostic.json"));
    CHECK(report["passed"] == true);
    CHECK(fs::exists(dir / "out" / "spectra.csv"));

    REQUIRE(mrsc_cli({"generate", "--donors", "30", "--periods", "20", "--noise", "0",
                      "--different-latents", "--out", str(dir / "diff")})
                .code == 0);
    CHECK(mrsc_cli({"diagnose", "--manifest", str(dir / "diff" / "manifest.json"), "--rank-tol",
                    "0", "--out", str(dir / "out2")})
              .code == 0);
    CHECK(io::Json::parse(io::read_text(dir / "out2" / "diagnostic.json"))["passed"] == false);

    REQUIRE(mrsc_cli({"generate", "--donors", "10", "--periods", "6", "--alphas", "0.7", "--out",
                      str(dir / "single")})
                .code == 0);
    CHECK(mrsc_cli({"diagnose", "--manifest", str(dir / "single" / "manifest.json"), "--out",
                    str(dir / "out3")})
              .code == 0);
    const auto single = io::Json::parse(io::read_text(dir / "out3" / "diagnostic.json"));
    CHECK(single["passed"] == true);
    CHECK(single.contains("note"));
}

TEST_CASE("forecast on a noiseless rank-2 fixture, deterministically") {
    const auto dir = scratch("forecast");
    REQUIRE(mrsc_cli({"generate", "--generator", "lowrank", "--donors", "25", "--periods", "20",
                      "--rank", "2", "--t0", "10", "--out", str(dir / "data")})
                .code == 0);
    const auto manifest = str(dir / "data" / "manifest.json");
    for (const char* run : {"a", "b"}) {
        const auto r = mrsc_cli({"forecast", "--manifest", manifest, "--rank", "2", "--horizons",
                                 "1,5", "--out", str(dir / run)});
        REQUIRE(r.code == 0);
    }
    const auto report = io::Json::parse(io::read_text(dir / "a" / "report.json"));
    CHECK(report["post_mse_avg"].get<double>() < 1e-10);
    CHECK(io::read_text(dir / "a" / "report.json") == io::read_text(dir / "b" / "report.json"));
    CHECK(io::read_text(dir / "a" / "forecast.json") == io::read_text(dir / "b" / "forecast.json"));
}

TEST_CASE("forecast with donor masking records rho_hat") {
    const auto dir = scratch("masked");
    REQUIRE(mrsc_cli({"generate", "--donors", "100", "--periods", "30", "--observed-fraction",
                      "0.7", "--seed", "5", "--out", str(dir / "data")})
                .code == 0);
    const auto r = mrsc_cli({"forecast", "--manifest", str(dir / "data" / "manifest.json"),
                             "--rank", "1", "--out", str(dir / "out")});
    REQUIRE(r.code == 0);
    const auto report = io::Json::parse(io::read_text(dir / "out" / "report.json"));
    CHECK(std::abs(report["rho_hat"].get<double>() - 0.7) < 0.05);
}

TEST_CASE("forecast options: weights, band, model reuse, cross-validation") {
    const auto dir = scratch("options");
    REQUIRE(mrsc_cli({"generate", "--donors", "40", "--periods", "20", "--out", str(dir / "data")}).code == 0);
    const auto manifest = str(dir / "data" / "manifest.json");
    CHECK(mrsc_cli({"forecast", "--manifest", manifest, "--rank", "1", "--weights", "1,0.5", "--band",
                    "0.9", "--save-model", str(dir / "model"), "--out", str(dir / "a")})
              .code == 0);
    CHECK(io::Json::parse(io::read_text(dir / "a" / "forecast.json"))["metrics"][0].contains("residual_band"));
    CHECK(mrsc_cli({"forecast", "--manifest", manifest, "--model", str(dir / "model"), "--weights",
                    "1,0.5", "--out", str(dir / "b")})
              .code == 0);
    CHECK(io::Json::parse(io::read_text(dir / "a" / "forecast.json"))["metrics"][0]["forecast"] ==
          io::Json::parse(io::read_text(dir / "b" / "forecast.json"))["metrics"][0]["forecast"]);
    CHECK(mrsc_cli({"forecast", "--manifest", manifest, "--cv", "--out", str(dir / "c")}).code == 0);
    CHECK(io::Json::parse(io::read_text(dir / "c" / "report.json")).contains("cross_validation"));

    CHECK(mrsc_cli({"forecast", "--manifest", manifest, "--weights", "1,2,3"}).code == 2);
    CHECK(mrsc_cli({"forecast", "--manifest", manifest, "--rank", "1", "--energy", "0.9"}).code == 2);
    CHECK(mrsc_cli({"forecast", "--manifest", manifest, "--rank", "999"}).code == 2);
    CHECK(mrsc_cli({"forecast", "--manifest", manifest, "--t0", "20"}).code == 2);
    CHECK(mrsc_cli({"forecast", "--manifest", manifest, "--treatment", "nobody"}).code == 2);
}

TEST_CASE("numerical failures exit with code 3") {
    const auto dir = scratch("numerical");
    // every treatment pre-intervention value missing: nothing to regress on
    io::write_text(dir / "m.csv", "unit,1,2,3,4\nt,,,5,6\na,1,2,3,4\nb,2,3,4,5\n");
    io::write_text(dir / "manifest.json",
                   R"({"metrics":[{"name":"m","file":"m.csv"}],"treatment":"t","t0":2})");
    const auto r = mrsc_cli({"forecast", "--manifest", str(dir / "manifest.json"), "--rank", "1",
                             "--out", str(dir / "out")});
    CHECK(r.code == 3);
    CHECK(r.err.find("NoUsableColumns") != std::string::npos);
}

TEST_CASE("benchmark presets and configs") {
    const auto dir = scratch("benchmark");
    const auto smoke = mrsc_cli({"benchmark", "--preset", "smoke", "--out", str(dir / "smoke")});
    CHECK(smoke.code == 0);
    for (const char* f : {"trials.csv", "summary.json", "plot.csv"}) CHECK(fs::exists(dir / "smoke" / f));

    io::write_text(dir / "config.json",
                   R"({"preset":"rmse-sweep","units":[30],"n_trials":2,"policies":["rank=1","energy=0.9"],
                       "comparators":["mrsc","rsc"]})");
    CHECK(mrsc_cli({"benchmark", "--config", str(dir / "config.json"), "--out", str(dir / "cfg")}).code == 0);
    const auto summary = io::Json::parse(io::read_text(dir / "cfg" / "summary.json"));
    CHECK(summary["aggregates"].size() == 4);

    io::write_text(dir / "bad.json", R"({"unknown_key": 1})");
    CHECK(mrsc_cli({"benchmark", "--config", str(dir / "bad.json")}).code == 2);
    io::write_text(dir / "broken.json", "{");
    CHECK(mrsc_cli({"benchmark", "--config", str(dir / "broken.json")}).code == 2);

    const auto table = mrsc_cli({"benchmark", "--preset", "diagnostic-table", "--trials", "2",
                                 "--out", str(dir / "table")});
    CHECK(table.code == 0);
    const auto json = io::Json::parse(io::read_text(dir / "table" / "rank_table.json"));
    CHECK(json["tables"].size() == 2);
    CHECK(json["tables"][0]["rows"].size() == 4);
}

TEST_CASE("policy strings") {
    CHECK(std::get<FixedRank>(cli::parse_policy("rank=3")).rank == 3);
    CHECK(std::get<EnergyFraction>(cli::parse_policy("energy=0.9")).fraction == 0.9);
    CHECK(std::get<SingularValueCutoff>(cli::parse_policy("lambda=2.5")).lambda == 2.5);
    CHECK_THROWS(cli::parse_policy("rank=1.5"));
    CHECK_THROWS(cli::parse_policy("ridge=1"));
    CHECK_THROWS(cli::parse_policy("energy"));
}

TEST_CASE("usage errors") {
    CHECK(mrsc_cli({}).code == 2);
    CHECK(mrsc_cli({"frobnicate"}).code == 2);
    CHECK(mrsc_cli({"--help"}).code == 0);
}
