#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "bsee/scenario.hpp"
#include "bsee/verification.hpp"

using namespace bsee;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("strict config parsing") {
    const std::string base =
        "[space]\ndim = 2\nnorm_exponent = 2\nmoment_exponent = 2\n"
        "[time]\nhorizon = 1.0\nsteps = 8\n"
        "[terminal]\nname = constant\nvalue = 1, 0\n"
        "[solver]\nmethod = a0\n";
    auto cfg = parse_scenario_config(base);
    CHECK(cfg.dim == 2);
    CHECK(cfg.method == "a0");
    CHECK(cfg.model_kind == "tree");
    CHECK(cfg.delta == Catch::Approx(1.0));

    CHECK_THROWS_AS(parse_scenario_config(base + "[space]\nfoo = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_scenario_config(base + "[nosuch]\nx = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_scenario_config(base + "[time]\nsteps = 8\n"), ConfigError);  // dup
    CHECK_THROWS_AS(parse_scenario_config("dim = 2\n"), ConfigError);  // key before section

    // out-of-range values fail with the offending field named
    try {
        parse_scenario_config(
            "[space]\ndim = 2\nnorm_exponent = 1\nmoment_exponent = 2\n"
            "[time]\nhorizon = 1\nsteps = 8\n[terminal]\nname = constant\n"
            "[solver]\nmethod = a0\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("[space]") != std::string::npos);
    }

    // driver depending on (U,V) needs the picard method
    CHECK_THROWS_AS(
        parse_scenario_config("[space]\ndim = 2\nnorm_exponent = 2\nmoment_exponent = 2\n"
                              "[time]\nhorizon = 1\nsteps = 8\n"
                              "[driver]\nname = affine\na = 0.5\n"
                              "[terminal]\nname = constant\n[solver]\nmethod = linear\n"),
        ConfigError);
}

TEST_CASE("builtin catalog loads and validates") {
    for (const auto& [name, text] : builtin_scenarios()) {
        auto cfg = load_scenario(name);
        CHECK(cfg.name == name);
        CHECK(cfg.dim >= 1);
    }
    CHECK_THROWS_AS(load_scenario("no_such_scenario_or_file"), ConfigError);
}

TEST_CASE("a0_wiener_linear run matches the martingale closed form") {
    auto res = run_scenario(load_scenario("a0_wiener_linear"));
    const StochasticModel& m = *res.model;
    // t = 0 row: E||U|| = 0, E||V|| = ||x|| = 1
    CHECK(lp_moment(res.sol.U.at(0), res.space) <= 1e-12);
    CHECK(lp_moment(res.sol.V.at(0), res.space) == Catch::Approx(1.0).margin(1e-12));
    for (double r : res.residual_profile) CHECK(r <= 1e-10);
    CHECK(m.steps() == 8);
}

TEST_CASE("csv and manifest emission round trip") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "bsee_scn_test";
    fs::create_directories(dir);

    auto res = run_scenario(load_scenario("a0_wiener_linear"));
    write_solution_csv(dir / "solution.csv", res);
    write_manifest(dir / "manifest.json", res);
    write_nodes_csv(dir / "nodes.csv", res);

    const std::string csv = slurp(dir / "solution.csv");
    CHECK(csv.rfind("t,mean_norm_U,mean_norm_V,residual_t\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 10);  // header + 9 rows

    auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
    CHECK(manifest["scenario"] == "a0_wiener_linear");
    CHECK(manifest["residual_max"].get<double>() <= 1e-10);
    CHECK(manifest["config_hash"].get<std::string>().size() == 16);

    // determinism: a second run is byte-identical on the tree
    auto res2 = run_scenario(load_scenario("a0_wiener_linear"));
    write_solution_csv(dir / "solution2.csv", res2);
    CHECK(slurp(dir / "solution2.csv") == csv);

    fs::remove_all(dir);
}

TEST_CASE("picard_decay_aU approaches the closed form as N grows") {
    auto cfg = load_scenario("picard_decay_aU");
    auto cf = closed_form_for(cfg);
    REQUIRE(cf.has_value());
    auto table = run_convergence(cfg, {8, 16});
    REQUIRE(table.size() == 2);
    CHECK(table[1].error < table[0].error);
    REQUIRE(table[1].order.has_value());
    CHECK(*table[1].order >= 0.4);
}

TEST_CASE("zero scenario has identically zero errors") {
    auto table = run_convergence(load_scenario("zero"), {8, 16});
    CHECK(table[0].error == 0.0);
    CHECK(table[1].error == 0.0);
}

TEST_CASE("single-N convergence table has no order entry") {
    auto table = run_convergence(load_scenario("picard_decay_aU"), {8});
    REQUIRE(table.size() == 1);
    CHECK(!table[0].order.has_value());
}

TEST_CASE("scenario without closed form is rejected for convergence") {
    CHECK_THROWS_AS(run_convergence(load_scenario("picard_sin_square"), {8, 16}), ConfigError);
}

TEST_CASE("linear_drift_scalar runs on the path model") {
    auto cfg = load_scenario("linear_drift_scalar");
    auto res = run_scenario(cfg);
    auto cf = closed_form_for(cfg);
    REQUIRE(cf.has_value());
    // N = 8: discretization error dominates; just require the run is sane
    const double err = closed_form_error(res, *cf);
    CHECK(err < 0.5);
    CHECK(err > 0.0);
}

TEST_CASE("verification suites pass and unknown suite is rejected") {
    for (const char* name : {"gamma", "stochastic", "representation", "solvers"}) {
        auto checks = verify::run_suite(name, 5);
        CHECK(!checks.empty());
        for (const auto& c : checks) {
            INFO(c.name << ": " << c.measured << " " << c.relation << " " << c.threshold);
            CHECK(c.pass);
        }
    }
    CHECK_THROWS_AS(verify::run_suite("nope", 1), std::invalid_argument);
}
