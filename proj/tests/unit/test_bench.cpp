#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <rmlmc/bench/cli.hpp>

using namespace rmlmc;
using namespace rmlmc::bench;
namespace fs = std::filesystem;

namespace {

fs::path scratch() {
    auto p = fs::temp_directory_path() / "rmlmc_test_bench";
    fs::create_directories(p);
    return p;
}

struct Run {
    int code;
    std::string out, err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "rmlmc");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream o, e;
    const int code = cli_entry(int(argv.size()), argv.data(), o, e);
    return {code, o.str(), e.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path write_config(const std::string& name, const std::string& text) {
    const auto p = scratch() / name;
    std::ofstream(p) << text;
    return p;
}

unsigned hw() { return std::max(2u, std::thread::hardware_concurrency()); }

} // namespace

TEST_CASE("benchmark CSV header is stable") {
    const std::string golden =
        "estimator,grid,grid_value,epsilon,tau,J,K,R,q,J_levels,planned_cost,realized_cost,replications,seed,"
        "cdf_threshold,cdf_reference,cdf_mean,cdf_rmse,cdf_rmse_lo,cdf_rmse_hi,quantile_p,quantile_reference,"
        "quantile_mean,quantile_rmse,quantile_rmse_lo,quantile_rmse_hi,quantile_flagged";
    CHECK(csv_header(to_json(BenchmarkRecord{})) == golden);
    const std::string sweep =
        "estimator,tau,budget,epsilon_t1,J_t1,K_t1,R_t1,cost_t1,epsilon_t2,J_t2,K_t2,R_t2,cost_t2,replications,"
        "mse_t1,mse_t2,efficiency,efficiency_lo,efficiency_hi";
    CHECK(csv_header(to_json(TauSweepRecord{})) == sweep);
}

TEST_CASE("records round-trip through JSON text") {
    BenchmarkRecord r;
    r.estimator = "ml2r-t2";
    r.grid = "budget";
    r.grid_value = 1e7;
    r.epsilon = 2.591234567890123e-4;
    r.tau = 25;
    r.J = 428571.4285714286;
    r.K = 16;
    r.R = 2;
    r.q = {0.7123456789012345, 0.2876543210987655};
    r.J_levels = {305292, 123280};
    r.planned_cost = 9999999.999999998;
    r.realized_cost = 1.0000003e7;
    r.replications = 64;
    r.seed = 0xfedcba9876543210ull;
    r.cdf_threshold = 252.7587;
    r.cdf_reference = 0.995;
    r.cdf_mean = 0.9951234;
    r.cdf_rmse = 1.0 / 3.0;
    r.cdf_rmse_lo = 0.1;
    r.cdf_rmse_hi = 0.7;
    r.quantile_p = 0.995;
    r.quantile_reference = 252.76;
    r.quantile_mean = 253.1;
    r.quantile_rmse = 3.3;
    r.quantile_rmse_lo = 2.9;
    r.quantile_rmse_hi = 4.1;
    r.quantile_flagged = 3;
    const auto text = to_json_text({to_json(r)});
    const auto back = benchmark_record_from_json(ojson::parse(text).at(0));
    CHECK(back == r);

    TauSweepRecord s;
    s.estimator = "ml2r";
    s.tau = 75;
    s.epsilon_t1 = 1.234567890123e-4;
    s.J_t1 = 4.73e6 / 3.0;
    s.efficiency = 2.0 / 3.0;
    s.replications = 64;
    CHECK(tau_sweep_record_from_json(ojson::parse(to_json(s).dump())) == s);
}

TEST_CASE("CSV cells") {
    ojson row{{"a", "x,y"}, {"b", std::vector<double>{0.5, 0.25}}, {"c", 3}, {"d", 0.1}};
    CHECK(to_csv({row}) == "a,b,c,d\n\"x,y\",0.5;0.25,3,0.1\n");
}

TEST_CASE("config errors name the offending field") {
    auto bad = [](const json& j) -> std::string {
        try {
            parse_config(j);
        } catch (const ConfigError& e) {
            return e.what();
        }
        return "";
    };
    CHECK(bad(json::object()).find("config.schema_version") != std::string::npos);
    CHECK(bad(json{{"schema_version", 2}}).find("config.schema_version") != std::string::npos);
    CHECK(bad(json{{"schema_version", 1}, {"problem", {{"market", {{"sigma", -0.1}}}}}}).find("config.problem.market.sigma") !=
          std::string::npos);
    CHECK(bad(json{{"schema_version", 1}, {"problem", {{"market", {{"sigma", "high"}}}}}}).find("config.problem.market.sigma") !=
          std::string::npos);
    CHECK(bad(json{{"schema_version", 1}, {"benchmark", {{"replications", 1}}}}).find("config.benchmark.replications") !=
          std::string::npos);
    CHECK(bad(json{{"schema_version", 1}, {"estimators", {"nested", "qmc"}}}).find("config.estimators[1]") != std::string::npos);
    CHECK(bad(json{{"schema_version", 1}, {"bogus", 1}}).find("config.bogus") != std::string::npos);
    CHECK(bad(json{{"schema_version", 1}, {"calibration", {{"K_grid", {16, 8}}}}}).find("config.calibration.K_grid") !=
          std::string::npos);
    CHECK(bad(json{{"schema_version", 1}, {"constants", {{"growth_a", 0.5}}}}).find("config.constants") != std::string::npos);

    const auto cfg = default_config();
    CHECK(cfg.benchmark.replications == 64);
    CHECK(cfg.benchmark.budgets == std::vector<double>{1e7});
    CHECK(cfg.estimators.size() == 5);
    CHECK(cfg.calibration.K_grid == std::vector<std::uint64_t>{8, 16, 32, 64, 128});
}

TEST_CASE("estimator identities") {
    std::vector<std::string> ids;
    for (auto e : all_estimators()) ids.push_back(to_string(e));
    CHECK(ids == std::vector<std::string>{"nested", "ml2r-t2", "mlmc-t2", "ml2r-t1", "mlmc-t1"});
}

TEST_CASE("replications never share a stream") {
    auto cfg = parse_config(json{{"schema_version", 1},
                                 {"benchmark", {{"budgets", {1e5, 1e6, 1e7}}, {"epsilons", {1e-3, 1e-4}}}}});
    const auto seeds = benchmark_replication_seeds(cfg);
    CHECK(seeds.size() == 5 * 5 * 64);
    CHECK(std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() == seeds.size());
    // seed xor index: consecutive replications of one cell differ only in the low bits
    CHECK(replication_seed(1000, 3) == (1000ull ^ 3ull));
}

TEST_CASE("nested estimator is the one-level optimized plan") {
    const auto c = default_config().constants;
    for (double eps : {1e-2, 1e-3, 1e-4}) {
        const auto n = plan_for(EstimatorId::Nested, c, eps, 10);
        OptimizerOptions o;
        o.max_R = 1;
        const auto g = plan_optimized(c, eps, EstimatorKind::ML2R, o);
        CHECK(n.R == 1);
        CHECK(n.K == g.K);
        CHECK(n.J == g.J);
    }
}

TEST_CASE("error statistics") {
    const std::vector<double> est{1.0, 3.0, 1.0, 3.0};
    const auto s = error_summary(est, 2.0);
    CHECK(s.mean == 2.0);
    CHECK(s.mse == 1.0);
    // chi-square quantiles on 3 degrees of freedom
    CHECK(s.rmse_ci.lo == Catch::Approx(std::sqrt(3.0 / 9.348403604496145)).epsilon(1e-9));
    CHECK(s.rmse_ci.hi == Catch::Approx(std::sqrt(3.0 / 0.2157952826238981)).epsilon(1e-9));
    CHECK_THROWS(error_summary({1.0}, 0.0));
    // F(63, 63) upper 5% point is about 1.52
    CHECK_FALSE(significantly_worse(1.5, 64, 1.0, 64));
    CHECK(significantly_worse(1.6, 64, 1.0, 64));
    const auto ci = mse_ratio_ci(2.0, 64, 1.0, 64);
    CHECK(ci.lo < 2.0);
    CHECK(ci.hi > 2.0);
    CHECK(ci.lo * ci.hi == Catch::Approx(4.0).epsilon(1e-9));
    CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == Catch::Approx(1.0));
    CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == Catch::Approx(-1.0));
}

TEST_CASE("small benchmark run") {
    auto cfg = parse_config(json{{"schema_version", 1}, {"benchmark", {{"budgets", {1e6}}, {"replications", 4}}}});
    cfg.threads = hw();
    const AlmModel model(cfg.market, cfg.contract);
    const auto t = resolve_targets(cfg, model);
    CHECK(t.cdf_reference == 0.995);
    CHECK(t.quantile_reference == model.scr_reference(0.005));
    const auto recs = run_benchmark(cfg, model, t);
    REQUIRE(recs.size() == 5);
    for (const auto& r : recs) {
        CHECK(std::fabs(r.realized_cost - r.planned_cost) <= 0.05 * r.planned_cost);
        CHECK(r.planned_cost <= 1e6 * (1 + 1e-9));
        CHECK(r.cdf_rmse_lo <= r.cdf_rmse);
        CHECK(r.cdf_rmse <= r.cdf_rmse_hi);
        CHECK(r.J_levels.size() == std::size_t(r.R));
    }
    // same config, same numbers
    cfg.threads = 1;
    const auto again = run_benchmark(cfg, model, t);
    CHECK(again == recs);
}

TEST_CASE("explicit threshold without a reference is refused") {
    auto cfg = parse_config(json{{"schema_version", 1}, {"target", {{"u", 250.0}}}});
    const AlmModel model(cfg.market, cfg.contract);
    CHECK_THROWS_AS(resolve_targets(cfg, model), ConfigError);
    CHECK_NOTHROW(resolve_targets(cfg, model, false));
}

TEST_CASE("cli: plan") {
    const auto out = scratch() / "plan.json";
    const auto r = run({"plan", "--epsilon", "1e-3", "--tau", "25", "--out", out.string()});
    REQUIRE(r.code == 0);
    const auto j = json::parse(slurp(out));
    StructuralConstants c;
    c.tau = 25;
    const auto p = plan_optimized(c, 1e-3, EstimatorKind::ML2R);
    CHECK(j.at("K").get<double>() == p.K);
    CHECK(j.at("R").get<int>() == p.R);
    CHECK(j.at("J").get<double>() == p.J);
    CHECK(j.at("estimator") == "ml2r-t2");
    CHECK(j.at("mse_proxy").get<double>() == Catch::Approx(1e-6).epsilon(1e-12));
    const auto m = json::parse(slurp(out.string() + ".manifest.json"));
    CHECK(m.at("subcommand") == "plan");
    CHECK(m.at("seed").get<std::uint64_t>() == default_config().seed);
    CHECK(m.at("config_hash").get<std::string>().size() == 16);
    CHECK(m.contains("versions"));
}

TEST_CASE("cli: alm-reference") {
    const auto out = scratch() / "ref.json";
    const auto r = run({"alm-reference", "--out", out.string()});
    REQUIRE(r.code == 0);
    const auto j = json::parse(slurp(out));
    CHECK(std::fabs(j.at("scr_quantile").get<double>() - 252.76) <= 0.01);
    CHECK(j.at("certificate") == true);
    CHECK(fs::exists(out.string() + ".manifest.json"));

    const auto csv = scratch() / "ref.csv";
    REQUIRE(run({"alm-reference", "--format", "csv", "--out", csv.string()}).code == 0);
    CHECK(slurp(csv).rfind("key,value\n", 0) == 0);
}

TEST_CASE("cli: exit codes") {
    CHECK(run({"plan", "--no-such-flag"}).code == 2);
    CHECK(run({"--format", "xml", "plan", "--epsilon", "1e-3"}).code == 2);
    CHECK(run({}).code == 2);
    CHECK(run({"--config", (scratch() / "missing.json").string(), "alm-reference"}).code == 2);

    const auto bad = write_config("bad.json", R"({"schema_version": 1, "problem": {"market": {"sigma": 0}}})");
    const auto b = run({"--config", bad.string(), "alm-reference", "--out", (scratch() / "x.json").string()});
    CHECK(b.code == 2);
    CHECK(b.err.find("config.problem.market.sigma") != std::string::npos);

    const auto o = (scratch() / "p.json").string();
    CHECK(run({"plan", "--budget", "0.5", "--out", o}).code == 3);
    CHECK(run({"plan", "--epsilon", "1e-12", "--estimator", "nested", "--out", o}).code == 4);
    CHECK(run({"plan", "--out", o}).code == 2);
    CHECK(run({"plan", "--epsilon", "1e-3", "--estimator", "qmc", "--out", o}).code == 2);
}

TEST_CASE("cli: estimate runs the joint CDF and quantile estimate") {
    const auto out = scratch() / "est.json";
    const auto r = run({"--seed", "7", "--threads", std::to_string(hw()), "estimate", "--budget", "2e5", "--target",
                        "quantile", "--p", "0.995", "--out", out.string()});
    REQUIRE(r.code == 0);
    const auto j = json::parse(slurp(out));
    CHECK(j.at("seed") == 7);
    CHECK(j.contains("quantile_at_p"));
    CHECK_FALSE(j.contains("cdf_at_u"));
    const double q = j.at("quantile_at_p").at("estimate").get<double>();
    CHECK(q > 150.0);
    CHECK(q < 400.0);
}

TEST_CASE("cli: tau sweep parameters only") {
    const auto cfgp = write_config("sweep.json", R"({"schema_version": 1, "tau_sweep": {"budget": 5e8}})");
    const auto out = scratch() / "sweep.json.out";
    const auto r = run({"--config", cfgp.string(), "--format", "json", "tau-sweep", "--plans-only", "--out", out.string()});
    REQUIRE(r.code == 0);
    const auto j = json::parse(slurp(out));
    REQUIRE(j.size() == 5);
    const int R2[] = {3, 2, 2, 2, 2};
    const double K2[] = {10, 38, 39, 41, 43};
    for (int i = 0; i < 5; ++i) {
        CHECK(j[i].at("R_t1") == 4);
        CHECK(j[i].at("K_t1").get<double>() == 10);
        CHECK(j[i].at("R_t2").get<int>() == R2[i]);
        CHECK(j[i].at("K_t2").get<double>() == K2[i]);
    }
}

TEST_CASE("cli: calibration report feeds the planner") {
    const auto rep = scratch() / "cal.json";
    const auto r = run({"--threads", std::to_string(hw()), "calibrate", "--n-pilot", "20000", "--k-grid", "8,16", "--out",
                        rep.string()});
    REQUIRE(r.code == 0);
    const auto j = json::parse(slurp(rep));
    CHECK(j.at("rows").size() == 2);
    const auto cfgp = write_config("with_cal.json", R"({"schema_version": 1, "constants_file": ")" + rep.generic_string() + R"("})");
    const auto out = scratch() / "plan_cal.json";
    CHECK(run({"--config", cfgp.string(), "plan", "--epsilon", "1e-3", "--out", out.string()}).code == 0);
}

TEST_CASE("shipped configuration parses to the built-in defaults") {
    const auto cfg = load_config(std::string(RMLMC_SOURCE_DIR) + "/configs/default.json");
    const auto def = default_config();
    CHECK(cfg.seed == def.seed);
    CHECK(cfg.market.sigma == def.market.sigma);
    CHECK(cfg.contract.T == def.contract.T);
    CHECK(cfg.constants.c1 == def.constants.c1);
    CHECK(cfg.constants.V1 == def.constants.V1);
    CHECK(cfg.calibration.K_grid == def.calibration.K_grid);
    CHECK(cfg.benchmark.budgets == std::vector<double>{1e5, 1e6, 1e7});
}
