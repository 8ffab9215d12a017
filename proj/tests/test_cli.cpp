#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>
#include <json.hpp>

#include "msde/cli/runner.hpp"

using namespace msde;
using namespace msde::cli;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("msde-cli-test-" + name);
    fs::remove_all(p);
    return p;
}

std::vector<std::string> problems_of(const std::string& text) {
    try {
        validate_config(text);
    } catch (const ConfigError& e) {
        return e.problems();
    }
    return {};
}

bool mentions(const std::vector<std::string>& problems, const std::string& needle) {
    for (const auto& p : problems)
        if (p.find(needle) != std::string::npos) return true;
    return false;
}

/// Small ref-ou sweep that finishes in a few seconds.
ExperimentConfig small_converge(const fs::path& out) {
    auto c = validate_config(R"(
model: {name: ref-ou}
epsilons: [0.2, 0.1]
grid: {h: 0.01}
mc: {n_paths: 300, seed: 5, workers: 1}
ergodic: {horizon: 200, x_nodes: [[-2, -1, 0, 1, 2, 3, 4]]}
converge: {functionals: [cos, sup-tanh], ks_times: [0.5], aux_paths: 200}
)");
    c.out_dir = out.string();
    return c;
}

int run_binary(const std::string& args) {
    const std::string cmd = std::string(MSDE_CLI_BINARY) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST(Config, MinimalConfigIsFullyPopulated) {
    const auto c = validate_config("model: {name: ref-ou}\n");
    EXPECT_EQ(c.model, "ref-ou");
    EXPECT_EQ(c.epsilons, (std::vector<double>{0.2, 0.05, 0.0125}));
    EXPECT_EQ(c.n_paths, 20000u);
    EXPECT_EQ(c.seed, 1u);
    EXPECT_EQ(c.workers, default_workers());
    EXPECT_EQ(c.h, 1e-3);
    EXPECT_EQ(c.nu, 20.0);
    ASSERT_EQ(c.x_nodes.size(), 1u);
    EXPECT_EQ(c.x_nodes[0].size(), 9u);
    EXPECT_EQ(c.frozen_x, (std::vector<double>{1.0}));
    EXPECT_FALSE(c.option);
    EXPECT_EQ(validate_config("").model, "ref-ou");
}

TEST(Config, LsvPriceNodesArePositive) {
    const auto c = validate_config("model: {name: lsv-tanh}\n");
    ASSERT_EQ(c.x_nodes.size(), 1u);
    for (double s : c.x_nodes[0]) EXPECT_GT(s, 0.0);
    EXPECT_TRUE(mentions(problems_of("model: {name: lsv-tanh}\nergodic: {x_nodes: [[0, 1]]}\n"), "x_nodes"));
}

TEST(Config, EpsilonOutOfRangeNamesField) {
    const auto p = problems_of("epsilons: [1.5, 0.1]\n");
    ASSERT_FALSE(p.empty());
    EXPECT_TRUE(mentions(p, "epsilons"));
    EXPECT_TRUE(mentions(problems_of("epsilons: [0.05, 0.2]\n"), "decreasing"));
}

TEST(Config, UnknownModelListsCatalog) {
    const auto p = problems_of("model: {name: heston}\n");
    ASSERT_EQ(p.size(), 1u);
    for (const auto& name : catalog::system_names()) EXPECT_NE(p[0].find(name), std::string::npos) << name;
}

TEST(Config, UnknownKeysAreErrors) {
    EXPECT_TRUE(mentions(problems_of("mc: {n_path: 100}\n"), "n_path"));
    EXPECT_TRUE(mentions(problems_of("colour: red\n"), "colour"));
    EXPECT_FALSE(problems_of("model: {name: ref-ou, params: {kappa: 1}}\n").empty());
}

TEST(Config, ErrorsAreCollected) {
    const auto p = problems_of("epsilons: [1.5]\nmc: {n_paths: 10}\ngrid: {h: -1}\n");
    EXPECT_GE(p.size(), 3u);
    EXPECT_TRUE(mentions(p, "n_paths"));
    EXPECT_TRUE(mentions(p, "grid.h"));
}

TEST(Config, MissingCapIsRejected) {
    const auto p = problems_of("model: {name: lsv-tanh}\noption: {kind: european, payoff: call, strike: 1}\n");
    EXPECT_TRUE(mentions(p, "cap"));
    EXPECT_TRUE(mentions(problems_of("model: {name: lsv-tanh}\noption: {cap: 2, maturity: 2}\n"), "maturity"));
}

TEST(Config, MalformedTextIsConfigError) { EXPECT_THROW(validate_config("model: [unclosed\n"), ConfigError); }

TEST(Config, OutputDirectoryPrecedence) {
    ::unsetenv("MSDE_OUT_DIR");
    EXPECT_EQ(validate_config("").out_dir, default_out_dir);
    ::setenv("MSDE_OUT_DIR", "/tmp/from-env", 1);
    EXPECT_EQ(validate_config("").out_dir, "/tmp/from-env");
    EXPECT_EQ(validate_config("output: {dir: /tmp/from-file}\n").out_dir, "/tmp/from-file");
    ::unsetenv("MSDE_OUT_DIR");
}

TEST(Config, HashTracksEveryField) {
    const auto base = validate_config("model: {name: ref-ou}\n");
    EXPECT_EQ(config_hash(base), config_hash(validate_config("model: {name: ref-ou}\n")));
    EXPECT_EQ(config_hash(base), config_hash(validate_config(effective_yaml(base))));
    std::vector<ExperimentConfig> variants(12, base);
    variants[0].seed = 2;
    variants[1].n_paths = 20001;
    variants[2].epsilons = {0.2, 0.05};
    variants[3].h = 2e-3;
    variants[4].workers = base.workers + 1;
    variants[5].horizon = 300;
    variants[6].x_nodes[0][0] = -10;
    variants[7].functionals = {"tanh"};
    variants[8].model = "ou-linear";
    variants[9].params["rho"] = 0.5;
    variants[10].out_dir = "elsewhere";
    variants[11].verify_scale = 0.2;
    for (std::size_t i = 0; i < variants.size(); ++i) EXPECT_NE(config_hash(variants[i]), config_hash(base)) << i;
}

TEST(Runner, ConvergeArtifactsAndManifest) {
    const auto dir = scratch("converge");
    const auto c = small_converge(dir);
    const auto r = run_experiment(c, "converge");
    ASSERT_TRUE(r.exit_code == exit_ok || r.exit_code == exit_check_failure) << r.exit_code;
    EXPECT_EQ(first_line(slurp(dir / "converge.csv")), ConvergenceReport::csv_header);
    EXPECT_EQ(first_line(slurp(dir / "converge_ks.csv")), "epsilon,time,ks_stat,critical_1pct");
    EXPECT_EQ(first_line(slurp(dir / "converge_fast_moment.csv")), "epsilon,max_second_moment,std_error,time");
    EXPECT_EQ(first_line(slurp(dir / "converge_aux.csv")), ConvergenceReport::aux_csv_header);
    EXPECT_TRUE(fs::exists(dir / "effective_config.yaml"));

    const auto j = nlohmann::json::parse(slurp(dir / "converge_manifest.json"));
    EXPECT_EQ(j["subcommand"], "converge");
    EXPECT_EQ(j["seed"], 5);
    EXPECT_EQ(j["config_hash"].get<std::string>().size(), 16u);
    EXPECT_TRUE(j["versions"].contains("msde"));
    EXPECT_TRUE(j["versions"].contains("compiler"));
    EXPECT_TRUE(j.contains("wall_time_ms"));
    EXPECT_EQ(j["exit_code"], r.exit_code);
    EXPECT_EQ(j["failures"].size(), r.failures.size());
    EXPECT_FALSE(j["checks"].empty());
}

TEST(Runner, ConvergeIsByteIdenticalAcrossWorkersAndReruns) {
    const auto a = scratch("workers-a"), b = scratch("workers-b");
    auto ca = small_converge(a);
    auto cb = small_converge(b);
    cb.workers = 3;
    run_experiment(ca, "converge");
    run_experiment(cb, "converge");
    for (const char* f : {"converge.csv", "converge_ks.csv", "converge_fast_moment.csv", "converge_aux.csv"}) {
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    }
    const auto before = slurp(a / "converge.csv");
    const auto yaml = slurp(a / "effective_config.yaml");
    run_experiment(ca, "converge");
    EXPECT_EQ(slurp(a / "converge.csv"), before);
    EXPECT_EQ(slurp(a / "effective_config.yaml"), yaml);
}

TEST(Runner, FrozenAndAverage) {
    const auto dir = scratch("frozen");
    auto c = validate_config("ergodic: {horizon: 2000, x_nodes: [[0, 1]]}\n");
    c.out_dir = dir.string();
    const auto r = run_experiment(c, "frozen");
    EXPECT_EQ(r.exit_code, exit_ok);
    const auto frozen = slurp(dir / "frozen.csv");
    EXPECT_EQ(first_line(frozen).rfind("component,mean,mean_se,variance,q0.01,", 0), 0u);
    EXPECT_NE(first_line(frozen).find("q0.5"), std::string::npos);
    EXPECT_EQ(first_line(slurp(dir / "frozen_decay.csv")), "lag,autocorrelation");

    const auto ra = run_experiment(c, "average");
    EXPECT_EQ(ra.exit_code, exit_ok);
    EXPECT_EQ(first_line(slurp(dir / "averaged_model.csv")), "t,x_1,bbar_1,sigmabar_11,se_bbar_1,se_abar_11");
    EXPECT_TRUE(fs::exists(dir / "average_manifest.json"));
}

TEST(Runner, PriceTableAndReproducibility) {
    const auto dir = scratch("price");
    auto c = validate_config(R"(
model: {name: lsv-tanh}
epsilons: [0.2, 0.1]
grid: {h: 0.01}
mc: {n_paths: 500, workers: 1}
ergodic: {horizon: 200, x_nodes: [[0.5, 1, 2]]}
option: {kind: european, payoff: call, strike: 1, cap: 2}
)");
    c.out_dir = dir.string();
    const auto r = run_experiment(c, "price");
    ASSERT_TRUE(r.exit_code == exit_ok || r.exit_code == exit_check_failure) << r.exit_code;
    const auto csv = slurp(dir / "price.csv");
    EXPECT_EQ(first_line(csv), PriceTable::csv_header);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);

    c.workers = 2;
    c.out_dir = (dir / "w2").string();
    run_experiment(c, "price");
    EXPECT_EQ(slurp(dir / "w2" / "price.csv"), csv);
}

TEST(Runner, PriceRequiresLsvAndOption) {
    const auto dir = scratch("price-errors");
    auto c = validate_config("mc: {n_paths: 100}\n");
    c.out_dir = dir.string();
    EXPECT_EQ(run_experiment(c, "price").exit_code, exit_config_error);
    c = validate_config("model: {name: lsv-tanh}\nmc: {n_paths: 100}\n");
    c.out_dir = dir.string();
    const auto r = run_experiment(c, "price");
    EXPECT_EQ(r.exit_code, exit_config_error);
    EXPECT_TRUE(mentions(r.failures, "option"));
    EXPECT_FALSE(fs::exists(dir / "price.csv"));
}

TEST(Runner, OverridesAndSubcommandValidated) {
    auto c = validate_config("");
    c.out_dir = scratch("overrides").string();
    c.n_paths = 10;
    EXPECT_EQ(run_experiment(c, "converge").exit_code, exit_config_error);
    c.n_paths = 100;
    c.workers = 0;
    EXPECT_EQ(run_experiment(c, "converge").exit_code, exit_config_error);
    c.workers = 1;
    const auto r = run_experiment(c, "explode");
    EXPECT_EQ(r.exit_code, exit_config_error);
    EXPECT_TRUE(mentions(r.failures, "verify"));
}

TEST(Runner, NumericalFailureExitCode) {
    const auto dir = scratch("blowup");
    auto c = validate_config(R"(
model: {name: constant, params: {mu: 1.0e9}}
epsilons: [0.2]
grid: {h: 0.01}
mc: {n_paths: 100, workers: 1}
ergodic: {horizon: 200, x_nodes: [[0, 1]]}
)");
    c.out_dir = dir.string();
    const auto r = run_experiment(c, "converge");
    EXPECT_EQ(r.exit_code, exit_numerical_failure);
    ASSERT_FALSE(r.failures.empty());
    EXPECT_NE(r.failures[0].find("NumericalBlowup"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir / "converge_manifest.json"));
}

TEST(Binary, VersionAndUsage) {
    EXPECT_EQ(run_binary("--version"), 0);
    EXPECT_EQ(run_binary(""), exit_config_error);
    EXPECT_EQ(run_binary("nonsense"), exit_config_error);
    EXPECT_EQ(run_binary("converge --bogus"), exit_config_error);
}

TEST(Binary, FlagsOverrideConfigFile) {
    const auto dir = scratch("binary");
    fs::create_directories(dir);
    const auto cfg = dir / "config.yaml";
    std::ofstream(cfg) << "epsilons: [0.2]\ngrid: {h: 0.01}\nmc: {n_paths: 100, seed: 3}\n"
                          "ergodic: {horizon: 200, x_nodes: [[0, 1, 2]]}\noutput: {dir: "
                       << (dir / "from-file").string() << "}\n";
    const int code = run_binary("converge --config " + cfg.string() + " --paths 150 --seed 9 --workers 2 --out " +
                                (dir / "from-flag").string());
    EXPECT_TRUE(code == exit_ok || code == exit_check_failure) << code;
    EXPECT_FALSE(fs::exists(dir / "from-file"));
    const auto j = nlohmann::json::parse(slurp(dir / "from-flag" / "converge_manifest.json"));
    EXPECT_EQ(j["seed"], 9);
    EXPECT_EQ(j["workers"], 2);
    EXPECT_NE(slurp(dir / "from-flag" / "effective_config.yaml").find("n_paths: 150"), std::string::npos);
}

TEST(Binary, ConfigErrorsExitTwoBeforeSimulation) {
    const auto dir = scratch("binary-bad");
    fs::create_directories(dir);
    const auto cfg = dir / "bad.yaml";
    std::ofstream(cfg) << "model: {name: lsv-tanh}\noption: {strike: 1}\noutput: {dir: " << (dir / "out").string()
                       << "}\n";
    EXPECT_EQ(run_binary("price --config " + cfg.string()), exit_config_error);
    EXPECT_FALSE(fs::exists(dir / "out" / "price.csv"));
    EXPECT_EQ(run_binary("converge --config " + (dir / "missing.yaml").string()), exit_config_error);
    EXPECT_EQ(run_binary("converge --paths 5 --out " + (dir / "out").string()), exit_config_error);
}

TEST(Binary, VerifyPassesWithDefaults) {
    const auto dir = scratch("verify");
    EXPECT_EQ(run_binary("verify --out " + dir.string()), exit_ok);
    const auto csv = slurp(dir / "verify.csv");
    EXPECT_EQ(first_line(csv), "id,name,passed,wall_ms,detail");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 12);
    const auto j = nlohmann::json::parse(slurp(dir / "verify_manifest.json"));
    EXPECT_EQ(j["exit_code"], 0);
}
