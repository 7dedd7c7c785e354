#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include <dcma/harness.hpp>
#include <dcma/torus.hpp>

using namespace dcma;
namespace fs = std::filesystem;

namespace
{

fs::path scratch(const std::string &name)
{
    const auto p = fs::temp_directory_path() / ("dcma_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path &p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

run_config quiet_config(const std::string &sub, const fs::path &out)
{
    run_config c;
    c.subcommand = sub;
    c.out_dir = out.string();
    c.random_count = 4;
    c.torus_n = 16;
    c.torus_random_count = 2;
    return c;
}

int run_quiet(const run_config &c)
{
    std::ostringstream log;
    return run_pipeline(c, log);
}

struct env_guard {
    explicit env_guard(const char *value)
    {
        if (value == nullptr) {
            unsetenv("DCMA_THREADS");
        } else {
            setenv("DCMA_THREADS", value, 1);
        }
    }
    ~env_guard()
    {
        unsetenv("DCMA_THREADS");
    }
};

} // namespace

TEST(torus, zero_right_side_gives_zero)
{
    const torus_grid g{8, 12};
    const std::vector<double> G(g.size(), 0.0), S(g.size(), 1.0);
    for (double v : torus_linear_solve(G, S, g)) {
        EXPECT_EQ(v, 0.0);
    }
}

TEST(torus, single_mode_closed_form)
{
    for (int n : {8, 32, 64}) {
        const torus_grid g{n, n};
        const auto p = torus_single_mode(g);
        const auto phi = torus_linear_solve(p.G, p.S, g);
        for (std::size_t i = 0; i < phi.size(); ++i) {
            EXPECT_NEAR(phi[i], p.exact[i], 1e-12);
        }
        EXPECT_LE(torus_residual(phi, p.G, p.S, g), 1e-10);
    }
}

TEST(torus, oblique_mode_and_rectangular_grid)
{
    // |S|^2 e^G - 1 = cos(2 pi (x + 2 y)) / 2, |k|^2 = 5
    const torus_grid g{16, 24};
    std::vector<double> G(g.size()), S(g.size(), 1.0), want(g.size());
    for (int i = 0; i < g.nx; ++i) {
        for (int j = 0; j < g.ny; ++j) {
            const double c = 0.5 * std::cos(2 * M_PI * (g.x(i) + 2 * g.y(j)));
            G[i * g.ny + j] = std::log1p(c);
            want[i * g.ny + j] = -c / (5 * M_PI * M_PI);
        }
    }
    const auto phi = torus_linear_solve(G, S, g);
    for (std::size_t i = 0; i < phi.size(); ++i) {
        EXPECT_NEAR(phi[i], want[i], 1e-13);
    }
}

TEST(torus, random_admissible_problems)
{
    const torus_grid g{64, 64};
    for (int k = 0; k < 5; ++k) {
        const auto p = torus_random(g, 7, k);
        double mean = 0;
        for (double v : torus_rhs(p.G, p.S, g)) {
            mean += v;
        }
        EXPECT_LT(std::abs(mean / g.size()), 1e-13);
        const auto phi = torus_linear_solve(p.G, p.S, g);
        EXPECT_LE(torus_residual(phi, p.G, p.S, g), 1e-10);
        double phimean = 0;
        for (double v : phi) {
            phimean += v;
        }
        EXPECT_LT(std::abs(phimean / g.size()), 1e-14);
    }
    // a wrong solution has a visible residual
    const auto p = torus_random(g, 7, 0);
    auto phi = torus_linear_solve(p.G, p.S, g);
    phi[5] += 1e-3;
    EXPECT_GT(torus_residual(phi, p.G, p.S, g), 1e-3);
}

TEST(torus, rejects_bad_input)
{
    const torus_grid g{8, 8};
    std::vector<double> G(g.size(), 0.0), S(g.size(), 1.0);
    G[3] = 0.5;
    EXPECT_THROW(torus_linear_solve(G, S, g), solvability_error);
    EXPECT_THROW(torus_linear_solve(std::vector<double>(5), S, g), std::invalid_argument);
    G[3] = NAN;
    EXPECT_THROW(torus_linear_solve(G, S, g), std::invalid_argument);
}

TEST(harness, config_round_trip)
{
    run_config a;
    EXPECT_EQ(config_from_json(config_to_json(a)), a);
    a.subcommand = "run";
    a.stages = {"torus", "green"};
    a.model = "sheared";
    a.seed = 18446744073709551615ull;
    a.tol = 3.3e-11;
    a.alphas = {0.1, 0.2};
    a.gammas = {{0.25, 0.75}};
    a.out_dir = "out/ü";
    const auto text = config_to_json(a).dump();
    EXPECT_EQ(config_from_json(nlohmann::json::parse(text)), a);
    // partial configs keep defaults
    const auto b = config_from_json(nlohmann::json::parse(R"({"seed": 3})"));
    EXPECT_EQ(b.seed, 3u);
    EXPECT_EQ(b.tol, run_config{}.tol);
}

TEST(harness, config_errors)
{
    EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"sede": 3})")), config_error);
    EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"seed": -3})")), config_error);
    EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"random_count": 2.5})")), config_error);
    EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"tol": "small"})")), config_error);
    EXPECT_THROW(config_from_json(nlohmann::json::parse("[1]")), config_error);
    EXPECT_THROW(load_config("/nonexistent/dcma.json"), config_error);

    auto check = [](auto mutate) {
        run_config c;
        mutate(c);
        EXPECT_THROW(finalize_config(c), config_error);
    };
    check([](run_config &c) { c.tol = 0; });
    check([](run_config &c) { c.green_tol = -1; });
    check([](run_config &c) { c.subcommand = "solve"; });
    check([](run_config &c) { c.model = "round"; });
    check([](run_config &c) { c.alphas = {0.5}; });
    check([](run_config &c) {
        c.subcommand = "run";
        c.stages = {"torus", "torus"};
    });
    run_config ok;
    ok.subcommand = "all";
    finalize_config(ok);
    EXPECT_EQ(ok.stages, stage_names());
}

TEST(harness, threads_from_environment)
{
    {
        env_guard e("3");
        EXPECT_EQ(thread_cap(), 3);
    }
    {
        env_guard e("0");
        EXPECT_THROW(thread_cap(), config_error);
        run_config c = quiet_config("torus", scratch("threads"));
        EXPECT_EQ(run_quiet(c), 2);
    }
    {
        env_guard e("4");
        std::vector<int> hit(50, 0);
        parallel_for(50, [&](int i) { hit[i] += 1; });
        for (int h : hit) {
            EXPECT_EQ(h, 1);
        }
        EXPECT_THROW(parallel_for(10, [](int i) {
                         if (i == 7) {
                             throw std::runtime_error("seven");
                         }
                     }),
                     std::runtime_error);
    }
}

TEST(harness, empty_check_list)
{
    const auto out = scratch("empty");
    run_config c = quiet_config("run", out);
    c.stages = {};
    EXPECT_EQ(run_quiet(c), 0);
    const auto j = nlohmann::json::parse(slurp(out / "report.json"));
    EXPECT_EQ(j["schema_version"], report_schema_version);
    EXPECT_EQ(j["check_count"], 0);
    EXPECT_TRUE(j["passed"].get<bool>());
    EXPECT_TRUE(j["families"].empty());
    EXPECT_EQ(config_from_json(j["config"]), c);
}

TEST(harness, one_verdict_one_row)
{
    stage_result s{"torus", {{"single", "torus", true, 1.5, 2.0, "a, \"quoted\" detail"}}, {}};
    const auto csv = checks_csv(s);
    EXPECT_EQ(csv, "check,model,pass,value,threshold,detail\nsingle,torus,1,1.5,2,\"a, \"\"quoted\"\" detail\"\n");
}

TEST(harness, unicode_model_round_trip)
{
    const std::string name = "плоская модель ✓ ∂∂̄φ";
    run_results r;
    r.config.stages = {"torus"};
    r.stages.push_back({"torus", {{"check", name, true, 0, 1, "δ"}}, {}});
    const auto out = scratch("unicode");
    emit_report(r, out.string());
    EXPECT_NE(slurp(out / "torus.csv").find(name), std::string::npos);
    const auto j = nlohmann::json::parse(slurp(out / "report.json"));
    EXPECT_EQ(j["families"][0]["checks"][0]["model"].get<std::string>(), name);
    // invalid UTF-8 is refused rather than written
    r.stages[0].checks[0].model = "\xff\xfe";
    EXPECT_THROW(emit_report(r, scratch("bad_utf8").string()), config_error);
}

TEST(harness, same_seed_same_bytes)
{
    const auto a = scratch("det_a"), b = scratch("det_b");
    for (const auto &out : {a, b}) {
        run_config c = quiet_config("run", out);
        c.stages = {"solve-local", "torus", "estimates"};
        c.out_dir = out.string();
        EXPECT_EQ(run_quiet(c), 0);
    }
    std::set<std::string> names;
    for (const auto &e : fs::directory_iterator(a)) {
        names.insert(e.path().filename().string());
    }
    EXPECT_GE(names.size(), 5u);
    for (const auto &n : names) {
        if (n == "report.json") {
            continue; // echoes out_dir
        }
        EXPECT_EQ(slurp(a / n), slurp(b / n)) << n;
    }
    auto ja = nlohmann::json::parse(slurp(a / "report.json")), jb = nlohmann::json::parse(slurp(b / "report.json"));
    ja["config"].erase("out_dir");
    jb["config"].erase("out_dir");
    EXPECT_EQ(ja, jb);

    // a different seed changes the random suites
    const auto d = scratch("det_d");
    run_config c = quiet_config("torus", d);
    c.seed = 8;
    EXPECT_EQ(run_quiet(c), 0);
    EXPECT_NE(slurp(a / "torus.csv"), slurp(d / "torus.csv"));
}

TEST(harness, unwritable_output_is_a_usage_error)
{
    const auto dir = scratch("blocker");
    fs::create_directories(dir);
    std::ofstream(dir / "file") << "x";
    run_config c = quiet_config("torus", dir / "file" / "sub");
    EXPECT_EQ(run_quiet(c), 2);
}

TEST(harness, corrupted_fixture_names_the_check)
{
    const std::string good = std::string(DCMA_FIXTURE_DIR) + "/cone_mode_reference.csv";
    const auto dir = scratch("fixture");
    fs::create_directories(dir);
    std::string text = slurp(good);
    const auto at = text.find("0.80384189920310086921");
    ASSERT_NE(at, std::string::npos);
    text.replace(at, 4, "0.81");
    std::ofstream(dir / "bad.csv", std::ios::binary) << text;

    run_config c = quiet_config("green", dir / "good_run");
    c.green_modes = 4;
    c.green_samples = 2;
    c.green_reference = good;
    EXPECT_EQ(run_quiet(c), 0);

    c.out_dir = (dir / "bad_run").string();
    c.green_reference = (dir / "bad.csv").string();
    std::ostringstream log;
    EXPECT_EQ(run_pipeline(c, log), 1);
    EXPECT_NE(log.str().find("FAIL green/reference_table"), std::string::npos) << log.str();
    const auto csv = slurp(dir / "bad_run" / "green.csv");
    EXPECT_NE(csv.find("reference_table,cone,0,"), std::string::npos) << csv;
}

TEST(harness, stage_reports_tables)
{
    run_config c = quiet_config("torus", scratch("tables"));
    finalize_config(c);
    const auto s = run_stage("torus", c);
    ASSERT_EQ(s.tables.size(), 1u);
    EXPECT_EQ(s.tables[0].second.substr(0, 27), "problem,residual,max_error\n");
    for (const auto &ch : s.checks) {
        EXPECT_TRUE(ch.pass) << ch.name << " " << ch.detail;
    }
    EXPECT_THROW(run_stage("plot", c), config_error);
}

TEST(cli, exit_codes)
{
    const std::string exe = DCMA_CLI_PATH;
    const auto out = scratch("cli");
    auto run = [&](const std::string &args) {
        const int status = std::system((exe + " " + args + " > /dev/null 2>&1").c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    };
    EXPECT_EQ(run("torus --out " + (out / "t").string() + " --seed 3"), 0);
    EXPECT_TRUE(fs::exists(out / "t" / "report.json"));
    EXPECT_EQ(run("bogus"), 2);
    EXPECT_EQ(run(""), 2);
    EXPECT_EQ(run("schauder --alpha 0.7 --out " + (out / "s").string()), 2);
    EXPECT_EQ(run("green --report xml"), 2);
    EXPECT_EQ(run("torus --tol -1"), 2);
    EXPECT_EQ(run("torus --config /nonexistent.json"), 2);

    // config file plus flags; the flag wins
    run_config c;
    c.torus_n = 8;
    c.seed = 99;
    std::ofstream(out / "cfg.json") << config_to_json(c).dump();
    EXPECT_EQ(run("torus --config " + (out / "cfg.json").string() + " --seed 5 --out " + (out / "c").string()), 0);
    const auto j = nlohmann::json::parse(slurp(out / "c" / "report.json"));
    EXPECT_EQ(j["config"]["seed"], 5);
    EXPECT_EQ(j["config"]["torus_n"], 8);
}
