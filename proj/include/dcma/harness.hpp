#ifndef DCMA_HARNESS_HPP
#define DCMA_HARNESS_HPP

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace dcma
{

inline constexpr int report_schema_version = 1;

// Bad configuration or an unwritable output location; maps to exit code 2.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Everything a run depends on. Two runs with equal configs write identical files.
struct run_config {
    std::string subcommand = "all";
    std::vector<std::string> stages; // filled from the subcommand; "run" takes them from the config file
    std::string model = "flat";
    std::string out_dir = "dcma_report";
    std::uint64_t seed = 7;

    // solve-local
    int flat_order = 6;
    int random_count = 20;
    int random_order = 5;
    int random_degree = 4;
    double tol = 1e-10;
    double flat_float_tol = 1e-12;
    // certify
    int eta_instances = 10;
    int eta_kmax = 200;
    // glue
    double glue_m = 1.0;
    int glue_grid = 10000;
    // green
    int green_modes = 8;
    int green_samples = 5;
    double green_tol = 1e-6;
    double homogeneity_tol = 1e-4;
    std::string green_reference; // optional CSV k,r,rp,R,value
    double reference_tol = 1e-9;
    // schauder
    std::vector<double> alphas{0.25, 0.45};
    std::vector<std::pair<double, double>> gammas{{0.0, 0.0}, {0.5, 0.5}, {1.0, 1.0}};
    int holder_grid = 64;
    double spread_tol = 0.1;
    // estimates
    std::string quantity = "all"; // psi | psi1 | second | all
    double rmin = 1e-3;
    double slope_tol = 0.1;
    int psi_jets = 50;
    double psi_tol = 1e-12;
    int frame_metrics = 100;
    double frame_tol = 1e-8;
    // torus
    int torus_n = 64;
    int torus_random_count = 5;
    double torus_tol = 1e-10;
    double torus_exact_tol = 1e-12;

    bool operator==(const run_config &) const = default;
};

std::vector<std::string> stage_names(); // in pipeline order
std::vector<std::string> subcommand_names();

nlohmann::ordered_json config_to_json(const run_config &c);
// missing keys keep their defaults, unknown keys are rejected. Throws config_error.
run_config config_from_json(const nlohmann::json &j, run_config base = {});
run_config load_config(const std::string &path, run_config base = {});
// fills stages from the subcommand and checks ranges; throws config_error
void finalize_config(run_config &c);

struct check_result {
    std::string name;
    std::string model;
    bool pass = false;
    double value = 0;
    double threshold = 0;
    std::string detail;
};

struct stage_result {
    std::string family;
    std::vector<check_result> checks;
    // extra tables: file stem -> CSV text with header
    std::vector<std::pair<std::string, std::string>> tables;
};

struct run_results {
    run_config config;
    std::vector<stage_result> stages;
    bool all_pass() const;
    std::size_t check_count() const;
};

// runs the stages in order; exceptions inside a check become failed checks
run_results run_checks(const run_config &config, std::ostream *log = nullptr);
stage_result run_stage(const std::string &family, const run_config &config);

// report.json plus <family>.csv (check,model,pass,value,threshold,detail) and the
// extra tables. Throws config_error if the directory cannot be written.
void emit_report(const run_results &r, const std::string &out_dir);
nlohmann::ordered_json report_json(const run_results &r);
std::string checks_csv(const stage_result &s);
std::string csv_number(double v);

// 0 all checks pass, 1 some check failed, 2 configuration or output error
int run_pipeline(const run_config &config, std::ostream &log);

// DCMA_THREADS if set (positive integer), else hardware concurrency
int thread_cap();
// fn(i) for i in [0, n) on up to thread_cap() threads; the first exception is rethrown
void parallel_for(int n, const std::function<void(int)> &fn);

} // namespace dcma

#endif
