#include <dcma/harness.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <type_traits>

#include <dcma/cone_green.hpp>
#include <dcma/estimates.hpp>
#include <dcma/gluing.hpp>
#include <dcma/majorant.hpp>
#include <dcma/recursion_models.hpp>
#include <dcma/rng.hpp>
#include <dcma/torus.hpp>

namespace dcma
{

// ------------------------------------------------------------------ config

namespace
{

template <typename C, typename F>
void for_each_field(C &c, F &&f)
{
    f("subcommand", c.subcommand);
    f("stages", c.stages);
    f("model", c.model);
    f("out_dir", c.out_dir);
    f("seed", c.seed);
    f("flat_order", c.flat_order);
    f("random_count", c.random_count);
    f("random_order", c.random_order);
    f("random_degree", c.random_degree);
    f("tol", c.tol);
    f("flat_float_tol", c.flat_float_tol);
    f("eta_instances", c.eta_instances);
    f("eta_kmax", c.eta_kmax);
    f("glue_m", c.glue_m);
    f("glue_grid", c.glue_grid);
    f("green_modes", c.green_modes);
    f("green_samples", c.green_samples);
    f("green_tol", c.green_tol);
    f("homogeneity_tol", c.homogeneity_tol);
    f("green_reference", c.green_reference);
    f("reference_tol", c.reference_tol);
    f("alphas", c.alphas);
    f("gammas", c.gammas);
    f("holder_grid", c.holder_grid);
    f("spread_tol", c.spread_tol);
    f("quantity", c.quantity);
    f("rmin", c.rmin);
    f("slope_tol", c.slope_tol);
    f("psi_jets", c.psi_jets);
    f("psi_tol", c.psi_tol);
    f("frame_metrics", c.frame_metrics);
    f("frame_tol", c.frame_tol);
    f("torus_n", c.torus_n);
    f("torus_random_count", c.torus_random_count);
    f("torus_tol", c.torus_tol);
    f("torus_exact_tol", c.torus_exact_tol);
}

template <typename T>
void read_field(const nlohmann::json &v, const std::string &key, T &out)
{
    if constexpr (std::is_same_v<T, std::uint64_t>) {
        if (!v.is_number_unsigned()) {
            throw config_error("config key '" + key + "' must be a nonnegative integer");
        }
    } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) {
            throw config_error("config key '" + key + "' must be an integer");
        }
    } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) {
            throw config_error("config key '" + key + "' must be a number");
        }
    }
    try {
        out = v.get<T>();
    } catch (const nlohmann::json::exception &e) {
        throw config_error("config key '" + key + "': " + e.what());
    }
}

bool contains(const std::vector<std::string> &v, const std::string &s)
{
    return std::find(v.begin(), v.end(), s) != v.end();
}

void require(bool ok, const std::string &what)
{
    if (!ok) {
        throw config_error("invalid config: " + what);
    }
}

} // namespace

std::vector<std::string> stage_names()
{
    return {"solve-local", "certify", "glue", "green", "schauder", "estimates", "torus"};
}

std::vector<std::string> subcommand_names()
{
    auto v = stage_names();
    v.push_back("all");
    v.push_back("run");
    return v;
}

nlohmann::ordered_json config_to_json(const run_config &c)
{
    nlohmann::ordered_json j;
    for_each_field(c, [&](const char *name, const auto &v) { j[name] = v; });
    return j;
}

run_config config_from_json(const nlohmann::json &j, run_config base)
{
    if (!j.is_object()) {
        throw config_error("config must be a JSON object");
    }
    for (const auto &[key, value] : j.items()) {
        bool found = false;
        for_each_field(base, [&](const char *name, auto &field) {
            if (key == name) {
                read_field(value, key, field);
                found = true;
            }
        });
        if (!found) {
            throw config_error("unknown config key '" + key + "'");
        }
    }
    return base;
}

run_config load_config(const std::string &path, run_config base)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw config_error("cannot read config file " + path);
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception &e) {
        throw config_error("config file " + path + " is not valid JSON: " + e.what());
    }
    return config_from_json(j, base);
}

void finalize_config(run_config &c)
{
    require(contains(subcommand_names(), c.subcommand), "unknown subcommand '" + c.subcommand + "'");
    if (c.subcommand == "all") {
        c.stages = stage_names();
    } else if (c.subcommand != "run") {
        c.stages = {c.subcommand};
    }
    std::set<std::string> seen;
    for (const auto &s : c.stages) {
        require(contains(stage_names(), s), "unknown stage '" + s + "'");
        require(seen.insert(s).second, "stage '" + s + "' listed twice");
    }
    require(contains(model_names(), c.model), "unknown model '" + c.model + "'");
    require(!c.out_dir.empty(), "out_dir is empty");
    for (double t : {c.tol, c.flat_float_tol, c.green_tol, c.homogeneity_tol, c.reference_tol, c.spread_tol, c.slope_tol, c.psi_tol,
                     c.frame_tol, c.torus_tol, c.torus_exact_tol}) {
        require(std::isfinite(t) && t > 0, "tolerances must be positive");
    }
    require(c.flat_order >= 2 && c.flat_order <= 10, "flat_order must be in [2, 10]");
    require(c.random_count >= 1 && c.random_count <= 1000, "random_count must be in [1, 1000]");
    require(c.random_order >= 2 && c.random_order <= 8, "random_order must be in [2, 8]");
    require(c.random_degree >= 2 && c.random_degree <= 8, "random_degree must be in [2, 8]");
    require(c.eta_instances >= 1 && c.eta_kmax >= 2, "eta_instances >= 1 and eta_kmax >= 2");
    require(c.glue_m > 0 && c.glue_m < 2, "glue_m must be in (0, 2)");
    require(c.glue_grid >= 1000, "glue_grid must be at least 1000");
    require(c.green_modes >= 0 && c.green_modes <= 32, "green_modes must be in [0, 32]");
    require(c.green_samples >= 1 && c.green_samples <= 20, "green_samples must be in [1, 20]");
    require(!c.alphas.empty() && !c.gammas.empty(), "alphas and gammas must be nonempty");
    for (double a : c.alphas) {
        require(a > 0 && a < 0.5, "alpha must be in (0, 1/2)");
    }
    for (const auto &[g1, g2] : c.gammas) {
        require(g1 >= 0 && g1 <= 1 && g2 >= 0 && g2 <= 1, "gammas must be in [0, 1]");
    }
    require(c.holder_grid >= 16 && c.holder_grid <= 256 && c.holder_grid % 4 == 0, "holder_grid must be a multiple of 4 in [16, 256]");
    require(c.quantity == "psi" || c.quantity == "psi1" || c.quantity == "second" || c.quantity == "all",
            "quantity must be psi, psi1, second or all");
    require(c.rmin > 0 && c.rmin < 0.1, "rmin must be in (0, 0.1)");
    require(c.psi_jets >= 1 && c.frame_metrics >= 1, "psi_jets and frame_metrics must be positive");
    require(c.torus_n >= 4 && c.torus_n <= 4096, "torus_n must be in [4, 4096]");
    require(c.torus_random_count >= 1, "torus_random_count must be positive");
    thread_cap(); // validates DCMA_THREADS
}

// ----------------------------------------------------------- threading

int thread_cap()
{
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    hw = std::max(hw, 1);
    const char *env = std::getenv("DCMA_THREADS");
    if (env == nullptr || *env == '\0') {
        return hw;
    }
    char *end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1 || v > 1024) {
        throw config_error(std::string("DCMA_THREADS must be a positive integer, got '") + env + "'");
    }
    return static_cast<int>(v);
}

void parallel_for(int n, const std::function<void(int)> &fn)
{
    const int workers = std::min(thread_cap(), n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&] {
        for (int i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) {
                    error = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) {
        pool.emplace_back(work);
    }
    for (auto &t : pool) {
        t.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

// ------------------------------------------------------------------ stages

std::string csv_number(double v)
{
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace
{

std::string num(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

check_result verdict(std::string name, std::string model, bool pass, double value, double threshold, std::string detail = {})
{
    return {std::move(name), std::move(model), pass, value, threshold, std::move(detail)};
}

// runs fn, turning an exception into a failed check with that name
void guarded(stage_result &s, const std::string &name, const std::string &model, const std::function<void()> &fn)
{
    try {
        fn();
    } catch (const std::exception &e) {
        s.checks.push_back(verdict(name, model, false, std::nan(""), 0, std::string("exception: ") + e.what()));
    }
}

std::vector<std::uint64_t> derived_seeds(std::uint64_t seed, const std::string &check, int n)
{
    counter_rng rng(seed, check);
    std::vector<std::uint64_t> out(n);
    for (auto &s : out) {
        s = rng();
    }
    return out;
}

stage_result stage_solve_local(const run_config &c)
{
    stage_result s{"solve-local", {}, {}};
    guarded(s, "flat_rational", "flat", [&] {
        const int K = c.flat_order;
        auto p = flat_problem<qcplx>(2, K, K, 4);
        auto phi = solve_recursion(p.bd, p.rhs, K, K);
        int bad = 0;
        for (int k = 1; k <= K; ++k) {
            for (int l = 1; l <= K; ++l) {
                const bool ok = (k == 2 && l == 2) ? phi(k, l) == w_polynomial<qcplx>::constant(1, 4, qcplx(mpq_class(1, 4)))
                                                   : phi(k, l).is_zero();
                bad += ok ? 0 : 1;
            }
        }
        s.checks.push_back(verdict("flat_coefficients", "flat", bad == 0, bad, 0, "mixed cells differing from B22 = 1/4, others 0"));
        const double res = residual_check(phi, p.rhs);
        s.checks.push_back(verdict("flat_residual_rational", "flat", res == 0.0, res, 0));
    });
    guarded(s, "flat_residual_float", "flat", [&] {
        auto p = flat_problem<cplx>(2, c.flat_order, c.flat_order, 4);
        auto phi = solve_recursion(p.bd, p.rhs, c.flat_order, c.flat_order);
        const double res = residual_check(phi, p.rhs);
        s.checks.push_back(verdict("flat_residual_float", "flat", res <= c.flat_float_tol, res, c.flat_float_tol));
    });
    guarded(s, "random_residual", "random", [&] {
        const auto seeds = derived_seeds(c.seed, "solve-local/random", c.random_count);
        std::vector<double> res(seeds.size());
        std::vector<int> b11(seeds.size());
        parallel_for(static_cast<int>(seeds.size()), [&](int i) {
            auto p = random_problem(seeds[i], 2, c.random_order, c.random_order, c.random_degree);
            auto phi = solve_recursion(p.bd, p.rhs, c.random_order, c.random_order);
            res[i] = residual_check(phi, p.rhs);
            b11[i] = phi(1, 1).is_zero() ? 1 : 0;
        });
        std::string table = "instance,seed,residual,b11_zero\n";
        double worst = 0;
        int nonzero = 0;
        for (std::size_t i = 0; i < seeds.size(); ++i) {
            table += std::to_string(i) + ',' + std::to_string(seeds[i]) + ',' + csv_number(res[i]) + ',' + std::to_string(b11[i]) + '\n';
            worst = std::max(worst, res[i]);
            nonzero += 1 - b11[i];
        }
        s.checks.push_back(verdict("random_residual", "random", worst <= c.tol, worst, c.tol,
                                   std::to_string(seeds.size()) + " instances, orders " + std::to_string(c.random_order)));
        s.checks.push_back(verdict("b11_vanishes", "random", nonzero == 0, nonzero, 0, "instances with B11 != 0"));
        s.tables.emplace_back("random_suite", table);
    });
    return s;
}

stage_result stage_certify(const run_config &c)
{
    stage_result s{"certify", {}, {}};
    guarded(s, "delta_recurrence", "exact", [&] {
        mpq_class worst = 0;
        const mpq_class cc(7, 3);
        for (int m = 0; m < 6; ++m) {
            auto d = delta_seq<mpq_class>(cc, mpq_class(m), 60);
            mpq_class r = abs(mpq_class(delta_recurrence_residual(d, cc, mpq_class(m))));
            worst = std::max(worst, r);
        }
        s.checks.push_back(verdict("delta_recurrence", "exact", worst == 0, worst.get_d(), 0));
    });
    guarded(s, "eta_below_theta", "exact", [&] {
        const auto seeds = derived_seeds(c.seed, "certify/eta_theta", c.eta_instances);
        int bad = 0;
        std::string first;
        for (int i = 0; i < c.eta_instances; ++i) {
            const int k = eta_theta_comparison(seeds[i], i % 4, c.eta_kmax);
            if (k >= 0) {
                ++bad;
                if (first.empty()) {
                    first = "instance " + std::to_string(i) + " fails at k=" + std::to_string(k);
                }
            }
        }
        s.checks.push_back(verdict("eta_below_theta", "exact", bad == 0, bad, 0,
                                   first.empty() ? "k <= " + std::to_string(c.eta_kmax) : first));
    });
    guarded(s, "certify_flat", "flat", [&] {
        auto p = flat_problem<cplx>(2, 8, 8, 2);
        auto phi = solve_recursion(p.bd, p.rhs, 8, 8);
        const auto cert = certify(phi, default_c(phi), 1);
        s.checks.push_back(verdict("certify_flat", "flat", cert.success && cert.R >= cert.empirical_root, cert.R, cert.empirical_root,
                                   cert.success ? "R against empirical root growth" : cert.failure));
        s.tables.emplace_back("certificate_flat", certificate_csv(coefficient_moduli(phi)));
    });
    for (double rho : {0.5, 0.25, 0.1}) {
        const std::string name = "certify_geometric_rho_" + num(rho);
        guarded(s, name, "geometric", [&] {
            auto p = geometric_problem(rho, 12, 12);
            auto phi = solve_recursion(p.bd, p.rhs, 12, 12);
            const auto cert = certify(phi, default_c(phi), 2);
            s.checks.push_back(verdict(name, "geometric", cert.success && cert.R >= cert.empirical_root, cert.R, cert.empirical_root,
                                       cert.success ? "R against empirical root growth" : cert.failure));
        });
    }
    return s;
}

stage_result stage_glue(const run_config &c)
{
    stage_result s{"glue", {}, {}};
    gluing_profile p;
    try {
        p = find_parameters(c.glue_m);
        s.checks.push_back(verdict("find_parameters", "profile", true, p.x0, 0,
                                   "a=" + num(p.a) + " b=" + num(p.b) + " eps=" + num(p.epsilon) + " eps'=" + num(p.epsilon_prime)));
    } catch (const std::exception &e) {
        s.checks.push_back(verdict("find_parameters", "profile", false, std::nan(""), 0, e.what()));
        return s;
    }
    guarded(s, "property_check", "profile", [&] {
        const auto rep = property_check(p, c.glue_grid);
        for (const char *name : {"p1", "p2", "p3", "p4", "p5", "hm", "hinc"}) {
            const auto &r = rep.get(name);
            s.checks.push_back(verdict(name, "profile", r.pass && r.margin > 0, r.margin, 0, "worst at x=" + num(r.worst_x)));
        }
        s.tables.emplace_back("gluing_properties", rep.csv());
    });
    guarded(s, "glue_subharmonic", "quadratic", [&] {
        auto f = [](double x, double y) { return x * x + y * y; };
        auto g = [](double x, double y) { return 2 * (x * x + y * y); };
        glue_options opt;
        const auto rep = glue_subharmonic(f, g, p, opt);
        const bool ok = rep.reached && rep.lambda_star <= opt.lambda_cap && rep.at_star.min_laplacian > 0;
        s.checks.push_back(verdict("glue_subharmonic", "quadratic", ok, rep.at_star.min_laplacian, 0,
                                   "lambda*=" + num(rep.lambda_star)));
    });
    return s;
}

stage_result stage_green(const run_config &c)
{
    stage_result s{"green", {}, {}};
    guarded(s, "mode_agreement", "cone", [&] {
        const auto a = mode_agreement_check(c.green_modes, 1e-10, c.green_samples, 4);
        s.checks.push_back(verdict("mode_agreement", "cone", a.worst_rel <= c.green_tol, a.worst_rel, c.green_tol,
                                   std::to_string(a.samples) + " samples, worst k=" + std::to_string(a.worst_k) + " r=" + num(a.worst_r) +
                                       " r'=" + num(a.worst_rp) + " R=" + num(a.worst_Rs)));
    });
    guarded(s, "homogeneity", "cone", [&] {
        homogeneity_options h;
        h.m = 2;
        h.seed = c.seed;
        h.gammas = {{0.0, 0.0}, {0.5, 0.5}, {1.0, 1.0}};
        std::string table = "gamma1,gamma2,i,j,expected,fitted,worst_err\n";
        double worst = 0;
        for (const auto &r : homogeneity_check(h)) {
            worst = std::max(worst, std::abs(r.fitted - r.expected));
            table += csv_number(r.gamma1) + ',' + csv_number(r.gamma2) + ',' + std::to_string(r.i) + ',' + std::to_string(r.j) + ',' +
                     csv_number(r.expected) + ',' + csv_number(r.fitted) + ',' + csv_number(r.worst_err) + '\n';
        }
        s.checks.push_back(verdict("homogeneity", "cone", worst <= c.homogeneity_tol, worst, c.homogeneity_tol, "max |fitted - expected|"));
        s.tables.emplace_back("homogeneity", table);
    });
    if (!c.green_reference.empty()) {
        guarded(s, "reference_table", "cone", [&] {
            std::ifstream in(c.green_reference, std::ios::binary);
            if (!in) {
                throw std::runtime_error("cannot read " + c.green_reference);
            }
            std::string line;
            std::getline(in, line);
            if (line != "k,r,rp,R,value") {
                throw std::runtime_error("unexpected header '" + line + "'");
            }
            green_options opt;
            opt.tol = 1e-11;
            double worst = 0;
            int rows = 0;
            while (std::getline(in, line)) {
                if (line.empty()) {
                    continue;
                }
                std::stringstream ss(line);
                std::string f[5];
                for (auto &x : f) {
                    if (!std::getline(ss, x, ',')) {
                        throw std::runtime_error("short row '" + line + "'");
                    }
                }
                const int k = std::stoi(f[0]);
                const double want = std::stod(f[4]);
                for (auto rep : {green_rep::hankel_in_r, green_rep::fourier_in_s}) {
                    const double got = mode_integral(k, std::stod(f[1]), std::stod(f[2]), std::stod(f[3]), rep, opt);
                    worst = std::max(worst, std::abs(got / want - 1.0));
                }
                ++rows;
            }
            if (rows == 0) {
                throw std::runtime_error("no rows");
            }
            if (std::isnan(worst)) {
                worst = INFINITY;
            }
            s.checks.push_back(verdict("reference_table", "cone", worst <= c.reference_tol, worst, c.reference_tol,
                                       std::to_string(rows) + " rows"));
        });
    }
    return s;
}

stage_result stage_schauder(const run_config &c)
{
    stage_result s{"schauder", {}, {}};
    guarded(s, "holder", "bumps", [&] {
        holder_options o;
        o.ns = c.holder_grid;
        o.nr = c.holder_grid;
        const auto reps = holder_ratio_sweep(c.alphas, c.gammas, o);
        std::string table;
        for (const auto &r : reps) {
            const std::string name = "holder_alpha_" + num(r.alpha) + "_gamma_" + num(r.gamma1) + "_" + num(r.gamma2);
            s.checks.push_back(verdict(name, "bumps", r.max_spread < c.spread_tol, r.max_spread, c.spread_tol,
                                       "lambda exponent error " + num(r.worst_exponent_err)));
            const auto csv = r.csv();
            table += table.empty() ? csv : csv.substr(csv.find('\n') + 1);
        }
        s.tables.emplace_back("holder", table);
    });
    guarded(s, "convergence_cases", "integral", [&] {
        std::string table = "n,k,c,inside,predicted,numeric,ratio\n";
        int bad = 0;
        const auto cases = default_convergence_cases();
        for (const auto &cs : cases) {
            const auto r = integral_convergence_check(cs);
            bad += r.numeric == r.predicted ? 0 : 1;
            auto word = [](convergence_verdict v) { return v == convergence_verdict::finite ? "finite" : "divergent"; };
            table += std::to_string(cs.n) + ',' + csv_number(cs.k) + ',' + csv_number(cs.c) + ',' + (cs.inside ? "1" : "0") + ',' +
                     word(r.predicted) + ',' + word(r.numeric) + ',' + csv_number(r.ratio) + '\n';
        }
        s.checks.push_back(verdict("convergence_cases", "integral", bad == 0, bad, 0, std::to_string(cases.size()) + " cases"));
        s.tables.emplace_back("convergence", table);
    });
    return s;
}

stage_result stage_estimates(const run_config &c)
{
    stage_result s{"estimates", {}, {}};
    const auto model2 = model_by_name(c.model, 2);
    guarded(s, "psi_oracle", "random", [&] {
        const auto seeds = derived_seeds(c.seed, "estimates/psi_oracle", 1);
        double worst = 0;
        for (int k = 0; k < c.psi_jets; ++k) {
            const auto j = random_jet(2 + k % 2, seeds[0], k);
            worst = std::max(worst, std::abs(psi_brute(j) / psi_compute(j) - 1.0));
        }
        s.checks.push_back(verdict("psi_oracle", "random", worst <= c.psi_tol, worst, c.psi_tol,
                                   std::to_string(c.psi_jets) + " jets, n in {2, 3}, relative"));
    });
    boundedness_options bo;
    bo.r_min = c.rmin;
    auto profile = [&](const std::string &name, estimate_quantity q, psi1_slots slots, bool weighted_flat) {
        guarded(s, name, c.model, [&] {
            auto o = bo;
            o.slots = slots;
            const auto r = boundedness_profile(model2, q, o);
            const bool ok = weighted_flat ? std::abs(r.slope) <= c.slope_tol && std::isfinite(r.max_weighted)
                                          : r.slope >= -c.slope_tol && std::isfinite(r.max_weighted);
            s.checks.push_back(verdict(name, c.model, ok, r.slope, c.slope_tol, "max " + num(r.max_weighted) + " down to r=" + num(c.rmin)));
            s.tables.emplace_back("profile_" + name.substr(8), r.csv());
        });
    };
    if (c.quantity == "psi" || c.quantity == "all") {
        profile("profile_psi", estimate_quantity::psi, psi1_slots::last, true);
    }
    if (c.quantity == "psi1" || c.quantity == "all") {
        profile("profile_psi1_last", estimate_quantity::psi1, psi1_slots::last, false);
        profile("profile_psi1_first", estimate_quantity::psi1, psi1_slots::first, false);
    }
    if (c.quantity == "second" || c.quantity == "all") {
        profile("profile_second", estimate_quantity::second_order, psi1_slots::last, false);
    }
    guarded(s, "frame_identity", "random", [&] {
        const auto seeds = derived_seeds(c.seed, "estimates/frames", 1);
        double worst = 0;
        for (int k = 0; k < c.frame_metrics; ++k) {
            worst = std::max(worst, frame_build(random_jet(2 + k % 3, seeds[0], k)).v1vn_residual);
        }
        s.checks.push_back(verdict("frame_identity", "random", worst <= c.frame_tol, worst, c.frame_tol,
                                   std::to_string(c.frame_metrics) + " metrics, n in {2, 3, 4}"));
    });
    for (const char *name : {"flat", "sheared", "weighted"}) {
        for (int n : {2, 3}) {
            const std::string check = std::string("mprime_bounds_") + name + "_n" + std::to_string(n);
            guarded(s, check, name, [&] {
                const auto m = model_by_name(name, n);
                std::vector<kahler_jet> jets;
                for (const auto &p : model_sample_points(n, 40)) {
                    jets.push_back(m.jet(p));
                }
                const auto r = mprime_bounds_check(jets);
                const bool ok = r.lower_margin >= -1e-12 && r.upper_margin > 0 && r.sin_margin >= -1e-12;
                s.checks.push_back(verdict(check, name, ok, r.upper_margin, 0,
                                           "lower " + num(r.lower_margin) + " sin " + num(r.sin_margin) + " v1vn " + num(r.worst_v1vn)));
            });
        }
    }
    guarded(s, "second_order_inequality", c.model, [&] {
        second_order_options o;
        o.C = 2.0;
        o.cutoff_width = 2.0;
        const auto r = second_order_inequality_check(model2, o);
        s.checks.push_back(verdict("second_order_inequality", c.model, r.min_margin >= -1e-6, r.min_margin, -1e-6,
                                   std::to_string(r.points) + " points"));
    });
    guarded(s, "divisor_lower_bound", c.model, [&] {
        Eigen::VectorXcd w0(1), dir(1);
        w0[0] = {-0.5, 0.1};
        dir[0] = 1.0;
        const auto r = gprime_D_lower_bound({divisor_curve(model2, w0, dir, 1.0, 201)});
        s.checks.push_back(verdict("divisor_lower_bound", c.model, r.holds, r.min_u, r.bound, "measured C " + num(r.measured_C)));
    });
    return s;
}

stage_result stage_torus(const run_config &c)
{
    stage_result s{"torus", {}, {}};
    const torus_grid grid{c.torus_n, c.torus_n};
    std::string table = "problem,residual,max_error\n";
    guarded(s, "single_mode", "torus", [&] {
        const auto p = torus_single_mode(grid);
        const auto phi = torus_linear_solve(p.G, p.S, grid);
        double err = 0;
        for (std::size_t i = 0; i < phi.size(); ++i) {
            err = std::max(err, std::abs(phi[i] - p.exact[i]));
        }
        const double res = torus_residual(phi, p.G, p.S, grid);
        s.checks.push_back(verdict("single_mode_exact", "torus", err <= c.torus_exact_tol, err, c.torus_exact_tol, "max |phi - exact|"));
        s.checks.push_back(verdict("single_mode_residual", "torus", res <= c.torus_tol, res, c.torus_tol));
        table += p.name + ',' + csv_number(res) + ',' + csv_number(err) + '\n';
    });
    guarded(s, "random_residual", "torus", [&] {
        std::vector<double> res(c.torus_random_count);
        parallel_for(c.torus_random_count, [&](int i) {
            const auto p = torus_random(grid, c.seed, i);
            res[i] = torus_residual(torus_linear_solve(p.G, p.S, grid), p.G, p.S, grid);
        });
        double worst = 0;
        for (int i = 0; i < c.torus_random_count; ++i) {
            worst = std::max(worst, res[i]);
            table += "random_" + std::to_string(i) + ',' + csv_number(res[i]) + ",\n";
        }
        s.checks.push_back(verdict("random_residual", "torus", worst <= c.torus_tol, worst, c.torus_tol,
                                   std::to_string(c.torus_random_count) + " instances"));
    });
    guarded(s, "solvability_rejected", "torus", [&] {
        auto p = torus_single_mode(grid);
        for (auto &g : p.G) {
            g = 0.1;
        }
        bool rejected = false;
        try {
            torus_linear_solve(p.G, p.S, grid);
        } catch (const solvability_error &) {
            rejected = true;
        }
        s.checks.push_back(verdict("solvability_rejected", "torus", rejected, rejected ? 1 : 0, 1, "mean(|S|^2 e^G) = e^0.1"));
    });
    s.tables.emplace_back("torus", table);
    return s;
}

std::string csv_field(const std::string &v)
{
    if (v.find_first_of(",\"\n\r") == std::string::npos) {
        return v;
    }
    std::string out = "\"";
    for (char ch : v) {
        out += ch;
        if (ch == '"') {
            out += '"';
        }
    }
    return out + '"';
}

std::string file_stem(const std::string &family)
{
    std::string f = family;
    std::replace(f.begin(), f.end(), '-', '_');
    return f;
}

} // namespace

stage_result run_stage(const std::string &family, const run_config &config)
{
    if (family == "solve-local") {
        return stage_solve_local(config);
    }
    if (family == "certify") {
        return stage_certify(config);
    }
    if (family == "glue") {
        return stage_glue(config);
    }
    if (family == "green") {
        return stage_green(config);
    }
    if (family == "schauder") {
        return stage_schauder(config);
    }
    if (family == "estimates") {
        return stage_estimates(config);
    }
    if (family == "torus") {
        return stage_torus(config);
    }
    throw config_error("unknown stage '" + family + "'");
}

bool run_results::all_pass() const
{
    for (const auto &s : stages) {
        for (const auto &c : s.checks) {
            if (!c.pass) {
                return false;
            }
        }
    }
    return true;
}

std::size_t run_results::check_count() const
{
    std::size_t n = 0;
    for (const auto &s : stages) {
        n += s.checks.size();
    }
    return n;
}

run_results run_checks(const run_config &config, std::ostream *log)
{
    run_results r{config, {}};
    for (const auto &family : config.stages) {
        r.stages.push_back(run_stage(family, config));
        if (log != nullptr) {
            for (const auto &c : r.stages.back().checks) {
                *log << (c.pass ? "PASS " : "FAIL ") << family << '/' << c.name << " value=" << csv_number(c.value);
                if (!c.detail.empty()) {
                    *log << " (" << c.detail << ')';
                }
                *log << '\n';
            }
            log->flush();
        }
    }
    return r;
}

// ------------------------------------------------------------------ report

std::string checks_csv(const stage_result &s)
{
    std::string out = "check,model,pass,value,threshold,detail\n";
    for (const auto &c : s.checks) {
        out += csv_field(c.name) + ',' + csv_field(c.model) + ',' + (c.pass ? "1" : "0") + ',' + csv_number(c.value) + ',' +
               csv_number(c.threshold) + ',' + csv_field(c.detail) + '\n';
    }
    return out;
}

nlohmann::ordered_json report_json(const run_results &r)
{
    nlohmann::ordered_json j;
    j["schema_version"] = report_schema_version;
    j["config"] = config_to_json(r.config);
    j["passed"] = r.all_pass();
    j["check_count"] = r.check_count();
    j["families"] = nlohmann::ordered_json::array();
    for (const auto &s : r.stages) {
        nlohmann::ordered_json f;
        f["family"] = s.family;
        f["csv"] = file_stem(s.family) + ".csv";
        f["checks"] = nlohmann::ordered_json::array();
        for (const auto &c : s.checks) {
            nlohmann::ordered_json cj;
            cj["name"] = c.name;
            cj["model"] = c.model;
            cj["pass"] = c.pass;
            // strings keep full precision and survive non-finite values
            cj["value"] = csv_number(c.value);
            cj["threshold"] = csv_number(c.threshold);
            cj["detail"] = c.detail;
            f["checks"].push_back(cj);
        }
        f["tables"] = nlohmann::ordered_json::array();
        for (const auto &t : s.tables) {
            f["tables"].push_back(t.first + ".csv");
        }
        j["families"].push_back(f);
    }
    return j;
}

void emit_report(const run_results &r, const std::string &out_dir)
{
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(fs::u8path(out_dir), ec);
    if (ec || !fs::is_directory(fs::u8path(out_dir))) {
        throw config_error("cannot create output directory " + out_dir + (ec ? ": " + ec.message() : ""));
    }
    std::string json_text;
    try {
        json_text = report_json(r).dump(2) + "\n";
    } catch (const nlohmann::json::exception &e) {
        throw config_error(std::string("report is not valid UTF-8: ") + e.what());
    }
    auto write = [&](const std::string &name, const std::string &text) {
        const auto path = fs::u8path(out_dir) / name;
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << text;
        out.flush();
        if (!out) {
            throw config_error("cannot write " + path.string());
        }
    };
    for (const auto &s : r.stages) {
        write(file_stem(s.family) + ".csv", checks_csv(s));
        for (const auto &[stem, text] : s.tables) {
            write(stem + ".csv", text);
        }
    }
    write("report.json", json_text);
}

int run_pipeline(const run_config &config, std::ostream &log)
{
    try {
        run_config c = config;
        finalize_config(c);
        const auto r = run_checks(c, &log);
        emit_report(r, c.out_dir);
        log << (r.all_pass() ? "all " : "some of ") << r.check_count() << " checks " << (r.all_pass() ? "passed" : "did not pass")
            << "; report in " << c.out_dir << '\n';
        return r.all_pass() ? 0 : 1;
    } catch (const config_error &e) {
        log << "error: " << e.what() << '\n';
        return 2;
    }
}

} // namespace dcma
