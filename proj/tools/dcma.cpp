// dcma <subcommand> [--config F] [--out DIR] [--seed N] [--tol T] ...
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <dcma/harness.hpp>

namespace
{

struct cli_values {
    std::string config, out, report = "json", model, quantity, alphas, gammas;
    std::uint64_t seed = 0;
    double tol = 0, rmin = 0;
    int modes = 0;
};

std::vector<double> parse_list(const std::string &text, const char *what)
{
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) {
                throw std::invalid_argument(item);
            }
        } catch (const std::exception &) {
            throw dcma::config_error(std::string("bad number in ") + what + ": '" + item + "'");
        }
    }
    return out;
}

// --tol lands on the headline tolerance of each subcommand
double &tol_slot(dcma::run_config &c)
{
    const auto &s = c.subcommand;
    if (s == "green") {
        return c.green_tol;
    }
    if (s == "schauder") {
        return c.spread_tol;
    }
    if (s == "estimates") {
        return c.slope_tol;
    }
    if (s == "torus") {
        return c.torus_tol;
    }
    return c.tol;
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"dcma: checks for the degenerate complex Monge-Ampere toolkit"};
    app.require_subcommand(1);
    cli_values v;

    std::vector<CLI::App *> subs;
    const std::vector<std::pair<std::string, std::string>> descriptions = {
        {"solve-local", "formal recursion on the flat and random local models"},
        {"certify", "majorant chain and radius certificates"},
        {"glue", "gluing profile properties and subharmonic gluing"},
        {"green", "cone Green kernel representations and homogeneity"},
        {"schauder", "Hoelder ratios under dilation and integral convergence"},
        {"estimates", "Psi/Psi1 boundedness, frames and second order inequality"},
        {"torus", "spectral Poisson solve on the torus model"},
        {"all", "every stage in order"},
        {"run", "the stages listed in the config file"},
    };
    for (const auto &[name, text] : descriptions) {
        auto *sub = app.add_subcommand(name, text);
        sub->add_option("--config", v.config, "JSON config file");
        sub->add_option("--out", v.out, "report directory");
        sub->add_option("--seed", v.seed, "seed for the randomized suites");
        sub->add_option("--tol", v.tol, "headline tolerance of the subcommand");
        subs.push_back(sub);
    }
    auto *green = app.get_subcommand("green");
    green->add_option("--modes", v.modes, "highest cone mode k");
    green->add_option("--report", v.report, "report format")->check(CLI::IsMember({"json"}));
    auto *schauder = app.get_subcommand("schauder");
    schauder->add_option("--alpha", v.alphas, "Hoelder exponent(s), comma separated");
    schauder->add_option("--gammas", v.gammas, "weights g1,g2");
    auto *est = app.get_subcommand("estimates");
    est->add_option("--model", v.model, "flat | sheared | weighted | mixed");
    est->add_option("--quantity", v.quantity, "psi | psi1 | second | all");
    est->add_option("--rmin", v.rmin, "smallest |z| of the profile");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return 2;
    }

    CLI::App *chosen = app.get_subcommands().front();
    auto given = [&](CLI::App *a, const char *opt) { return a->count(opt) > 0; };
    try {
        dcma::run_config c;
        if (!v.config.empty()) {
            c = dcma::load_config(v.config);
        }
        c.subcommand = chosen->get_name();
        if (given(chosen, "--out")) {
            c.out_dir = v.out;
        }
        if (given(chosen, "--seed")) {
            c.seed = v.seed;
        }
        if (given(chosen, "--tol")) {
            tol_slot(c) = v.tol;
        }
        if (chosen == green && given(green, "--modes")) {
            c.green_modes = v.modes;
        }
        if (chosen == schauder) {
            if (given(schauder, "--alpha")) {
                c.alphas = parse_list(v.alphas, "--alpha");
            }
            if (given(schauder, "--gammas")) {
                const auto g = parse_list(v.gammas, "--gammas");
                if (g.size() != 2) {
                    throw dcma::config_error("--gammas takes exactly two values g1,g2");
                }
                c.gammas = {{g[0], g[1]}};
            }
        }
        if (chosen == est) {
            if (given(est, "--model")) {
                c.model = v.model;
            }
            if (given(est, "--quantity")) {
                c.quantity = v.quantity;
            }
            if (given(est, "--rmin")) {
                c.rmin = v.rmin;
            }
        }
        return dcma::run_pipeline(c, std::cout);
    } catch (const dcma::config_error &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
