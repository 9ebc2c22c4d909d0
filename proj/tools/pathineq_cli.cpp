#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "pathineq/experiments.hpp"

namespace fs = std::filesystem;
using namespace pathineq;

namespace {

enum Exit { kOk = 0, kError = 1, kFail = 2, kInconclusive = 3 };

struct CliConfig {
    std::string subcommand;
    std::string spec_path;
    std::string out_dir = "results";
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> n_paths;
    std::optional<std::int64_t> steps;
    unsigned parallel = 1;
    bool accept_inconclusive = false;
    bool quiet = false;
    std::string constants_file;
    std::vector<std::string> sets;
};

int exit_for(Verdict v, bool accept_inconclusive) {
    switch (v) {
        case Verdict::Pass: return kOk;
        case Verdict::StatisticallyInconclusive: return accept_inconclusive ? kOk : kInconclusive;
        case Verdict::Fail: return kFail;
    }
    return kError;
}

void apply_overrides(ExperimentSpec& s, const CliConfig& c, std::size_t index) {
    if (c.seed) s.seed = index == 0 && c.subcommand == "run" ? *c.seed : derive_seed(*c.seed, s.seed);
    if (c.n_paths) s.n_paths = *c.n_paths;
    if (c.steps) s.steps = *c.steps;
}

void check_writable(const std::string& dir) {
    fs::create_directories(dir);
    auto probe = fs::path(dir) / (".write-probe-" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())));
    std::ofstream o(probe);
    if (!o) throw std::runtime_error("output directory " + dir + " is not writable");
    o.close();
    fs::remove(probe);
}

void print_row(const ExperimentResult& r) {
    std::cout << std::left << std::setw(22) << r.name << std::setw(14) << to_string(r.verdict) << r.theorem << "\n";
}

int cmd_run(const CliConfig& c) {
    auto spec = load_experiment(c.spec_path);
    apply_overrides(spec, c, 0);
    check_writable(c.out_dir);
    auto r = run_experiment(spec, c.out_dir);
    if (!c.quiet) {
        std::cout << "experiment " << r.name << " (" << to_string(spec.recipe) << ", seed " << spec.seed << ")\n";
        for (const auto& t : r.report["verification"]["tilts"])
            std::cout << "  " << std::left << std::setw(16) << t["tilt"].get<std::string>() << " W2 "
                      << std::setw(12) << t["debiased_w2"].get<double>() << " rhs " << std::setw(12)
                      << t["rhs"].get<double>() << " " << t["verdict"].get<std::string>() << "\n";
        for (const auto& [k, v] : r.report["checks"].items()) {
            std::string verdict = v.contains("verdict") ? v["verdict"].get<std::string>()
                                  : v.contains("tail") ? v["tail"]["verdict"].get<std::string>()
                                  : v.value("pass", false) ? "pass" : "fail";
            std::cout << "  check " << k << ": " << verdict << "\n";
        }
        std::cout << "verdict: " << to_string(r.verdict) << "\nartifacts: " << r.dir.string() << "\n";
    }
    return exit_for(r.verdict, c.accept_inconclusive);
}

int cmd_suite(const CliConfig& c) {
    auto suite = standard_suite();
    for (std::size_t i = 0; i < suite.size(); ++i) apply_overrides(suite[i], c, i + 1);
    check_writable(c.out_dir);
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    unsigned workers = std::clamp(c.parallel, 1u, hw);
    if (c.parallel > hw && !c.quiet)
        std::cerr << "note: --parallel " << c.parallel << " exceeds " << hw << " cores; using " << hw << "\n";
    if (workers > 1) set_default_threads(1);

    std::vector<std::optional<ExperimentResult>> results(suite.size());
    std::vector<std::string> errors(suite.size());
    std::atomic<std::size_t> next{0};
    std::mutex out_mu;
    auto worker = [&] {
        for (std::size_t i; (i = next++) < suite.size();) {
            try {
                results[i] = run_experiment(suite[i], c.out_dir);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
            if (!c.quiet) {
                std::lock_guard<std::mutex> g(out_mu);
                std::cerr << "  finished " << suite[i].name << "\n";
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    nlohmann::json summary = nlohmann::json::array();
    Verdict overall = Verdict::Pass;
    bool any_error = false;
    std::cout << std::left << std::setw(22) << "experiment" << std::setw(14) << "verdict" << "theorem\n";
    for (std::size_t i = 0; i < suite.size(); ++i) {
        if (results[i]) {
            print_row(*results[i]);
            overall = worst(overall, results[i]->verdict);
            summary.push_back({{"name", suite[i].name},
                               {"theorem", suite[i].theorem},
                               {"seed", suite[i].seed},
                               {"verdict", to_string(results[i]->verdict)}});
        } else {
            any_error = true;
            std::cout << std::left << std::setw(22) << suite[i].name << std::setw(14) << "error" << errors[i] << "\n";
            summary.push_back({{"name", suite[i].name}, {"theorem", suite[i].theorem}, {"error", errors[i]}});
        }
    }
    std::ofstream(fs::path(c.out_dir) / "summary.json") << summary.dump(2) << "\n";
    if (any_error) return kError;
    return exit_for(overall, c.accept_inconclusive);
}

int cmd_constants(const CliConfig& c) {
    std::map<std::string, std::string> kv;
    if (!c.constants_file.empty()) {
        boost::property_tree::ptree t;
        try {
            boost::property_tree::read_ini(c.constants_file, t);
        } catch (const boost::property_tree::ini_parser_error& e) {
            throw std::invalid_argument(std::string("constants file: ") + e.what());
        }
        for (const auto& [k, v] : t) {
            if (!v.empty()) throw std::invalid_argument("constants file: sections are not allowed ([" + k + "])");
            kv[k] = v.data();
        }
    }
    for (const auto& s : c.sets) {
        auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) throw std::invalid_argument("--set expects key=value, got '" + s + "'");
        kv[s.substr(0, eq)] = s.substr(eq + 1);
    }
    auto j = constants_report(kv);
    std::cout << j.dump(2) << "\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Transport-inequality experiments on path space"};
    app.require_subcommand(1);
    CliConfig c;
    unsigned threads = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--out", c.out_dir, "Output directory")->capture_default_str();
        sub->add_option("--seed", c.seed, "Seed override for every sampler");
        sub->add_option("--n-paths", c.n_paths, "Override the verification sample size")->check(CLI::Range(2, 1 << 24));
        sub->add_option("--steps", c.steps, "Override the number of time steps")->check(CLI::Range(1, 1 << 20));
        sub->add_flag("--accept-inconclusive", c.accept_inconclusive, "Exit 0 on a statistically inconclusive verdict");
        sub->add_flag("-q,--quiet", c.quiet, "Only print the verdict table");
    };

    auto* run = app.add_subcommand("run", "Run one experiment file");
    run->add_option("spec", c.spec_path, "Experiment file (INI)")->required();
    add_common(run);
    run->add_option("--parallel", threads, "Worker threads for path-level work");

    auto* suite = app.add_subcommand("suite", "Run the standard experiment battery");
    add_common(suite);
    suite->add_option("--parallel", c.parallel, "Experiments run concurrently")->check(CLI::PositiveNumber);

    auto* cons = app.add_subcommand("constants", "Print every constant computable from a model description");
    cons->add_option("file", c.constants_file, "key = value file")->check(CLI::ExistingFile);
    cons->add_option("--set", c.sets, "key=value, repeatable");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kError;
    }
    try {
        if (threads > 0) set_default_threads(threads);
        if (*run) {
            c.subcommand = "run";
            return cmd_run(c);
        }
        if (*suite) {
            c.subcommand = "suite";
            return cmd_suite(c);
        }
        c.subcommand = "constants";
        return cmd_constants(c);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kError;
    }
}
