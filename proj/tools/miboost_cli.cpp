#include "miboost/boosting.hpp"
#include "miboost/crossval.hpp"
#include "miboost/data.hpp"
#include "miboost/imputation.hpp"
#include "miboost/parallel.hpp"
#include "miboost/simulation.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace miboost;

namespace {

/// Usage or configuration problem (exit 2).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Everything a config file may set. Command-line flags override these.
struct RunConfig {
    SimConfig sim;
    CvConfig cv;
    std::vector<Method> methods = all_methods();
    std::size_t threads = 0;
    fs::path out = "results";
    std::string missing_token = "NA";
};

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys{
        "n", "p", "q", "rho", "outcome_intercept", "noise_sd", "beta_range", "gamma", "target_missing", "M", "K",
        "rounds", "train_fraction", "nu", "t_stop_max", "cycles", "donor_count", "screen_threshold", "n_lambda",
        "lambda_min_ratio", "n_alpha", "seed", "average_test_predictions", "exclude_imputed_response", "methods",
        "threads", "out", "missing_token"};
    return keys;
}

template <typename T>
void take(const json& j, const char* key, T& dst) {
    if (!j.contains(key)) return;
    try {
        dst = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw UsageError(std::string("config key \"") + key + "\": " + e.what());
    }
}

RunConfig load_config(const std::optional<fs::path>& path) {
    RunConfig rc;
    if (!path) return rc;
    std::ifstream in(*path);
    if (!in) throw UsageError("cannot open config file " + path->string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw UsageError("config file " + path->string() + ": " + e.what());
    }
    if (!j.is_object()) throw UsageError("config file " + path->string() + " must hold a JSON object");
    for (const auto& [key, value] : j.items())
        if (!known_keys().count(key)) throw UsageError("config file " + path->string() + ": unknown key \"" + key + "\"");

    SimConfig& s = rc.sim;
    take(j, "n", s.n);
    take(j, "p", s.p);
    take(j, "q", s.q);
    take(j, "rho", s.rho);
    take(j, "outcome_intercept", s.outcome_intercept);
    take(j, "noise_sd", s.noise_sd);
    if (j.contains("beta_range")) {
        std::array<double, 2> r{};
        take(j, "beta_range", r);
        s.beta_low = r[0];
        s.beta_high = r[1];
    }
    take(j, "gamma", s.gamma);
    take(j, "target_missing", s.target_missing);
    take(j, "M", s.M);
    take(j, "K", s.K);
    take(j, "rounds", s.rounds);
    take(j, "train_fraction", s.train_fraction);
    take(j, "nu", s.nu);
    take(j, "t_stop_max", s.t_stop_max);
    take(j, "cycles", s.imputation.cycles);
    take(j, "donor_count", s.imputation.donor_count);
    take(j, "screen_threshold", s.imputation.threshold);
    take(j, "n_lambda", s.penalized.n_lambda);
    take(j, "lambda_min_ratio", s.penalized.lambda_min_ratio);
    if (j.contains("n_alpha")) {
        int count = 0;
        take(j, "n_alpha", count);
        if (count < 1) throw UsageError("config key \"n_alpha\" must be >= 1");
        s.penalized.alphas = PenalizedGridSpec::alpha_grid(count);
    }
    take(j, "seed", s.seed);
    take(j, "average_test_predictions", s.average_test_predictions);
    take(j, "exclude_imputed_response", s.exclude_imputed_response);
    if (j.contains("methods")) {
        std::vector<std::string> names;
        take(j, "methods", names);
        rc.methods.clear();
        try {
            for (const auto& m : names) rc.methods.push_back(parse_method(m));
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
    }
    take(j, "threads", rc.threads);
    std::string out;
    take(j, "out", out);
    if (!out.empty()) rc.out = out;
    take(j, "missing_token", rc.missing_token);
    return rc;
}

void sync_cv(RunConfig& rc) {
    rc.cv.K = rc.sim.K;
    rc.cv.M = rc.sim.M;
    rc.cv.t_stop_max = rc.sim.t_stop_max;
    rc.cv.nu = rc.sim.nu;
    rc.cv.imputation = rc.sim.imputation;
    rc.cv.seed = rc.sim.seed;
    rc.cv.exclude_imputed_response = rc.sim.exclude_imputed_response;
    rc.cv.threads = resolve_threads(rc.threads);
}

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

std::string cv_config_json(const RunConfig& rc, const std::string& data, const std::string& response) {
    json j;
    j["data"] = data;
    j["response"] = response;
    j["M"] = rc.cv.M;
    j["K"] = rc.cv.K;
    j["t_stop_max"] = rc.cv.t_stop_max;
    j["nu"] = rc.cv.nu;
    j["cycles"] = rc.cv.imputation.cycles;
    j["donor_count"] = rc.cv.imputation.donor_count;
    j["screen_threshold"] = rc.cv.imputation.threshold;
    j["seed"] = rc.cv.seed;
    j["exclude_imputed_response"] = rc.cv.exclude_imputed_response;
    j["missing_token"] = rc.missing_token;
    return j.dump(2) + "\n";
}

struct SimulateOptions {
    std::optional<fs::path> config;
    std::optional<int> rounds;
    std::vector<std::string> methods;
    std::optional<std::size_t> threads;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::string format = "table";
    bool timing = false;
    bool quiet = false;
};

int cmd_simulate(const SimulateOptions& o) {
    RunConfig rc = load_config(o.config);
    if (o.rounds) rc.sim.rounds = *o.rounds;
    if (o.threads) rc.threads = *o.threads;
    if (o.seed) rc.sim.seed = *o.seed;
    if (o.out) rc.out = *o.out;
    if (!o.methods.empty()) {
        rc.methods.clear();
        try {
            for (const auto& m : o.methods) rc.methods.push_back(parse_method(m));
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
    }
    try {
        rc.sim.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }

    const std::size_t threads = resolve_threads(rc.threads);
    Index done = 0;
    const ProgressFn progress = [&](const RoundResult& r) {
        ++done;
        if (o.quiet) return;
        std::cerr << "round " << (r.round + 1) << " done (" << done << "/" << rc.sim.rounds << ")";
        for (const auto& m : r.methods)
            if (m.failed) std::cerr << " [" << to_string(m.method) << " failed: " << m.error << "]";
        std::cerr << '\n';
    };
    const StudySummary summary = run_study(rc.sim, rc.methods, threads, progress);
    write_results(rc.out, rc.sim, rc.methods, summary);
    if (!o.timing) fs::remove(rc.out / "timing.csv");

    if (o.format == "csv") {
        std::cout << summary_csv(summary);
    } else {
        std::cout << summary_table(summary);
        std::cout << "missing fraction: " << std::fixed << std::setprecision(4) << summary.missing_fraction.mean
                  << " (rounds: " << rc.sim.rounds << ")\n";
    }
    return 0;
}

struct FitOptions {
    fs::path data;
    std::string response;
    std::optional<fs::path> config;
    std::optional<int> M, K;
    std::optional<Index> t_stop_max;
    std::optional<double> nu;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::optional<std::string> out;
    std::optional<std::string> missing_token;
};

int cmd_fit(const FitOptions& o) {
    RunConfig rc = load_config(o.config);
    if (o.M) rc.sim.M = *o.M;
    if (o.K) rc.sim.K = *o.K;
    if (o.t_stop_max) rc.sim.t_stop_max = *o.t_stop_max;
    if (o.nu) rc.sim.nu = *o.nu;
    if (o.seed) rc.sim.seed = *o.seed;
    if (o.threads) rc.threads = *o.threads;
    if (o.missing_token) rc.missing_token = *o.missing_token;
    if (o.out) rc.out = *o.out;
    sync_cv(rc);
    try {
        rc.cv.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }

    MissingDataset d;
    try {
        d = load_csv(o.data, o.response, rc.missing_token);
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
    const MiBoostCvResult res = miboost_cv(d, rc.cv);

    write_text(rc.out / "model.json", to_json(res.final_fit, d.names) + "\n");
    write_text(rc.out / "cv_curve.csv", cv_report_csv(res.curve));
    write_text(rc.out / "config.json", cv_config_json(rc, o.data.string(), o.response));

    const LinearModel model = to_linear_model(res.final_fit);
    std::cout << "t_stop*: " << res.curve.t_star << " (cv error " << format_double(res.curve.min_error()) << ")\n";
    std::cout << "selected:";
    for (Index j : model.selected()) std::cout << ' ' << d.names[j];
    std::cout << "\nintercept (centered covariates): " << format_double(model.intercept) << '\n';
    std::cout << std::left;
    for (Index j : model.selected())
        std::cout << "  " << std::setw(16) << d.names[j] << format_double(model.slopes(j)) << '\n';
    return 0;
}

struct ImputeOptions {
    fs::path data;
    std::string response;
    int M = 10;
    std::optional<fs::path> config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    fs::path out = "imputed";
    std::optional<std::string> missing_token;
};

int cmd_impute(const ImputeOptions& o) {
    RunConfig rc = load_config(o.config);
    if (o.seed) rc.sim.seed = *o.seed;
    if (o.threads) rc.threads = *o.threads;
    if (o.missing_token) rc.missing_token = *o.missing_token;
    if (o.M < 1) throw UsageError("--m must be >= 1");
    MissingDataset d;
    try {
        d = load_csv(o.data, o.response, rc.missing_token);
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
    const ImputationSet set = mice_fit(d, o.M, rc.sim.imputation, rc.sim.seed, resolve_threads(rc.threads));
    dump_imputation_set(set, d, o.out);
    json echo;
    echo["data"] = o.data.string();
    echo["response"] = o.response;
    echo["M"] = o.M;
    echo["seed"] = rc.sim.seed;
    echo["cycles"] = rc.sim.imputation.cycles;
    echo["donor_count"] = rc.sim.imputation.donor_count;
    echo["screen_threshold"] = rc.sim.imputation.threshold;
    write_text(o.out / "config.json", echo.dump(2) + "\n");
    std::cout << "wrote " << o.M << " completed datasets to " << o.out.string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Boosting across multiply imputed datasets"};
    app.require_subcommand(1);

    SimulateOptions so;
    auto* sim = app.add_subcommand("simulate", "Run the simulation study and write results files");
    sim->add_option("--config", so.config, "JSON config file");
    sim->add_option("--rounds", so.rounds, "Number of rounds");
    sim->add_option("--methods", so.methods, "Methods: miboost, ea-boosting, salasso, saenet")->delimiter(',');
    sim->add_option("--threads", so.threads, "Worker threads (0 = all cores)");
    sim->add_option("--seed", so.seed, "Master seed");
    sim->add_option("--out", so.out, "Output directory (default results)");
    sim->add_option("--format", so.format, "Stdout format")->check(CLI::IsMember({"table", "csv"}));
    sim->add_flag("--timing", so.timing, "Also write timing.csv with per-round wall time");
    sim->add_flag("--quiet", so.quiet, "No progress on stderr");

    FitOptions fo;
    auto* fit = app.add_subcommand("fit", "Cross-validated fit on a CSV with missing values");
    fit->add_option("--data", fo.data, "Input CSV")->required();
    fit->add_option("--response", fo.response, "Response column")->required();
    fit->add_option("--config", fo.config, "JSON config file");
    fit->add_option("--m", fo.M, "Number of imputations");
    fit->add_option("--k", fo.K, "Number of folds");
    fit->add_option("--t-max", fo.t_stop_max, "Largest boosting iteration considered");
    fit->add_option("--nu", fo.nu, "Step length");
    fit->add_option("--seed", fo.seed, "Master seed");
    fit->add_option("--threads", fo.threads, "Worker threads (0 = all cores)");
    fit->add_option("--out", fo.out, "Output directory (default results)");
    fit->add_option("--na", fo.missing_token, "Missing-value token (default NA)");

    ImputeOptions io;
    auto* imp = app.add_subcommand("impute", "Multiple imputation of a CSV");
    imp->add_option("--data", io.data, "Input CSV")->required();
    imp->add_option("--response", io.response, "Response column")->required();
    imp->add_option("--m", io.M, "Number of imputations")->default_val(10);
    imp->add_option("--config", io.config, "JSON config file");
    imp->add_option("--seed", io.seed, "Master seed");
    imp->add_option("--threads", io.threads, "Worker threads (0 = all cores)");
    imp->add_option("--out", io.out, "Output directory")->default_val("imputed");
    imp->add_option("--na", io.missing_token, "Missing-value token (default NA)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*sim) return cmd_simulate(so);
        if (*fit) return cmd_fit(fo);
        if (*imp) return cmd_impute(io);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 2;
}
