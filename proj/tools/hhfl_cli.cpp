// Experiment driver: deterministic runs, parameter sweeps, property-suite
// verification, and report regeneration from emitted traces.

#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hhfl/hhfl.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPartial = 1;
constexpr int kExitBadConfig = 2;
constexpr int kExitNumeric = 3;

int cmd_run(const std::string& config_path) {
    hhfl::ExperimentConfig cfg = hhfl::load_experiment_config(config_path);
    const hhfl::ExperimentResult result = hhfl::run_experiment(cfg);
    hhfl::write_experiment_outputs(result, cfg.output_dir);
    for (const auto& row : hhfl::summary_rows(result))
        std::cout << row.experiment_id << (row.arch.empty() ? "" : " " + row.arch) << " "
                  << row.metric << " = " << hhfl::format_double(row.value) << "\n";
    std::cout << "wrote " << cfg.output_dir << "/" << result.experiment_id << "_summary.csv\n";
    return kExitOk;
}

int cmd_sweep(const std::string& sweep_path) {
    const hhfl::SweepConfig sweep = hhfl::load_sweep_config(sweep_path);
    std::filesystem::create_directories(sweep.base.output_dir);

    std::vector<hhfl::SummaryRow> gain_rows;
    int failures = 0;
    for (const auto& value : sweep.values) {
        hhfl::ExperimentConfig cfg;
        try {
            cfg = hhfl::apply_sweep_value(sweep.base, sweep.axis, value);
            const hhfl::ExperimentResult result = hhfl::run_experiment(cfg);
            hhfl::write_experiment_outputs(result, cfg.output_dir);
            const double gain = result.gain_steps ? *result.gain_steps : 0.0;
            gain_rows.push_back({cfg.experiment_id, sweep.axis + "=" + value.dump(),
                                 "efficiency_gain_steps", gain});
            if (result.gain_time)
                gain_rows.push_back({cfg.experiment_id, sweep.axis + "=" + value.dump(),
                                     "efficiency_gain_time", *result.gain_time});
            std::cout << cfg.experiment_id << ": gain_steps = "
                      << (result.gain_steps ? hhfl::format_double(*result.gain_steps) : "n/a")
                      << "\n";
        } catch (const hhfl::Error& e) {
            ++failures;
            std::cerr << "sweep row " << value.dump() << " failed: " << e.what() << "\n";
            gain_rows.push_back({cfg.experiment_id.empty() ? sweep.base.experiment_id
                                                           : cfg.experiment_id,
                                 sweep.axis + "=" + value.dump(), "failed", 1.0});
        }
    }
    hhfl::write_summary_csv(sweep.base.output_dir + "/" + sweep.base.experiment_id +
                                "_sweep.csv",
                            hhfl::format_double(0), sweep.base.seed, gain_rows);
    std::cout << "wrote " << sweep.base.output_dir << "/" << sweep.base.experiment_id
              << "_sweep.csv\n";
    return failures == 0 ? kExitOk : kExitPartial;
}

int cmd_verify(const std::string& suite, std::uint64_t seed) {
    std::cout << "verify suite '" << suite << "' with seed " << seed << "\n";
    bool ok = false;
    if (suite == "conservation") {
        ok = hhfl::verify_conservation(seed, 100, std::cout);
    } else if (suite == "reduction") {
        ok = hhfl::verify_reduction(seed, 20, std::cout);
    } else if (suite == "bounds") {
        ok = hhfl::verify_bounds(seed, 5, std::cout);
    } else if (suite == "gradcheck") {
        ok = hhfl::verify_gradcheck(seed, std::cout);
    } else {
        std::cerr << "unknown suite '" << suite
                  << "' (expected conservation|reduction|bounds|gradcheck)\n";
        return kExitBadConfig;
    }
    return ok ? kExitOk : kExitPartial;
}

int cmd_report(const std::string& dir) {
    hhfl::ConvergenceCriterion criterion;  // defaults match the run-side defaults
    std::map<std::string, std::map<std::string, int>> convergence;
    bool any = false;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.size() < 10 || name.substr(name.size() - 10) != "_trace.csv") continue;
        any = true;
        const hhfl::TrainingTrace trace = hhfl::read_trace_csv(entry.path().string());
        const std::string exp_id =
            name.substr(0, name.size() - 10 - trace.arch.size() - 1);
        try {
            convergence[exp_id][trace.arch] = hhfl::convergence_step(trace, criterion);
        } catch (const hhfl::Error& e) {
            std::cerr << name << ": " << e.what() << "\n";
        }
    }
    if (!any) {
        std::cerr << "no *_trace.csv files under " << dir << "\n";
        return kExitBadConfig;
    }
    std::cout << "experiment_id,metric,value\n";
    for (const auto& [exp_id, by_arch] : convergence) {
        for (const auto& [arch, step] : by_arch)
            std::cout << exp_id << "," << arch << "_convergence_step," << step << "\n";
        const auto base = by_arch.find("hier_fedavg");
        const auto cand = by_arch.find("hhfl");
        if (base != by_arch.end() && cand != by_arch.end() && cand->second > 0)
            std::cout << exp_id << ",efficiency_gain_steps,"
                      << hhfl::format_double(static_cast<double>(base->second) / cand->second)
                      << "\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical federated learning simulator and analysis toolkit"};
    app.require_subcommand(1);

    std::string config_path, sweep_path, suite, report_dir;
    std::uint64_t verify_seed = 42;

    auto* run = app.add_subcommand("run", "Execute one experiment config");
    run->add_option("config", config_path, "JSON experiment config")->required();

    auto* sweep = app.add_subcommand("sweep", "Execute a sweep over one axis");
    sweep->add_option("config", sweep_path, "JSON sweep config")->required();

    auto* verify = app.add_subcommand("verify", "Run a randomized property suite");
    verify->add_option("suite", suite, "conservation|reduction|bounds|gradcheck")->required();
    verify->add_option("--seed", verify_seed, "Suite seed (printed for reproduction)");

    auto* report = app.add_subcommand("report", "Recompute metrics from emitted traces");
    report->add_option("dir", report_dir, "Directory with *_trace.csv files")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config_path);
        if (sweep->parsed()) return cmd_sweep(sweep_path);
        if (verify->parsed()) return cmd_verify(suite, verify_seed);
        if (report->parsed()) return cmd_report(report_dir);
    } catch (const hhfl::NumericFailure& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const hhfl::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBadConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBadConfig;
    }
    return kExitBadConfig;
}
