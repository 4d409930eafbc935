// Command-line front end: scene-driven scattering, decay, sweep, optimizer
// and oracle-check runs emitting CSV artifacts plus a run manifest.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include <magdda/magdda.hpp>

namespace {

constexpr int exit_ok = 0;
constexpr int exit_config = 2;
constexpr int exit_convergence = 3;
constexpr int exit_check_failed = 4;

struct CommonArgs {
    std::string scene_path;
    magdda::DriverOptions opt;
    double bz_override = 0.0;
    bool bz_set = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--scene", args.scene_path, "scene JSON file")->required();
    cmd->add_option("--out", args.opt.out_dir, "output directory (default .)");
    cmd->add_option("--jobs", args.opt.jobs, "worker threads (0 = all cores)");
    cmd->add_option("--seed", args.opt.seed, "random seed");
    cmd->add_option("--tol", args.opt.tolerance, "iterative solver residual target");
    cmd->add_option("--spacing", args.opt.spacing_um, "grid spacing override [um]");
    cmd->add_option("--bz", args.bz_override, "bias field override [T]")
        ->each([&args](const std::string&) { args.bz_set = true; });
}

magdda::Scene load(const CommonArgs& args, magdda::DriverOptions& opt) {
    opt = args.opt;
    if (args.bz_set)
        opt.b_override = args.bz_override;
    return magdda::load_scene(args.scene_path);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"magdda: coupled-dipole scattering and emission toolkit"};
    app.require_subcommand(1);

    CommonArgs scatter_args, decay_args, sweep_args, mie_args, opt_args, grid_args;

    CLI::App* cmd_scatter = app.add_subcommand("scatter", "plane-wave multipole cross sections");
    add_common(cmd_scatter, scatter_args);

    CLI::App* cmd_decay = app.add_subcommand("decay", "point-source decay-rate sweep");
    add_common(cmd_decay, decay_args);

    CLI::App* cmd_sweep =
        app.add_subcommand("sweep", "frequency x bias sweep in long CSV format");
    add_common(cmd_sweep, sweep_args);

    CLI::App* cmd_mie = app.add_subcommand("mie-check", "solver vs analytic sphere oracle");
    add_common(cmd_mie, mie_args);
    cmd_mie->add_flag("--strict", mie_args.opt.strict,
                      "exit 4 when deltas exceed 5% (cross sections) / 10% (rates)");

    CLI::App* cmd_opt = app.add_subcommand("optimize", "surrogate + GA placement search");
    add_common(cmd_opt, opt_args);
    cmd_opt->add_option("--dataset", opt_args.opt.dataset_path,
                        "sample CSV to reuse (or write when missing)");
    cmd_opt->add_option("--samples", opt_args.opt.dataset_count,
                        "latin hypercube sample count when generating");
    cmd_opt->add_option("--gap", opt_args.opt.gap_um, "offset-surface coupling distance [um]");
    cmd_opt->add_option("--population", opt_args.opt.ga.population, "GA population");
    cmd_opt->add_option("--generations", opt_args.opt.ga.generations, "GA generations");
    cmd_opt->add_option("--mutation", opt_args.opt.ga.mutation_rate, "GA mutation rate");
    cmd_opt->add_option("--epochs", opt_args.opt.train_epochs, "surrogate training epochs");
    cmd_opt->add_option("--dense-threshold", opt_args.opt.dense_threshold,
                        "direct-solve cutoff on 3 x active voxels");

    CLI::App* cmd_grid = app.add_subcommand("grid", "grid utilities");
    CLI::App* cmd_grid_dump = cmd_grid->add_subcommand("dump", "write voxel centers as CSV");
    add_common(cmd_grid_dump, grid_args);

    CLI11_PARSE(app, argc, argv);

    try {
        magdda::DriverOptions opt;
        if (cmd_scatter->parsed()) {
            magdda::run_scatter(load(scatter_args, opt), opt);
        } else if (cmd_decay->parsed()) {
            magdda::run_decay(load(decay_args, opt), opt);
        } else if (cmd_sweep->parsed()) {
            magdda::run_sweep(load(sweep_args, opt), opt);
        } else if (cmd_mie->parsed()) {
            const magdda::Scene scene = load(mie_args, opt);
            const magdda::MieCheckResult res = magdda::run_mie_check(scene, opt);
            if (opt.strict &&
                (res.max_delta_csca > 0.05 ||
                 (res.rates_checked && res.max_delta_rates > 0.10))) {
                std::cerr << "mie-check --strict: deltas exceed the gate\n";
                return exit_check_failed;
            }
        } else if (cmd_opt->parsed()) {
            magdda::run_optimize(load(opt_args, opt), opt);
        } else if (cmd_grid->parsed()) {
            if (!cmd_grid_dump->parsed()) {
                std::cerr << "grid: expected the 'dump' subcommand\n";
                return exit_config;
            }
            magdda::run_grid_dump(load(grid_args, opt), opt);
        }
        return exit_ok;
    } catch (const magdda::ConvergenceError& e) {
        std::cerr << "convergence failure: " << e.what() << '\n';
        return exit_convergence;
    } catch (const magdda::SlowConvergenceError& e) {
        std::cerr << "convergence failure: " << e.what() << '\n';
        return exit_convergence;
    } catch (const magdda::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_config;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_config;
    }
}
