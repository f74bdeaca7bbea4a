#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "striplab/cli.hpp"

namespace cli = striplab::cli;

int main(int argc, char** argv) {
    CLI::App app{"strip-attention-lab: strip attention, temporal graph and diffusion loss kernels"};
    app.require_subcommand(1);

    std::uint64_t default_seed = striplab::verify::kDefaultSeed;
    try {
        default_seed = striplab::verify::seed_from_env(default_seed);
    } catch (const std::invalid_argument& e) {
        std::cerr << "striplab: " << e.what() << '\n';
        return cli::kBadArguments;
    }

    cli::VerifyOptions verify_opt;
    verify_opt.suite.seed = default_seed;
    auto* verify = app.add_subcommand("verify", "Run oracle, gradient, impulse and chain checks");
    verify->add_option("--seed", verify_opt.suite.seed, "RNG seed (env STRIPLAB_SEED)");
    verify->add_option("--cases", verify_opt.suite.cases, "Random cases per oracle")->check(CLI::PositiveNumber);
    verify->add_flag("--inject-fault", verify_opt.suite.break_strip_index, "Swap in a strip_apply with reversed taps")
        ->group("");

    cli::BenchOptions bench_opt;
    bench_opt.config.seed = default_seed;
    std::string grid;
    std::string bench_out;
    auto* bench = app.add_subcommand("bench", "Time self-attention and STDA over a spatial grid");
    bench->add_option("--grid", grid, "Sizes, e.g. 8,16,32 or 8x16,32x32");
    bench->add_option("--channels", bench_opt.config.channels, "Channels C")->check(CLI::PositiveNumber);
    bench->add_option("--k", bench_opt.config.k, "Strip length K (odd)");
    bench->add_option("--reps", bench_opt.config.repetitions, "Timed repetitions per point (>= 3)");
    bench->add_option("--warmup", bench_opt.config.warmup, "Untimed warmup calls (>= 1)");
    bench->add_option("--seed", bench_opt.config.seed, "RNG seed (env STRIPLAB_SEED)");
    bench->add_option("--out", bench_out, "CSV output path (default stdout)");

    cli::LossesOptions losses_opt;
    losses_opt.seed = default_seed;
    std::size_t stride = 0;
    auto* losses = app.add_subcommand("losses", "Evaluate diffusion objectives on a fixture directory");
    losses->add_option("fixture", losses_opt.fixture_dir, "Fixture directory")->required();
    losses->add_option("--seed", losses_opt.seed, "Seed for extractor weights (env STRIPLAB_SEED)");
    auto* stride_opt = losses->add_option("--stride", stride, "Sliding-window stride")->check(CLI::PositiveNumber);

    cli::FilterOptions filter_opt;
    std::string proj_w, proj_b, filter_out;
    auto* filter = app.add_subcommand("filter", "Fuse conditions and filter a manifest by cosine agreement");
    filter->add_option("manifest", filter_opt.manifest, "JSON-lines manifest")->required();
    filter->add_option("--tau", filter_opt.tau, "Cosine threshold in [-1, 1]");
    filter->add_option("--lambda", filter_opt.lambda, "Text contribution weight");
    filter->add_option("--proj-w", proj_w, "TSR1 projection matrix d_a x d_t (default identity)");
    filter->add_option("--proj-b", proj_b, "TSR1 projection bias d_a (default zeros)");
    filter->add_option("--out", filter_out, "Write retained ids and summary here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return cli::kBadArguments;
    }

    if (*verify) return cli::cmd_verify(verify_opt, std::cout);
    if (*bench) {
        try {
            if (!grid.empty()) bench_opt.config.grid = striplab::bench::parse_grid(grid);
        } catch (const std::invalid_argument& e) {
            std::cerr << "striplab bench: " << e.what() << '\n';
            return cli::kBadArguments;
        }
        if (!bench_out.empty()) bench_opt.out = bench_out;
        return cli::cmd_bench(bench_opt, std::cout, std::cerr);
    }
    if (*losses) {
        if (stride_opt->count()) losses_opt.stride = stride;
        return cli::cmd_losses(losses_opt, std::cout, std::cerr);
    }
    if (!proj_w.empty()) filter_opt.projection = proj_w;
    if (!proj_b.empty()) filter_opt.bias = proj_b;
    if (!filter_out.empty()) filter_opt.out = filter_out;
    return cli::cmd_filter(filter_opt, std::cout, std::cerr);
}
