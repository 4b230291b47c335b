#include <cstdio>
#include <exception>

#include <CLI11.hpp>

#include "benchforge/analysis.hpp"
#include "benchforge/errors.hpp"
#include "benchforge/util.hpp"
#include "benchforge/workload.hpp"

// Deterministic spike-exchange benchmark: the workload the demo pipeline
// schedules.  Writes timers.txt and exchange_stats into --out.

int main(int argc, char** argv) {
    using namespace benchforge;

    CLI::App app{"spike-exchange demo workload"};
    workload::DemoConfig cfg;
    std::string out_dir = ".";

    app.add_option("--ranks", cfg.exchange.ranks, "simulated ranks")->check(CLI::PositiveNumber);
    app.add_option("--steps", cfg.steps, "exchange cycles")->check(CLI::PositiveNumber);
    app.add_option("--seed", cfg.seed, "rng seed");
    app.add_option("--rate", cfg.spike_rate, "expected spikes per rank per cycle");
    app.add_option("--capacity", cfg.exchange.initial_capacity, "initial buffer section size");
    app.add_option("--growth", cfg.exchange.growth_factor, "buffer growth factor");
    app.add_option("--shrink-threshold", cfg.exchange.shrink_threshold, "buffer shrink threshold");
    app.add_option("--min-capacity", cfg.exchange.min_capacity, "buffer shrink floor");
    app.add_option("--window", cfg.exchange.window, "usage window for shrinking");
    app.add_option("--tau-plus", cfg.stdp.tau_plus_ms, "potentiation time constant [ms]");
    app.add_option("--tau-minus", cfg.stdp.tau_minus_ms, "depression time constant [ms]");
    app.add_option("--step-ms", cfg.stdp.h_ms, "simulation step width [ms]");
    app.add_option("--lambda", cfg.stdp.lambda, "learning rate");
    app.add_option("--alpha", cfg.stdp.alpha, "depression asymmetry");
    app.add_option("--wmax", cfg.stdp.w_max, "weight ceiling");
    app.add_option("--table-len", cfg.table_len, "exponential table length");
    app.add_option("--use-table", cfg.use_table, "use the lookup table (true/false)");
    app.add_option("--synapses", cfg.synapses_per_rank, "synapses per rank");
    app.add_option("--out", out_dir, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        auto result = workload::run_demo_to(cfg, out_dir);
        std::printf("spikes %llu\n", static_cast<unsigned long long>(result.spike_total));
        std::printf("capacity %d\n", result.exchange.capacity);
        std::printf("grow %ld shrink %ld two_round %ld\n", result.exchange.grow_count,
                    result.exchange.shrink_count, result.exchange.two_round_count);
        std::printf("rtf %s\n", util::render_double(analysis::real_time_factor(result.timers)).c_str());
        return 0;
    } catch (const Error& e) {
        std::fprintf(stderr, "benchforge-demo: %s\n", e.what());
        return e.exit_code();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "benchforge-demo: %s\n", e.what());
        return 2;
    }
}
