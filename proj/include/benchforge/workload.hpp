#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <string>
#include <vector>

#include "benchforge/analysis.hpp"

namespace benchforge::workload {

// --- spike exchange with adaptive per-rank buffer sections -----------------
//
// Every rank owns one equally sized section of the receive buffer.  A cycle
// sends at the current section capacity; if any rank's spike count overflows
// its section, the capacity grows to ceil(growth_factor * max_count) and the
// cycle repeats once (the second round cannot overflow).  When the maximum
// usage over a sliding window of cycles falls below shrink_threshold *
// capacity, the capacity shrinks without an extra round.

struct ExchangeConfig {
    int ranks = 1;
    int initial_capacity = 8;       // per-rank section capacity, in spikes
    double growth_factor = 1.5;     // > 1
    double shrink_threshold = 0.25; // in (0, 1)
    int min_capacity = 1;
    int window = 10;                // cycles of usage history consulted for shrinking

    void validate() const;
};

struct ExchangeState {
    int capacity = 0;
    long grow_count = 0;
    long shrink_count = 0;
    long two_round_count = 0;
    std::deque<int> usage_window;  // most recent per-cycle max usage, newest last

    static ExchangeState initial(const ExchangeConfig& cfg);
};

using Spike = std::uint32_t;

struct CycleResult {
    std::vector<std::vector<Spike>> delivered;  // per source rank
    int rounds = 1;
};

// Runs one communication cycle.  `outgoing[r]` holds the spikes rank r
// produced this cycle.  Postconditions: every spike is delivered exactly
// once, rounds <= 2, and usage of every section is within capacity.
CycleResult exchange_cycle(const std::vector<std::vector<Spike>>& outgoing, ExchangeState& state,
                           const ExchangeConfig& cfg);

std::string render_exchange_stats(const ExchangeState& state);

// --- STDP weight updates via exponential lookup tables ---------------------
//
// Weight changes follow dw = F(w) * exp(-|dt| / tau), with F+(w) =
// lambda * (w_max - w) for causal pairs and F-(w) = lambda * alpha * w for
// acausal pairs.  The exponential is tabulated per time step: entry k holds
// exp(-k * h / tau), each entry computed directly from the closed form.

struct StdpParams {
    double lambda = 0.1;     // learning rate
    double alpha = 1.0;      // asymmetry of depression vs potentiation
    double w_max = 1.0;
    double tau_plus_ms = 20.0;
    double tau_minus_ms = 20.0;
    double h_ms = 0.1;       // simulation step width

    void validate() const;
};

struct ExpTable {
    double h_ms = 0;
    double tau_plus_ms = 0;
    double tau_minus_ms = 0;
    std::vector<double> plus;   // plus[k] = exp(-k*h/tau_plus)
    std::vector<double> minus;  // minus[k] = exp(-k*h/tau_minus)
};

ExpTable build_exp_table(const StdpParams& params, std::size_t length);

// exp(-|delta_steps|*h/tau) from the table, falling back to the direct
// computation when |delta_steps| is outside the tabulated range.  The
// fallback is bit-identical to what a longer table would contain.
double exp_factor(const ExpTable& table, bool causal, long delta_steps);

// One pair update.  delta_steps > 0: causal (pre before post), weight moves
// towards w_max; delta_steps < 0: acausal, weight is depressed;
// delta_steps == 0: no change.  The result is clamped to [0, w_max].
// With a table, the exponential comes from exp_factor; without, it is
// computed directly.  Both paths produce identical results.
double stdp_update(double w, long delta_steps, const StdpParams& params,
                   const ExpTable* table = nullptr);

// --- the packaged benchmark -------------------------------------------------
//
// A self-contained, deterministic stand-in for a spiking-network simulation:
// Poisson spike generation per rank, the exchange cycle above, and STDP
// updates applied to a small synapse pool on delivery.  Wall time of the
// four propagation phases is measured for real; spike counts and weight
// trajectories depend only on (seed, ranks, steps).

struct DemoConfig {
    ExchangeConfig exchange;
    StdpParams stdp;
    std::uint64_t seed = 1;
    int steps = 100;           // exchange cycles to run
    double spike_rate = 3.0;   // expected spikes per rank per cycle
    std::size_t table_len = 2000;
    bool use_table = true;
    int synapses_per_rank = 64;
};

struct DemoResult {
    analysis::PhaseTimers timers;
    ExchangeState exchange;
    std::vector<std::vector<double>> weights;  // per rank, per synapse
    std::uint64_t spike_total = 0;
};

DemoResult run_demo(const DemoConfig& cfg);

// Runs the demo and writes `timers.txt` and `exchange_stats` into out_dir.
DemoResult run_demo_to(const DemoConfig& cfg, const std::filesystem::path& out_dir);

// --- deterministic randomness ----------------------------------------------

// SplitMix64: tiny, seedable, identical on every platform.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
    std::uint64_t next();
    double next_unit();  // in (0, 1)

private:
    std::uint64_t state_;
};

// Poisson sample via Knuth's product-of-uniforms method; exact for the
// small rates used here and reproducible across platforms.
int poisson_knuth(SplitMix64& rng, double rate);

}  // namespace benchforge::workload
