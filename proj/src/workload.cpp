#include "benchforge/workload.hpp"

#include <algorithm>
#include <cassert>
#include <chrono>
#include <cmath>

#include "benchforge/errors.hpp"
#include "benchforge/util.hpp"

namespace benchforge::workload {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw Error(ErrorKind::Workload, msg); }

using clock = std::chrono::steady_clock;

struct PhaseTimer {
    double& sink;
    clock::time_point start = clock::now();
    explicit PhaseTimer(double& s) : sink(s) {}
    ~PhaseTimer() {
        sink += std::chrono::duration<double>(clock::now() - start).count();
    }
};

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Pure function of (seed, cycle, rank, index): the pre/post spike-time
// offset, in steps, attributed to a delivered spike.
long delta_steps_for(std::uint64_t seed, long cycle, int rank, std::size_t index) {
    std::uint64_t h = mix64(seed ^ mix64(static_cast<std::uint64_t>(cycle) + 0x51ED2701) ^
                            mix64((static_cast<std::uint64_t>(rank) << 32) | index));
    return static_cast<long>(h % 801) - 400;
}

}  // namespace

std::uint64_t SplitMix64::next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    return mix64(z);
}

double SplitMix64::next_unit() {
    return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
}

int poisson_knuth(SplitMix64& rng, double rate) {
    if (rate <= 0) return 0;
    double limit = std::exp(-rate);
    int k = 0;
    double p = 1.0;
    do {
        ++k;
        p *= rng.next_unit();
    } while (p > limit);
    return k - 1;
}

void ExchangeConfig::validate() const {
    if (ranks < 1) fail("exchange needs at least one rank");
    if (min_capacity < 1) fail("min_capacity must be at least 1");
    if (initial_capacity < min_capacity) fail("initial capacity below min_capacity");
    if (!(growth_factor > 1.0)) fail("growth_factor must be greater than 1");
    if (!(shrink_threshold > 0.0 && shrink_threshold < 1.0))
        fail("shrink_threshold must be in (0, 1)");
    if (window < 1) fail("shrink window must be at least 1 cycle");
}

ExchangeState ExchangeState::initial(const ExchangeConfig& cfg) {
    cfg.validate();
    ExchangeState st;
    st.capacity = cfg.initial_capacity;
    return st;
}

CycleResult exchange_cycle(const std::vector<std::vector<Spike>>& outgoing, ExchangeState& state,
                           const ExchangeConfig& cfg) {
    if (static_cast<int>(outgoing.size()) != cfg.ranks)
        fail("outgoing spike sets do not match the rank count");

    int max_count = 0;
    for (const auto& spikes : outgoing)
        max_count = std::max(max_count, static_cast<int>(spikes.size()));

    CycleResult result;
    // Round one uses the current section capacity.  Overflow of any rank's
    // section triggers a capacity increase and one repetition; the new
    // capacity accommodates the largest count, so round two cannot overflow.
    if (max_count > state.capacity) {
        state.capacity = static_cast<int>(std::ceil(cfg.growth_factor * max_count));
        ++state.grow_count;
        ++state.two_round_count;
        result.rounds = 2;
    }
    assert(max_count <= state.capacity);
    result.delivered = outgoing;

    // Shrink decision from a sliding window of per-cycle peak usage; never
    // needs an extra round because the data already fit.
    state.usage_window.push_back(max_count);
    while (static_cast<int>(state.usage_window.size()) > cfg.window)
        state.usage_window.pop_front();
    int window_max = *std::max_element(state.usage_window.begin(), state.usage_window.end());
    if (window_max < cfg.shrink_threshold * state.capacity) {
        int candidate = std::max(static_cast<int>(std::ceil(cfg.growth_factor * window_max)),
                                 cfg.min_capacity);
        if (candidate < state.capacity) {
            state.capacity = candidate;
            ++state.shrink_count;
        }
    }
    return result;
}

std::string render_exchange_stats(const ExchangeState& state) {
    std::string out;
    out += "grow_count " + util::render_int(state.grow_count) + "\n";
    out += "shrink_count " + util::render_int(state.shrink_count) + "\n";
    out += "two_round_count " + util::render_int(state.two_round_count) + "\n";
    out += "final_capacity " + util::render_int(state.capacity) + "\n";
    return out;
}

void StdpParams::validate() const {
    if (!(lambda > 0)) fail("lambda must be positive");
    if (alpha < 0) fail("alpha must be non-negative");
    if (!(w_max > 0)) fail("w_max must be positive");
    if (!(tau_plus_ms > 0) || !(tau_minus_ms > 0)) fail("time constants must be positive");
    if (!(h_ms > 0)) fail("step width h must be positive");
}

ExpTable build_exp_table(const StdpParams& params, std::size_t length) {
    params.validate();
    if (length < 1) fail("exponential table needs at least one entry");
    ExpTable table;
    table.h_ms = params.h_ms;
    table.tau_plus_ms = params.tau_plus_ms;
    table.tau_minus_ms = params.tau_minus_ms;
    table.plus.resize(length);
    table.minus.resize(length);
    // Each entry is computed directly from the closed form rather than by
    // repeated multiplication, so no rounding error accumulates along the
    // table and any entry equals the direct computation bit for bit.
    for (std::size_t k = 0; k < length; ++k) {
        table.plus[k] = std::exp(-(static_cast<double>(k) * params.h_ms) / params.tau_plus_ms);
        table.minus[k] = std::exp(-(static_cast<double>(k) * params.h_ms) / params.tau_minus_ms);
    }
    return table;
}

double exp_factor(const ExpTable& table, bool causal, long delta_steps) {
    std::uint64_t k = delta_steps < 0 ? static_cast<std::uint64_t>(-(delta_steps + 1)) + 1
                                      : static_cast<std::uint64_t>(delta_steps);
    const auto& column = causal ? table.plus : table.minus;
    if (k < column.size()) return column[k];
    double tau = causal ? table.tau_plus_ms : table.tau_minus_ms;
    return std::exp(-(static_cast<double>(k) * table.h_ms) / tau);
}

double stdp_update(double w, long delta_steps, const StdpParams& params, const ExpTable* table) {
    if (delta_steps == 0) return w;
    bool causal = delta_steps > 0;
    double factor;
    if (table) {
        if (table->h_ms != params.h_ms || table->tau_plus_ms != params.tau_plus_ms ||
            table->tau_minus_ms != params.tau_minus_ms)
            fail("exponential table was built for different parameters");
        factor = exp_factor(*table, causal, delta_steps);
    } else {
        std::uint64_t k = delta_steps < 0 ? static_cast<std::uint64_t>(-(delta_steps + 1)) + 1
                                          : static_cast<std::uint64_t>(delta_steps);
        double tau = causal ? params.tau_plus_ms : params.tau_minus_ms;
        factor = std::exp(-(static_cast<double>(k) * params.h_ms) / tau);
    }
    double dw = causal ? params.lambda * (params.w_max - w) * factor
                       : -params.lambda * params.alpha * w * factor;
    return std::clamp(w + dw, 0.0, params.w_max);
}

DemoResult run_demo(const DemoConfig& cfg) {
    cfg.exchange.validate();
    cfg.stdp.validate();
    if (cfg.steps < 0) fail("steps must be non-negative");
    if (cfg.spike_rate < 0) fail("spike_rate must be non-negative");
    if (cfg.synapses_per_rank < 1) fail("need at least one synapse per rank");

    DemoResult result;
    double t_construction = 0, t_update = 0, t_collocate = 0, t_communicate = 0, t_deliver = 0;

    ExpTable table;
    std::vector<SplitMix64> rngs;
    {
        PhaseTimer timer(t_construction);
        table = build_exp_table(cfg.stdp, cfg.table_len);
        result.exchange = ExchangeState::initial(cfg.exchange);
        result.weights.assign(static_cast<std::size_t>(cfg.exchange.ranks),
                              std::vector<double>(static_cast<std::size_t>(cfg.synapses_per_rank),
                                                  cfg.stdp.w_max / 2));
        rngs.reserve(static_cast<std::size_t>(cfg.exchange.ranks));
        for (int r = 0; r < cfg.exchange.ranks; ++r)
            rngs.emplace_back(mix64(cfg.seed ^ (0x9E3779B97F4A7C15ULL * (r + 1))));
    }

    std::vector<std::vector<Spike>> outgoing(static_cast<std::size_t>(cfg.exchange.ranks));
    std::vector<Spike> packed;
    std::vector<std::uint32_t> seq(static_cast<std::size_t>(cfg.exchange.ranks), 0);

    for (long cycle = 0; cycle < cfg.steps; ++cycle) {
        {
            PhaseTimer timer(t_update);
            for (int r = 0; r < cfg.exchange.ranks; ++r) {
                auto& spikes = outgoing[static_cast<std::size_t>(r)];
                spikes.clear();
                int n = poisson_knuth(rngs[static_cast<std::size_t>(r)], cfg.spike_rate);
                for (int i = 0; i < n; ++i)
                    spikes.push_back((static_cast<Spike>(r) << 20) |
                                     (seq[static_cast<std::size_t>(r)]++ & 0xFFFFFu));
            }
        }
        {
            // gather-to-send-buffer: one section per rank at current capacity
            PhaseTimer timer(t_collocate);
            packed.assign(static_cast<std::size_t>(cfg.exchange.ranks) *
                              static_cast<std::size_t>(result.exchange.capacity),
                          0);
            std::size_t section = static_cast<std::size_t>(result.exchange.capacity);
            for (int r = 0; r < cfg.exchange.ranks; ++r) {
                const auto& spikes = outgoing[static_cast<std::size_t>(r)];
                std::size_t base = static_cast<std::size_t>(r) * section;
                for (std::size_t i = 0; i < spikes.size() && i < section; ++i)
                    packed[base + i] = spikes[i];
            }
        }
        CycleResult delivered;
        {
            PhaseTimer timer(t_communicate);
            delivered = exchange_cycle(outgoing, result.exchange, cfg.exchange);
        }
        {
            PhaseTimer timer(t_deliver);
            const ExpTable* tbl = cfg.use_table ? &table : nullptr;
            for (int r = 0; r < cfg.exchange.ranks; ++r) {
                const auto& spikes = delivered.delivered[static_cast<std::size_t>(r)];
                for (std::size_t i = 0; i < spikes.size(); ++i) {
                    long delta = delta_steps_for(cfg.seed, cycle, r, i);
                    auto& w = result.weights[static_cast<std::size_t>(r)]
                                            [spikes[i] % static_cast<Spike>(cfg.synapses_per_rank)];
                    w = stdp_update(w, delta, cfg.stdp, tbl);
                    ++result.spike_total;
                }
            }
        }
    }

    result.timers.construction = std::max(t_construction, 1e-9);
    result.timers.update = cfg.steps ? std::max(t_update, 1e-9) : 0.0;
    result.timers.collocate = cfg.steps ? std::max(t_collocate, 1e-9) : 0.0;
    result.timers.communicate = cfg.steps ? std::max(t_communicate, 1e-9) : 0.0;
    result.timers.deliver = cfg.steps ? std::max(t_deliver, 1e-9) : 0.0;
    // the simulated span: each exchange cycle advances the model by one step
    result.timers.model_time = static_cast<double>(std::max(cfg.steps, 1)) * cfg.stdp.h_ms / 1000.0;
    return result;
}

DemoResult run_demo_to(const DemoConfig& cfg, const std::filesystem::path& out_dir) {
    DemoResult result = run_demo(cfg);
    util::ensure_dir(out_dir);
    util::write_file(out_dir / "timers.txt", analysis::render_timers(result.timers));
    util::write_file(out_dir / "exchange_stats", render_exchange_stats(result.exchange));
    return result;
}

}  // namespace benchforge::workload
