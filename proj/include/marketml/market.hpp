#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <queue>
#include <span>
#include <stdexcept>
#include <vector>

#include "marketml/agent.hpp"
#include "marketml/lmsr.hpp"
#include "marketml/rng.hpp"

// Market dynamics. Two engines share the same agent logic:
//  - run_synchronous: deterministic epochal dynamic; every agent sees the
//    same pre-epoch state and all unit purchases apply as one batch. Used
//    for the theory demonstrations (convergence, memorization, limit
//    cycles), where it is exactly reproducible.
//  - run_event_driven: agents recurrently arrive at the market with
//    exponential inter-arrival times and trade against the live state.
//    Used for training and evaluation; reproducible from the seed alone.

namespace marketml {

constexpr double kUnlimitedBudget = std::numeric_limits<double>::infinity();

struct MarketConfig {
    Liquidity beta{0.01};
    double tau = 0.1;                 // opportunity-cost threshold, in [0, 1)
    std::int64_t max_epochs = 10000;  // synchronous engine
    double horizon = 500.0;           // event-driven engine, wall-clock limit
    double arrival_rate = 1.0;        // rate of the shared exponential inter-arrival
    MarketState initial_state{};
    std::uint64_t rng_seed = 0;
    int smoothing_window = 25;        // trailing-mean readout width
    bool record_trajectory = true;    // false keeps only the trailing readout window
};

struct TrajectoryPoint {
    double time = 0.0;
    MarketState state;
    PricePair prices;
};

struct LedgerEntry {
    double time = 0.0;
    std::uint32_t agent = 0;
    AssetSide side = AssetSide::Asset0;
    double cost = 0.0;
};

struct MarketOutcome {
    std::vector<TrajectoryPoint> trajectory;
    std::vector<LedgerEntry> ledger;
    PricePair final_prices;
    std::vector<AgentState> agent_states;  // indexed like the input agent span
    bool any_participation = false;
    bool absorbed = false;  // synchronous engine reached a zero-purchase epoch

    std::vector<std::uint32_t> participants() const {
        std::vector<std::uint32_t> ids;
        for (std::uint32_t i = 0; i < agent_states.size(); ++i)
            if (agent_states[i].participated) ids.push_back(i);
        return ids;
    }
};

// Per-agent profit at market close: held units of the asset matching the
// true label are worth 1, all other units 0.
struct Settlement {
    std::vector<double> profit;
};

namespace detail {

inline void validate_common(const MarketConfig& config) {
    if (config.tau < 0.0 || config.tau >= 1.0)
        throw std::invalid_argument("MarketConfig: tau must lie in [0, 1)");
    if (config.initial_state.q0 < 0 || config.initial_state.q1 < 0)
        throw std::invalid_argument("MarketConfig: share counts must be nonnegative");
    if (config.smoothing_window < 1)
        throw std::invalid_argument("MarketConfig: smoothing_window must be >= 1");
}

// Working copy of one agent for the duration of a run; ref_price is
// captured from the initial state.
inline std::vector<AgentParams> capture_params(std::span<const Agent> agents, PricePair initial) {
    std::vector<AgentParams> params;
    params.reserve(agents.size());
    for (const Agent& a : agents) {
        AgentParams p = a.params;
        p.ref_price = initial.of(p.side);
        params.push_back(std::move(p));
    }
    return params;
}

inline void append_trajectory(std::vector<TrajectoryPoint>& traj, const MarketConfig& config,
                              TrajectoryPoint point) {
    if (!config.record_trajectory &&
        traj.size() >= static_cast<std::size_t>(config.smoothing_window)) {
        traj.erase(traj.begin());
    }
    traj.push_back(point);
}

}  // namespace detail

// Deterministic epochal dynamic. Terminates at max_epochs or at the first
// epoch with zero purchases (absorbing state: nothing can change after).
inline MarketOutcome run_synchronous(std::span<const Agent> agents, std::span<const double> x,
                                     const MarketConfig& config) {
    detail::validate_common(config);
    if (config.max_epochs < 1)
        throw std::invalid_argument("run_synchronous: max_epochs must be >= 1");

    MarketOutcome out;
    MarketState state = config.initial_state;
    PricePair prices = spot_prices(state, config.beta);
    const std::vector<AgentParams> params = detail::capture_params(agents, prices);

    out.agent_states.reserve(agents.size());
    for (const Agent& a : agents) out.agent_states.push_back(AgentState{a.initial_budget, 0, 0.0, false});
    detail::append_trajectory(out.trajectory, config, {0.0, state, prices});

    for (std::int64_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::int64_t dq0 = 0, dq1 = 0;
        for (std::size_t i = 0; i < params.size(); ++i) {
            AgentState& st = out.agent_states[i];
            if (!decide(params[i], st, x, state, config.beta, config.tau)) continue;
            const double cost = trade_cost(state, params[i].side, 1, config.beta);
            (params[i].side == AssetSide::Asset1 ? dq1 : dq0) += 1;
            st.budget -= cost;
            st.holdings += 1;
            st.total_spent += cost;
            st.participated = true;
            out.ledger.push_back({static_cast<double>(epoch), static_cast<std::uint32_t>(i),
                                  params[i].side, cost});
        }
        if (dq0 == 0 && dq1 == 0) {
            out.absorbed = true;
            break;
        }
        state = apply_purchases(state, dq0, dq1);
        prices = spot_prices(state, config.beta);
        detail::append_trajectory(out.trajectory, config, {static_cast<double>(epoch), state, prices});
    }

    out.final_prices = prices;
    for (const AgentState& st : out.agent_states) out.any_participation |= st.participated;
    return out;
}

// Stochastic engine: an event queue orders agent arrivals; each arriving
// agent buys at most one unit against the live state and reschedules
// itself by a fresh exponential draw. Ends at the horizon.
inline MarketOutcome run_event_driven(std::span<const Agent> agents, std::span<const double> x,
                                      const MarketConfig& config) {
    detail::validate_common(config);
    if (!(config.horizon > 0.0))
        throw std::invalid_argument("run_event_driven: horizon must be > 0");
    if (!(config.arrival_rate > 0.0))
        throw std::invalid_argument("run_event_driven: arrival_rate must be > 0");

    MarketOutcome out;
    MarketState state = config.initial_state;
    PricePair prices = spot_prices(state, config.beta);
    const std::vector<AgentParams> params = detail::capture_params(agents, prices);
    const double b = config.beta.beta();

    // Per-agent constants: the quadratic membership term does not move
    // during a run, only the price-feedback term does.
    std::vector<double> quad_const(agents.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const AgentParams& p = params[i];
        if (x.size() != p.center.size())
            throw std::invalid_argument("run_event_driven: input dimension mismatch");
        double quad = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double d = x[j] - p.center[j];
            quad += p.axis_weights[j] * d * d;
        }
        quad_const[i] = p.scale * (1.0 - quad) + p.bias;
    }

    out.agent_states.reserve(agents.size());
    for (const Agent& a : agents) out.agent_states.push_back(AgentState{a.initial_budget, 0, 0.0, false});
    detail::append_trajectory(out.trajectory, config, {0.0, state, prices});

    struct Event {
        double t;
        std::uint32_t agent;
        bool operator>(const Event& o) const { return t != o.t ? t > o.t : agent > o.agent; }
    };
    std::priority_queue<Event, std::vector<Event>, std::greater<Event>> queue;
    Rng rng(config.rng_seed);
    for (std::uint32_t i = 0; i < agents.size(); ++i) {
        const double t0 = rng.exponential(config.arrival_rate);
        if (t0 <= config.horizon) queue.push({t0, i});
    }

    // cached log-sum-exp of the current state, refreshed on every purchase
    double a0 = b * static_cast<double>(state.q0);
    double a1 = b * static_cast<double>(state.q1);
    double lse_now = detail::log_sum_exp(a0, a1);

    while (!queue.empty()) {
        const Event ev = queue.top();
        queue.pop();
        const AgentParams& p = params[ev.agent];
        AgentState& st = out.agent_states[ev.agent];

        const double p_side = prices.of(p.side);
        const double pi = detail::sigmoid(quad_const[ev.agent] +
                                          p.price_sensitivity * (p_side - p.ref_price));
        const double after = p.side == AssetSide::Asset1
                                 ? detail::log_sum_exp(a0, b * static_cast<double>(state.q1 + 1))
                                 : detail::log_sum_exp(b * static_cast<double>(state.q0 + 1), a1);
        const double kappa = (after - lse_now) / b;

        if (kappa > 0.0 && (pi - kappa) / kappa >= config.tau && st.budget >= kappa) {
            state = apply_purchases(state, p.side == AssetSide::Asset0 ? 1 : 0,
                                    p.side == AssetSide::Asset1 ? 1 : 0);
            prices = spot_prices(state, config.beta);
            a0 = b * static_cast<double>(state.q0);
            a1 = b * static_cast<double>(state.q1);
            lse_now = detail::log_sum_exp(a0, a1);
            st.budget -= kappa;
            st.holdings += 1;
            st.total_spent += kappa;
            st.participated = true;
            out.ledger.push_back({ev.t, ev.agent, p.side, kappa});
            detail::append_trajectory(out.trajectory, config, {ev.t, state, prices});
        }

        const double next = ev.t + rng.exponential(config.arrival_rate);
        if (next <= config.horizon) queue.push({next, ev.agent});
    }

    out.final_prices = prices;
    for (const AgentState& st : out.agent_states) out.any_participation |= st.participated;
    return out;
}

inline Settlement settle(const MarketOutcome& outcome, std::span<const Agent> agents,
                         AssetSide true_label) {
    if (outcome.agent_states.size() != agents.size())
        throw std::invalid_argument("settle: outcome was produced from a different agent set");
    Settlement s;
    s.profit.reserve(agents.size());
    for (std::size_t i = 0; i < agents.size(); ++i) {
        const AgentState& st = outcome.agent_states[i];
        const double value = agents[i].params.side == true_label
                                 ? static_cast<double>(st.holdings)
                                 : 0.0;
        s.profit.push_back(value - st.total_spent);
    }
    return s;
}

// Arithmetic mean of p1 over the last min(window, length) trajectory entries.
inline double final_price_estimate(const MarketOutcome& outcome, int window) {
    if (outcome.trajectory.empty())
        throw std::invalid_argument("final_price_estimate: empty trajectory");
    if (window < 1) throw std::invalid_argument("final_price_estimate: window must be >= 1");
    const std::size_t n = std::min<std::size_t>(window, outcome.trajectory.size());
    double sum = 0.0;
    for (std::size_t i = outcome.trajectory.size() - n; i < outcome.trajectory.size(); ++i)
        sum += outcome.trajectory[i].prices.p1;
    return sum / static_cast<double>(n);
}

// p1 per trajectory entry. An absorbed synchronous run holds its final
// price forever, so the series may be padded with that exact continuation
// up to pad_to entries for analysis.
inline std::vector<double> price_series(const MarketOutcome& outcome, std::size_t pad_to = 0) {
    std::vector<double> series;
    series.reserve(std::max(outcome.trajectory.size(), pad_to));
    for (const TrajectoryPoint& t : outcome.trajectory) series.push_back(t.prices.p1);
    if (outcome.absorbed && !series.empty())
        while (series.size() < pad_to) series.push_back(series.back());
    return series;
}

enum class CycleKind { Converged, Cycle, Undetermined };

struct CycleResult {
    CycleKind kind = CycleKind::Undetermined;
    double value = 0.0;  // settled price when converged
    int period = 0;      // minimal period when cycling
};

// Converged: the trailing k values vary less than tolerance. Cycle: the
// trailing scan window repeats with some minimal period under tolerance.
inline CycleResult detect_cycle(std::span<const double> series, double tolerance, int k = 50,
                                int depth = 200) {
    if (series.size() < 4) return {CycleKind::Undetermined, 0.0, 0};

    const std::size_t tail = std::min<std::size_t>(k, series.size());
    double lo = series[series.size() - tail], hi = lo;
    for (std::size_t i = series.size() - tail; i < series.size(); ++i) {
        lo = std::min(lo, series[i]);
        hi = std::max(hi, series[i]);
    }
    if (hi - lo < tolerance) return {CycleKind::Converged, series.back(), 0};

    const std::size_t scan = std::min<std::size_t>(depth, series.size());
    const std::size_t start = series.size() - scan;
    for (std::size_t period = 2; period <= scan / 2; ++period) {
        bool ok = true;
        for (std::size_t i = start + period; i < series.size() && ok; ++i)
            ok = std::abs(series[i] - series[i - period]) <= tolerance;
        if (ok) return {CycleKind::Cycle, 0.0, static_cast<int>(period)};
    }
    return {CycleKind::Undetermined, 0.0, 0};
}

// Asset 1 iff price > threshold; exact ties go to Asset 0.
inline AssetSide classify(double price, double threshold = 0.5) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw std::invalid_argument("classify: threshold must lie in (0, 1)");
    return price > threshold ? AssetSide::Asset1 : AssetSide::Asset0;
}

}  // namespace marketml
