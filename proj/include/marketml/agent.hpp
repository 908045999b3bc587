#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "marketml/lmsr.hpp"

// Agents value their asset through a sigmoid of an ellipsoidal membership
// function of the input point, plus a price-feedback term. An agent buys a
// single unit whenever the relative margin of its estimate over the actual
// purchase cost clears its opportunity-cost threshold.

namespace marketml {

struct AgentParams {
    std::vector<double> center;        // h, the point the region is anchored at
    std::vector<double> axis_weights;  // theta_j = 1/r_j^2; 0 turns that axis into a cylinder
    double bias = 0.0;                 // theta_0
    double scale = 1.0;                // alpha > 0
    double price_sensitivity = 0.0;    // w_p
    double ref_price = 0.5;            // price of the agent's side captured at market start
    AssetSide side = AssetSide::Asset1;
};

struct AgentState {
    double budget = 1000.0;
    std::int64_t holdings = 0;
    double total_spent = 0.0;
    bool participated = false;
};

// A tradeable agent: immutable parameters plus the bank it starts every
// market run with (engines create a fresh AgentState per run).
struct Agent {
    AgentParams params;
    double initial_budget = 1000.0;
    std::uint64_t uid = 0;
};

// sigma[alpha * (1 - sum_j theta_j (x_j - h_j)^2) + w_p (p - p_ref) + theta_0]
inline double estimate(const AgentParams& params, std::span<const double> x, double current_price) {
    if (x.size() != params.center.size() || params.axis_weights.size() != params.center.size())
        throw std::invalid_argument("estimate: input dimension " + std::to_string(x.size()) +
                                    " does not match agent dimension " +
                                    std::to_string(params.center.size()));
    double quad = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double d = x[j] - params.center[j];
        quad += params.axis_weights[j] * d * d;
    }
    const double arg = params.scale * (1.0 - quad) +
                       params.price_sensitivity * (current_price - params.ref_price) + params.bias;
    return detail::sigmoid(arg);
}

// Membership in the agent's time-varying decision set: the purchase rule
// with the budget gate ignored. Buy condition: (pi - kappa)/kappa >= tau
// where kappa is the unit trade cost of the agent's side.
inline bool in_region(const AgentParams& params, std::span<const double> x, MarketState market,
                      Liquidity beta, double tau) {
    const double kappa = trade_cost(market, params.side, 1, beta);
    if (!(kappa > 0.0)) return false;  // degenerate state, fall through to pass
    const double pi = estimate(params, x, spot_prices(market, beta).of(params.side));
    return (pi - kappa) / kappa >= tau;
}

// Full purchase decision: in-region and affordable. Never mutates state.
inline bool decide(const AgentParams& params, const AgentState& state, std::span<const double> x,
                   MarketState market, Liquidity beta, double tau) {
    if (!in_region(params, x, market, beta, tau)) return false;
    return state.budget >= trade_cost(market, params.side, 1, beta);
}

}  // namespace marketml
