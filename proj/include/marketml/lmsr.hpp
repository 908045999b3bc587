#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

// Logarithmic Market Scoring Rule pricing for a two-asset market.
// Spot prices are the softmax of outstanding share counts; the amount a
// buyer actually pays is a log-sum-exp difference strictly between the
// pre- and post-trade spot prices.

namespace marketml {

enum class AssetSide : int { Asset0 = 0, Asset1 = 1 };

inline AssetSide opposite(AssetSide s) {
    return s == AssetSide::Asset0 ? AssetSide::Asset1 : AssetSide::Asset0;
}

inline int side_index(AssetSide s) { return static_cast<int>(s); }

// Outstanding share counts. Counts only grow: agents buy one unit at a
// time and there is no short selling.
struct MarketState {
    std::int64_t q0 = 0;
    std::int64_t q1 = 0;
};

struct PricePair {
    double p0 = 0.5;
    double p1 = 0.5;

    double of(AssetSide s) const { return s == AssetSide::Asset0 ? p0 : p1; }
};

// Liquidity factor beta > 0. Smaller beta means a unit purchase moves the
// price less.
class Liquidity {
public:
    explicit Liquidity(double beta) : beta_(beta) {
        if (!std::isfinite(beta) || beta <= 0.0)
            throw std::invalid_argument("Liquidity: beta must be finite and > 0, got " +
                                        std::to_string(beta));
    }
    double beta() const { return beta_; }

private:
    double beta_;
};

namespace detail {

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(exp(a) + exp(b)) with max subtraction
inline double log_sum_exp(double a, double b) {
    const double m = a > b ? a : b;
    const double n = a > b ? b : a;
    return m + std::log1p(std::exp(n - m));
}

}  // namespace detail

// p1 = exp(b q1) / (exp(b q0) + exp(b q1)), evaluated in shifted form so
// arbitrarily large b*q cannot overflow. p0 + p1 == 1 exactly.
inline PricePair spot_prices(MarketState state, Liquidity beta) {
    const double b = beta.beta();
    const double p1 = detail::sigmoid(b * static_cast<double>(state.q1 - state.q0));
    return PricePair{1.0 - p1, p1};
}

// Cost of buying dq units of `side`: (1/b) * log of the ratio of the
// post- and pre-trade exp sums. Satisfies dq*p_before < cost < dq*p_after.
inline double trade_cost(MarketState state, AssetSide side, std::int64_t dq, Liquidity beta) {
    if (dq < 0) throw std::invalid_argument("trade_cost: dq must be >= 0, got " + std::to_string(dq));
    if (dq == 0) return 0.0;
    const double b = beta.beta();
    const double a0 = b * static_cast<double>(state.q0);
    const double a1 = b * static_cast<double>(state.q1);
    double after;
    if (side == AssetSide::Asset1) {
        after = detail::log_sum_exp(a0, b * static_cast<double>(state.q1 + dq));
    } else {
        after = detail::log_sum_exp(b * static_cast<double>(state.q0 + dq), a1);
    }
    return (after - detail::log_sum_exp(a0, a1)) / b;
}

inline MarketState apply_purchases(MarketState state, std::int64_t dq0, std::int64_t dq1) {
    return MarketState{state.q0 + dq0, state.q1 + dq1};
}

}  // namespace marketml
