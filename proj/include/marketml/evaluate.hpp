#pragma once

#include <atomic>
#include <cstdint>
#include <thread>
#include <vector>

#include "marketml/dataset.hpp"
#include "marketml/evolve.hpp"
#include "marketml/market.hpp"

// Classification of held-out points: one event-driven market per point,
// prediction from the trailing-mean price. A point no agent trades on
// falls back to the population's majority class and is counted as a
// non-participating market.

namespace marketml {

struct PredictionRow {
    std::size_t index = 0;
    double p_final = 0.5;
    int predicted = 0;
    int actual = 0;
    bool participated = false;
};

struct EvalResult {
    Metrics metrics;
    std::vector<PredictionRow> predictions;
};

namespace detail {
constexpr std::uint64_t kEvalSeedTag = 0x4556414cULL;  // distinguishes eval from training markets
}

inline EvalResult evaluate(const Population& population, const Dataset& test,
                           const MarketConfig& config, int jobs = 1) {
    if (test.size() == 0) throw std::invalid_argument("evaluate: empty test set");
    if (population.agents.empty()) throw std::invalid_argument("evaluate: empty population");
    if (population.dim() != test.dim())
        throw std::invalid_argument("evaluate: population dimension " +
                                    std::to_string(population.dim()) +
                                    " does not match data dimension " + std::to_string(test.dim()));

    const AssetSide majority = population.majority_side();
    std::vector<PredictionRow> rows(test.size());
    std::atomic<std::size_t> cursor{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= test.size()) return;
            MarketConfig mc = config;
            mc.rng_seed = derive_seed(config.rng_seed, detail::kEvalSeedTag, i);
            mc.record_trajectory = false;
            const MarketOutcome outcome = run_event_driven(population.agents, test.features.row(i), mc);
            PredictionRow& row = rows[i];
            row.index = i;
            row.actual = test.labels[i];
            row.participated = outcome.any_participation;
            row.p_final = final_price_estimate(outcome, config.smoothing_window);
            row.predicted = outcome.any_participation ? side_index(classify(row.p_final))
                                                      : side_index(majority);
        }
    };
    const int n_threads = std::min<int>(jobs < 1 ? 1 : jobs, static_cast<int>(test.size()));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(n_threads);
        for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
        for (std::thread& t : threads) t.join();
    }

    std::vector<int> predicted, actual;
    predicted.reserve(rows.size());
    actual.reserve(rows.size());
    int nonparticipating = 0;
    for (const PredictionRow& r : rows) {
        predicted.push_back(r.predicted);
        actual.push_back(r.actual);
        nonparticipating += r.participated ? 0 : 1;
    }
    EvalResult result;
    result.metrics = compute_metrics(predicted, actual);
    result.metrics.nonparticipating_markets = nonparticipating;
    result.predictions = std::move(rows);
    return result;
}

}  // namespace marketml
