#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "marketml/dataset.hpp"
#include "marketml/market.hpp"
#include "marketml/rng.hpp"

// Agent initialization from data, the evolutionary training loop, and the
// memorizing-market constructor.
//
// Training runs one event-driven market per training point and generation;
// the market on point i settles against label y_i and drives selection for
// the agent group centered at x_i. Markets of a generation are independent
// (child seeds derive from (seed, generation, point)), selection is
// sequential afterwards, so a run is reproducible bit-for-bit regardless
// of the thread count.

namespace marketml {

struct TrainConfig {
    int replicants_n = 5;   // agents per training point
    int retained_l = 3;     // survivors per group, < n
    int generations_g = 20;
    int batch_size_b = 0;   // 0 = all points every generation; else round-robin batches
    double r0_default = 0.05;
    double r0_prime_default = 0.1;
    double alpha_min = 0.01;
    double alpha_max = 5.0;
    double tau = 0.1;
    Liquidity beta{0.01};
    double initial_budget = 1000.0;
    std::uint64_t rng_seed = 0;
    double horizon = 500.0;
    double arrival_rate = 1.0;
    int smoothing_window = 25;
    int jobs = 1;
    bool ellipsoidal_mutation = false;   // mutate each axial radius independently
    bool record_selection_trace = false; // per-group selection records in diagnostics

    MarketConfig market_config(std::uint64_t seed) const {
        MarketConfig mc;
        mc.beta = beta;
        mc.tau = tau;
        mc.horizon = horizon;
        mc.arrival_rate = arrival_rate;
        mc.rng_seed = seed;
        mc.smoothing_window = smoothing_window;
        mc.record_trajectory = false;
        return mc;
    }
};

struct GroupInfo {
    std::vector<double> center;
    AssetSide side = AssetSide::Asset0;
    double bound_p = 0.0;  // mutation support [p, q]
    double bound_q = 0.0;
    std::vector<std::size_t> members;  // indices into Population::agents
};

struct Population {
    std::vector<Agent> agents;
    std::vector<GroupInfo> groups;
    std::uint64_t next_uid = 0;

    std::size_t dim() const {
        return agents.empty() ? 0 : agents.front().params.center.size();
    }

    // Majority side over agents; groups are equally sized, so this equals
    // the training-label majority. Ties go to Asset 0.
    AssetSide majority_side() const {
        std::int64_t ones = 0;
        for (const Agent& a : agents) ones += a.params.side == AssetSide::Asset1 ? 1 : 0;
        return 2 * ones > static_cast<std::int64_t>(agents.size()) ? AssetSide::Asset1
                                                                   : AssetSide::Asset0;
    }
};

struct AgentTraceRecord {
    std::uint64_t uid = 0;
    double profit = 0.0;
    bool participated = false;
};

struct GroupTrace {
    std::size_t group = 0;
    std::vector<AgentTraceRecord> records;
    std::vector<std::uint64_t> retained_uids;
};

struct GenerationStats {
    int generation = 0;  // 1-based
    double rmse = 0.0;
    double sigma = 0.0;
    int nonparticipating_markets = 0;
    double train_accuracy = 0.0;
    std::vector<std::size_t> batch_points;
    std::vector<double> point_prices;  // smoothed p1 per batch point
    std::vector<GroupTrace> trace;     // only when record_selection_trace
};

struct EvolveResult {
    Population population;
    std::vector<GenerationStats> diagnostics;
};

// Distances used to seed radii: r1 to the nearest same-class point
// (excluding i itself), r2 half the distance to the nearest point of the
// opposite class. A class singleton falls back to r1 = r2.
inline std::pair<double, double> nearest_radii(const Matrix& features,
                                               const std::vector<int>& labels, std::size_t i) {
    double best_same = std::numeric_limits<double>::infinity();
    double best_opp = std::numeric_limits<double>::infinity();
    const auto xi = features.row(i);
    for (std::size_t j = 0; j < features.rows; ++j) {
        if (j == i) continue;
        const auto xj = features.row(j);
        double d2 = 0.0;
        for (std::size_t k = 0; k < xi.size(); ++k) {
            const double d = xi[k] - xj[k];
            d2 += d * d;
        }
        double& best = labels[j] == labels[i] ? best_same : best_opp;
        best = std::min(best, d2);
    }
    if (!std::isfinite(best_opp))
        throw std::invalid_argument("nearest_radii: dataset has a single class");
    const double r2 = 0.5 * std::sqrt(best_opp);
    const double r1 = std::isfinite(best_same) ? std::sqrt(best_same) : r2;
    return {r1, r2};
}

// p = max(r0, min(r1, r2)), q = max(r0', 2 r2); repaired to (min, max)
// if a configuration ever inverts them.
inline std::pair<double, double> init_bounds(double r1, double r2, const TrainConfig& config) {
    double p = std::max(config.r0_default, std::min(r1, r2));
    double q = std::max(config.r0_prime_default, 2.0 * r2);
    if (p > q) std::swap(p, q);
    return {p, q};
}

namespace detail {

inline std::vector<double> spherical_weights(std::size_t dim, double radius) {
    return std::vector<double>(dim, 1.0 / (radius * radius));
}

inline void validate_train_config(const TrainConfig& c, std::size_t m) {
    if (c.replicants_n < 1) throw std::invalid_argument("TrainConfig: replicants_n must be >= 1");
    if (c.retained_l < 1 || c.retained_l >= c.replicants_n)
        throw std::invalid_argument("TrainConfig: need 1 <= retained_l < replicants_n");
    if (c.generations_g < 0) throw std::invalid_argument("TrainConfig: generations_g must be >= 0");
    if (c.batch_size_b < 0 || static_cast<std::size_t>(c.batch_size_b) > m)
        throw std::invalid_argument("TrainConfig: batch_size_b must lie in [0, m]");
    if (!(c.alpha_min < c.alpha_max) || c.alpha_min <= 0.0)
        throw std::invalid_argument("TrainConfig: invalid alpha range");
    if (!(c.initial_budget > 0.0)) throw std::invalid_argument("TrainConfig: invalid budget");
    if (c.jobs < 1) throw std::invalid_argument("TrainConfig: jobs must be >= 1");
}

}  // namespace detail

// n agents per training point: hyperspheres centered at the point, radius
// uniform in the per-point bounds, alpha uniform in the configured range,
// w_p standard normal. Bias stays 0, ref price 0.5.
inline Population init_population(const Matrix& features, const std::vector<int>& labels,
                                  const TrainConfig& config, Rng& rng) {
    if (features.rows == 0) throw std::invalid_argument("init_population: empty dataset");
    if (features.rows != labels.size())
        throw std::invalid_argument("init_population: features/labels size mismatch");
    detail::validate_train_config(config, features.rows);

    Population pop;
    pop.agents.reserve(features.rows * config.replicants_n);
    pop.groups.reserve(features.rows);
    for (std::size_t i = 0; i < features.rows; ++i) {
        const auto [r1, r2] = nearest_radii(features, labels, i);
        const auto [p, q] = init_bounds(r1, r2, config);
        GroupInfo group;
        group.center.assign(features.row(i).begin(), features.row(i).end());
        group.side = labels[i] == 1 ? AssetSide::Asset1 : AssetSide::Asset0;
        group.bound_p = p;
        group.bound_q = q;
        for (int k = 0; k < config.replicants_n; ++k) {
            const double radius = rng.uniform(p, q);
            AgentParams params;
            params.center = group.center;
            params.axis_weights = detail::spherical_weights(features.cols, radius);
            params.scale = rng.uniform(config.alpha_min, config.alpha_max);
            params.price_sensitivity = rng.normal();
            params.side = group.side;
            group.members.push_back(pop.agents.size());
            pop.agents.push_back(Agent{std::move(params), config.initial_budget, pop.next_uid++});
        }
        pop.groups.push_back(std::move(group));
    }
    return pop;
}

// sigma = 2 sqrt((1/m) sum (y_i - p_i)^2), the mutation-rate control.
// Lies in [0, 2]; 0 exactly when every price equals its label.
inline double rmse_sigma(std::span<const double> final_prices, std::span<const int> labels) {
    if (final_prices.empty() || final_prices.size() != labels.size())
        throw std::invalid_argument("rmse_sigma: mismatched or empty inputs");
    double sum = 0.0;
    for (std::size_t i = 0; i < final_prices.size(); ++i) {
        const double r = static_cast<double>(labels[i]) - final_prices[i];
        sum += r * r;
    }
    return 2.0 * std::sqrt(sum / static_cast<double>(final_prices.size()));
}

namespace detail {

inline double radius_from_weight(double weight) { return 1.0 / std::sqrt(weight); }

inline double mutate_radius(double r, double sigma, double p, double q, Rng& rng) {
    const double next = r + sigma * rng.uniform(p - r, q - r);
    return std::clamp(next, p, q);
}

}  // namespace detail

// r <- r + sigma*U(p-r, q-r) (in [p,q] by construction for sigma <= 1,
// clamped otherwise), w_p <- w_p + sigma*N(0,1), alpha likewise but kept
// inside the initialization range. Center, side and bias never move.
inline AgentParams mutate(const AgentParams& agent, double sigma, double bound_p, double bound_q,
                          const TrainConfig& config, Rng& rng) {
    AgentParams out = agent;
    if (config.ellipsoidal_mutation) {
        for (double& w : out.axis_weights) {
            if (w <= 0.0) continue;  // cylinder axis, nothing to mutate
            const double r =
                detail::mutate_radius(detail::radius_from_weight(w), sigma, bound_p, bound_q, rng);
            w = 1.0 / (r * r);
        }
    } else {
        const double r = detail::mutate_radius(detail::radius_from_weight(out.axis_weights.at(0)),
                                               sigma, bound_p, bound_q, rng);
        out.axis_weights.assign(out.axis_weights.size(), 1.0 / (r * r));
    }
    out.price_sensitivity += sigma * rng.normal();
    out.scale = std::clamp(out.scale + sigma * rng.normal(), config.alpha_min, config.alpha_max);
    return out;
}

// Child takes alpha, the radius vector and w_p each from one parent,
// picked uniformly per parameter. Parents must share center and side.
inline AgentParams crossover(const AgentParams& parent_a, const AgentParams& parent_b, Rng& rng) {
    if (parent_a.center != parent_b.center || parent_a.side != parent_b.side)
        throw std::invalid_argument("crossover: parents have different centers or sides");
    AgentParams child = parent_a;
    child.scale = rng.uniform() < 0.5 ? parent_a.scale : parent_b.scale;
    child.axis_weights = rng.uniform() < 0.5 ? parent_a.axis_weights : parent_b.axis_weights;
    child.price_sensitivity =
        rng.uniform() < 0.5 ? parent_a.price_sensitivity : parent_b.price_sensitivity;
    return child;
}

namespace detail {

struct MarketResult {
    double price = 0.5;
    bool any_participation = false;
    std::vector<double> group_profit;       // profits of the point's own group members
    std::vector<bool> group_participated;
    std::vector<AgentTraceRecord> trace;    // whole-group records when tracing
};

// Runs the batch's markets, parallel over points, results in batch order.
inline std::vector<MarketResult> run_generation_markets(
    const Population& pop, const Matrix& features, const std::vector<int>& labels,
    std::span<const std::size_t> batch, const TrainConfig& config, int generation) {
    std::vector<MarketResult> results(batch.size());
    std::atomic<std::size_t> cursor{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t b = cursor.fetch_add(1);
            if (b >= batch.size()) return;
            const std::size_t i = batch[b];
            MarketConfig mc = config.market_config(
                derive_seed(config.rng_seed, static_cast<std::uint64_t>(generation), i));
            const MarketOutcome outcome = run_event_driven(pop.agents, features.row(i), mc);
            const AssetSide truth = labels[i] == 1 ? AssetSide::Asset1 : AssetSide::Asset0;
            const Settlement settlement = settle(outcome, pop.agents, truth);
            MarketResult& res = results[b];
            res.price = final_price_estimate(outcome, config.smoothing_window);
            res.any_participation = outcome.any_participation;
            const GroupInfo& group = pop.groups[i];
            res.group_profit.reserve(group.members.size());
            for (const std::size_t a : group.members) {
                res.group_profit.push_back(settlement.profit[a]);
                res.group_participated.push_back(outcome.agent_states[a].participated);
            }
            if (config.record_selection_trace) {
                for (const std::size_t a : group.members)
                    res.trace.push_back({pop.agents[a].uid, settlement.profit[a],
                                         outcome.agent_states[a].participated});
            }
        }
    };
    const int n_threads = std::min<int>(config.jobs, static_cast<int>(batch.size()));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(n_threads);
        for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
        for (std::thread& t : threads) t.join();
    }
    return results;
}

}  // namespace detail

// The evolutionary algorithm. Each generation runs one market per batch
// point; groups whose agents participated in their own market keep the
// top-l by profit (ties to the lower uid) and refill to n via crossover of
// the retained parents plus mutation scaled by the current sigma.
inline EvolveResult evolve(const Matrix& features, const std::vector<int>& labels,
                           const TrainConfig& config) {
    if (features.rows == 0 || features.rows != labels.size())
        throw std::invalid_argument("evolve: invalid dataset");
    detail::validate_train_config(config, features.rows);

    Rng rng(config.rng_seed);
    EvolveResult result;
    result.population = init_population(features, labels, config, rng);
    Population& pop = result.population;

    const std::size_t m = features.rows;
    const std::size_t batch_size =
        config.batch_size_b == 0 ? m : static_cast<std::size_t>(config.batch_size_b);
    const std::size_t n_batches = (m + batch_size - 1) / batch_size;
    const AssetSide majority = pop.majority_side();

    for (int gen = 1; gen <= config.generations_g; ++gen) {
        std::vector<std::size_t> batch;
        const std::size_t which = (static_cast<std::size_t>(gen) - 1) % n_batches;
        for (std::size_t i = which * batch_size; i < std::min(m, (which + 1) * batch_size); ++i)
            batch.push_back(i);

        const std::vector<detail::MarketResult> markets =
            detail::run_generation_markets(pop, features, labels, batch, config, gen);

        GenerationStats stats;
        stats.generation = gen;
        stats.batch_points = batch;
        std::vector<int> batch_labels;
        int correct = 0;
        for (std::size_t b = 0; b < batch.size(); ++b) {
            stats.point_prices.push_back(markets[b].price);
            batch_labels.push_back(labels[batch[b]]);
            stats.nonparticipating_markets += markets[b].any_participation ? 0 : 1;
            const AssetSide predicted =
                markets[b].any_participation ? classify(markets[b].price) : majority;
            correct += side_index(predicted) == labels[batch[b]] ? 1 : 0;
        }
        stats.sigma = rmse_sigma(stats.point_prices, batch_labels);
        stats.rmse = stats.sigma / 2.0;
        stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(batch.size());

        // selection and refill, sequential in point order
        for (std::size_t b = 0; b < batch.size(); ++b) {
            const std::size_t i = batch[b];
            GroupInfo& group = pop.groups[i];
            const detail::MarketResult& res = markets[b];

            std::vector<std::size_t> participants;  // positions within the group
            for (std::size_t k = 0; k < group.members.size(); ++k)
                if (res.group_participated[k]) participants.push_back(k);

            GroupTrace trace;
            if (config.record_selection_trace) {
                trace.group = i;
                trace.records = res.trace;
            }
            if (participants.empty()) {
                if (config.record_selection_trace) stats.trace.push_back(std::move(trace));
                continue;
            }

            std::sort(participants.begin(), participants.end(),
                      [&](std::size_t lhs, std::size_t rhs) {
                          if (res.group_profit[lhs] != res.group_profit[rhs])
                              return res.group_profit[lhs] > res.group_profit[rhs];
                          return pop.agents[group.members[lhs]].uid <
                                 pop.agents[group.members[rhs]].uid;
                      });
            const std::size_t keep =
                std::min<std::size_t>(config.retained_l, participants.size());
            participants.resize(keep);

            std::vector<std::size_t> retained_agents;  // population indices
            for (const std::size_t k : participants) {
                retained_agents.push_back(group.members[k]);
                if (config.record_selection_trace)
                    trace.retained_uids.push_back(pop.agents[group.members[k]].uid);
            }

            // rebuild the group: retained stay in place, every other slot
            // takes a fresh child
            std::vector<bool> keep_slot(group.members.size(), false);
            for (const std::size_t k : participants) keep_slot[k] = true;
            for (std::size_t k = 0; k < group.members.size(); ++k) {
                if (keep_slot[k]) continue;
                const Agent& pa =
                    pop.agents[retained_agents[rng.uniform_index(retained_agents.size())]];
                const Agent& pb =
                    pop.agents[retained_agents[rng.uniform_index(retained_agents.size())]];
                AgentParams child = crossover(pa.params, pb.params, rng);
                child = mutate(child, stats.sigma, group.bound_p, group.bound_q, config, rng);
                pop.agents[group.members[k]] =
                    Agent{std::move(child), config.initial_budget, pop.next_uid++};
            }
            if (config.record_selection_trace) stats.trace.push_back(std::move(trace));
        }
        result.diagnostics.push_back(std::move(stats));
    }
    return result;
}

struct MemorizingMarket {
    Population population;
    MarketConfig config;
    double worst_error = 0.0;
    int halvings = 0;  // times beta was halved from 1/100 before verifying
};

// The constructive approximation: one spherical agent per training point,
// radius half the distance to the nearest distinct point, alpha set from
// delta = epsilon/4, beta halved from 1/100 until a synchronous run on
// every training input lands within epsilon of its label.
inline MemorizingMarket build_memorizing_market(const Matrix& features,
                                                const std::vector<int>& labels, double epsilon) {
    if (features.rows == 0 || features.rows != labels.size())
        throw std::invalid_argument("build_memorizing_market: invalid dataset");
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw std::invalid_argument("build_memorizing_market: epsilon must lie in (0, 1)");

    const std::size_t m = features.rows;
    // exclusive-ball radii over distinct points; conflicting duplicates are
    // a separability violation
    std::vector<double> radius(m, 1.0);
    for (std::size_t i = 0; i < m; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < m; ++j) {
            if (j == i) continue;
            double d2 = 0.0;
            for (std::size_t k = 0; k < features.cols; ++k) {
                const double d = features.at(i, k) - features.at(j, k);
                d2 += d * d;
            }
            if (d2 == 0.0) {
                if (labels[i] != labels[j])
                    throw std::invalid_argument(
                        "build_memorizing_market: points " + std::to_string(i) + " and " +
                        std::to_string(j) + " are identical but labeled differently");
                continue;  // duplicate with the same label shares the ball
            }
            best = std::min(best, d2);
        }
        if (std::isfinite(best)) radius[i] = 0.5 * std::sqrt(best);
    }

    const double delta = epsilon / 4.0;
    const double alpha = std::log((1.0 - delta) / delta);

    MemorizingMarket result;
    Population& pop = result.population;
    for (std::size_t i = 0; i < m; ++i) {
        AgentParams params;
        params.center.assign(features.row(i).begin(), features.row(i).end());
        params.axis_weights = detail::spherical_weights(features.cols, radius[i]);
        params.scale = alpha;
        params.side = labels[i] == 1 ? AssetSide::Asset1 : AssetSide::Asset0;
        GroupInfo group;
        group.center = params.center;
        group.side = params.side;
        group.bound_p = group.bound_q = radius[i];
        group.members.push_back(pop.agents.size());
        pop.agents.push_back(Agent{std::move(params), kUnlimitedBudget, pop.next_uid++});
        pop.groups.push_back(std::move(group));
    }

    MarketConfig mc;
    mc.tau = 0.0;
    mc.record_trajectory = false;
    double beta = 0.01;
    for (int halvings = 0; halvings < 60; ++halvings) {
        mc.beta = Liquidity(beta);
        mc.max_epochs = static_cast<std::int64_t>(alpha / beta) * 2 + 100;
        double worst = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const MarketOutcome outcome = run_synchronous(pop.agents, features.row(i), mc);
            worst = std::max(worst,
                             std::abs(outcome.final_prices.p1 - static_cast<double>(labels[i])));
        }
        if (worst < epsilon) {
            result.config = mc;
            result.worst_error = worst;
            result.halvings = halvings;
            return result;
        }
        beta /= 2.0;
    }
    throw std::runtime_error("build_memorizing_market: no beta verified within 60 halvings");
}

}  // namespace marketml
