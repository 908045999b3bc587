#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "marketml/dataset.hpp"
#include "marketml/evaluate.hpp"
#include "marketml/evolve.hpp"
#include "marketml/market.hpp"

// Text artifacts: population records, CSV exports and checksums. Doubles
// are written with std::to_chars (shortest form that round-trips), so
// saved artifacts are bit-stable and locale-independent.

namespace marketml {

inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) throw std::runtime_error("format_double failed");
    return std::string(buf, ptr);
}

inline double parse_double_token(const std::string& token) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (ec != std::errc{} || ptr != token.data() + token.size())
        throw std::runtime_error("malformed numeric token \"" + token + "\"");
    return v;
}

inline constexpr const char* kPopulationFormat = "marketml-population-v1";

// One agent per line: side, center..., axis_weights..., bias, scale,
// price_sensitivity, ref_price, budget. Group structure is recovered on
// load from runs of identical (center, side); mutation bounds are a
// training-time construct and are not persisted.
inline void save_population(std::ostream& out, const Population& pop) {
    out << kPopulationFormat << " dim=" << pop.dim() << " agents=" << pop.agents.size() << "\n";
    for (const Agent& a : pop.agents) {
        const AgentParams& p = a.params;
        out << side_index(p.side);
        for (const double c : p.center) out << ' ' << format_double(c);
        for (const double w : p.axis_weights) out << ' ' << format_double(w);
        out << ' ' << format_double(p.bias) << ' ' << format_double(p.scale) << ' '
            << format_double(p.price_sensitivity) << ' ' << format_double(p.ref_price) << ' '
            << format_double(a.initial_budget) << '\n';
    }
}

inline void save_population(const std::string& path, const Population& pop) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_population: cannot write " + path);
    save_population(out, pop);
}

inline Population load_population(std::istream& in) {
    std::string header;
    if (!std::getline(in, header)) throw std::runtime_error("load_population: empty input");
    std::istringstream hs(header);
    std::string magic, dim_field, count_field;
    hs >> magic >> dim_field >> count_field;
    if (magic != kPopulationFormat || dim_field.rfind("dim=", 0) != 0 ||
        count_field.rfind("agents=", 0) != 0)
        throw std::runtime_error("load_population: unrecognized header \"" + header + "\"");
    const std::size_t dim = std::stoul(dim_field.substr(4));
    const std::size_t count = std::stoul(count_field.substr(7));

    Population pop;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::vector<std::string> tokens;
        std::string tok;
        while (ls >> tok) tokens.push_back(tok);
        if (tokens.size() != 1 + 2 * dim + 5)
            throw std::runtime_error("load_population: agent line has " +
                                     std::to_string(tokens.size()) + " fields, expected " +
                                     std::to_string(1 + 2 * dim + 5));
        AgentParams p;
        const int side = static_cast<int>(parse_double_token(tokens[0]));
        if (side != 0 && side != 1) throw std::runtime_error("load_population: bad side value");
        p.side = side == 1 ? AssetSide::Asset1 : AssetSide::Asset0;
        std::size_t t = 1;
        for (std::size_t j = 0; j < dim; ++j) p.center.push_back(parse_double_token(tokens[t++]));
        for (std::size_t j = 0; j < dim; ++j)
            p.axis_weights.push_back(parse_double_token(tokens[t++]));
        p.bias = parse_double_token(tokens[t++]);
        p.scale = parse_double_token(tokens[t++]);
        p.price_sensitivity = parse_double_token(tokens[t++]);
        p.ref_price = parse_double_token(tokens[t++]);
        const double budget = parse_double_token(tokens[t++]);

        if (pop.groups.empty() || pop.groups.back().center != p.center ||
            pop.groups.back().side != p.side) {
            GroupInfo g;
            g.center = p.center;
            g.side = p.side;
            pop.groups.push_back(std::move(g));
        }
        pop.groups.back().members.push_back(pop.agents.size());
        pop.agents.push_back(Agent{std::move(p), budget, pop.next_uid++});
    }
    if (pop.agents.size() != count)
        throw std::runtime_error("load_population: expected " + std::to_string(count) +
                                 " agents, read " + std::to_string(pop.agents.size()));
    return pop;
}

inline Population load_population(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_population: cannot open " + path);
    return load_population(in);
}

inline void write_trajectory_csv(const std::string& path, const MarketOutcome& outcome) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_trajectory_csv: cannot write " + path);
    out << "time,q0,q1,p0,p1\n";
    for (const TrajectoryPoint& t : outcome.trajectory)
        out << format_double(t.time) << ',' << t.state.q0 << ',' << t.state.q1 << ','
            << format_double(t.prices.p0) << ',' << format_double(t.prices.p1) << '\n';
}

inline void write_ledger_csv(const std::string& path, const MarketOutcome& outcome) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_ledger_csv: cannot write " + path);
    out << "time,agent_id,side,cost\n";
    for (const LedgerEntry& e : outcome.ledger)
        out << format_double(e.time) << ',' << e.agent << ',' << side_index(e.side) << ','
            << format_double(e.cost) << '\n';
}

inline void write_diagnostics_csv(const std::string& path,
                                  const std::vector<GenerationStats>& diagnostics) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_diagnostics_csv: cannot write " + path);
    out << "generation,rmse,sigma,nonparticipating_markets,train_accuracy\n";
    for (const GenerationStats& g : diagnostics)
        out << g.generation << ',' << format_double(g.rmse) << ',' << format_double(g.sigma) << ','
            << g.nonparticipating_markets << ',' << format_double(g.train_accuracy) << '\n';
}

inline void write_predictions_csv(const std::string& path,
                                  const std::vector<PredictionRow>& predictions) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_predictions_csv: cannot write " + path);
    out << "index,p_final,predicted,actual,participated\n";
    for (const PredictionRow& r : predictions)
        out << r.index << ',' << format_double(r.p_final) << ',' << r.predicted << ',' << r.actual
            << ',' << (r.participated ? 1 : 0) << '\n';
}

// FNV-1a over the file bytes; recorded in run manifests so a reproduced
// run can be checked for byte identity.
inline std::string fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("fnv1a64_file: cannot open " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[8192];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    char hex[17];
    static const char* digits = "0123456789abcdef";
    for (int i = 15; i >= 0; --i) {
        hex[i] = digits[h & 0xf];
        h >>= 4;
    }
    hex[16] = '\0';
    return std::string(hex, 16);
}

}  // namespace marketml
