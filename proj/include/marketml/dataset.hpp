#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "marketml/rng.hpp"

// Data ingestion, label binarization, splits, min-max normalization,
// synthetic cluster generators and classification metrics.

namespace marketml {

// Row-major dense matrix, just enough for feature tables.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
};

struct FeatureRange {
    double min = 0.0;
    double max = 0.0;
    bool constant = false;
};

struct NormalizeTransform {
    std::vector<FeatureRange> ranges;
};

struct Dataset {
    Matrix features;
    std::vector<int> labels;  // 0 or 1
    std::vector<std::string> feature_names;
    NormalizeTransform normalization;        // identity until normalize() ran
    std::vector<std::size_t> dropped_rows;   // 1-based data row numbers with missing cells

    std::size_t size() const { return features.rows; }
    std::size_t dim() const { return features.cols; }
};

namespace detail {

inline bool is_missing_token(const std::string& s) {
    return s.empty() || s == "?" || s == "NA" || s == "na" || s == "N/A" || s == "n/a";
}

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    cells.push_back(trim(cur));
    return cells;
}

inline double parse_double(const std::string& s, std::size_t row, const std::string& col) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last || !std::isfinite(v))
        throw std::runtime_error("load_csv: non-numeric cell \"" + s + "\" at data row " +
                                 std::to_string(row) + ", column \"" + col + "\"");
    return v;
}

}  // namespace detail

// Reads a headered CSV, maps the label column to {0,1} via the positive
// value set, and drops rows containing missing cells (recorded by row
// number). When negative_values is non-empty, a label outside both sets
// is an error; otherwise everything non-positive maps to 0.
inline Dataset load_csv(const std::string& path, const std::string& label_column,
                        const std::vector<std::string>& positive_values,
                        const std::vector<std::string>& negative_values = {}) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_csv: cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_csv: " + path + " is empty");
    const std::vector<std::string> header = detail::split_csv_line(line);

    std::size_t label_idx = header.size();
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == label_column) label_idx = i;
    if (label_idx == header.size())
        throw std::runtime_error("load_csv: label column \"" + label_column + "\" not found in " +
                                 path);

    const std::unordered_set<std::string> pos(positive_values.begin(), positive_values.end());
    const std::unordered_set<std::string> neg(negative_values.begin(), negative_values.end());

    Dataset ds;
    for (std::size_t i = 0; i < header.size(); ++i)
        if (i != label_idx) ds.feature_names.push_back(header[i]);

    std::vector<double> values;
    std::size_t data_row = 0;
    while (std::getline(in, line)) {
        ++data_row;
        if (detail::trim(line).empty()) continue;
        const std::vector<std::string> cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw std::runtime_error("load_csv: data row " + std::to_string(data_row) + " has " +
                                     std::to_string(cells.size()) + " cells, expected " +
                                     std::to_string(header.size()));
        const bool missing = std::any_of(cells.begin(), cells.end(), detail::is_missing_token);
        if (missing) {
            ds.dropped_rows.push_back(data_row);
            continue;
        }
        const std::string& label_cell = cells[label_idx];
        int label;
        if (pos.count(label_cell)) {
            label = 1;
        } else if (neg.empty() || neg.count(label_cell)) {
            label = 0;
        } else {
            throw std::runtime_error("load_csv: unknown label value \"" + label_cell +
                                     "\" at data row " + std::to_string(data_row));
        }
        for (std::size_t i = 0; i < cells.size(); ++i)
            if (i != label_idx) values.push_back(detail::parse_double(cells[i], data_row, header[i]));
        ds.labels.push_back(label);
    }
    if (ds.labels.empty()) throw std::runtime_error("load_csv: no usable rows in " + path);

    ds.features.rows = ds.labels.size();
    ds.features.cols = ds.feature_names.size();
    ds.features.data = std::move(values);
    return ds;
}

namespace detail {

inline Dataset take_rows(const Dataset& ds, std::span<const std::size_t> idx) {
    Dataset out;
    out.feature_names = ds.feature_names;
    out.normalization = ds.normalization;
    out.features = Matrix(idx.size(), ds.dim());
    out.labels.reserve(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const auto src = ds.features.row(idx[r]);
        std::copy(src.begin(), src.end(), out.features.row(r).begin());
        out.labels.push_back(ds.labels[idx[r]]);
    }
    return out;
}

inline bool has_both_classes(const std::vector<int>& labels) {
    bool c0 = false, c1 = false;
    for (int y : labels) (y == 1 ? c1 : c0) = true;
    return c0 && c1;
}

}  // namespace detail

// Seeded random split without replacement. The test partition takes
// ceil(m * test_fraction) rows. Both partitions must contain both classes.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, double test_fraction, Rng& rng) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw std::invalid_argument("split: test_fraction must lie in (0, 1)");
    const std::size_t m = ds.size();
    const std::size_t n_test =
        static_cast<std::size_t>(std::ceil(static_cast<double>(m) * test_fraction));
    if (n_test == 0 || n_test >= m) throw std::invalid_argument("split: degenerate partition");

    std::vector<std::size_t> idx(m);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = m - 1; i > 0; --i)
        std::swap(idx[i], idx[rng.uniform_index(i + 1)]);

    Dataset test = detail::take_rows(ds, std::span(idx).subspan(0, n_test));
    Dataset train = detail::take_rows(ds, std::span(idx).subspan(n_test));
    if (!detail::has_both_classes(train.labels) || !detail::has_both_classes(test.labels))
        throw std::runtime_error(
            "split: a partition is missing a class entirely; try a different seed");
    return {std::move(train), std::move(test)};
}

// Min-max to [0,1] per feature from training statistics. Constant columns
// map to 0 and are flagged in the transform.
inline std::pair<Dataset, NormalizeTransform> normalize(const Dataset& train) {
    NormalizeTransform t;
    t.ranges.resize(train.dim());
    for (std::size_t c = 0; c < train.dim(); ++c) {
        double lo = train.features.at(0, c), hi = lo;
        for (std::size_t r = 1; r < train.size(); ++r) {
            lo = std::min(lo, train.features.at(r, c));
            hi = std::max(hi, train.features.at(r, c));
        }
        t.ranges[c] = {lo, hi, hi <= lo};
    }
    Dataset out = train;
    out.normalization = t;
    for (std::size_t r = 0; r < out.size(); ++r)
        for (std::size_t c = 0; c < out.dim(); ++c) {
            const FeatureRange& fr = t.ranges[c];
            out.features.at(r, c) =
                fr.constant ? 0.0 : (out.features.at(r, c) - fr.min) / (fr.max - fr.min);
        }
    return {std::move(out), t};
}

// Applies training statistics to held-out data. Values outside the
// training range extrapolate outside [0,1]; that is permitted.
inline Dataset apply_transform(const Dataset& ds, const NormalizeTransform& t) {
    if (t.ranges.size() != ds.dim())
        throw std::invalid_argument("apply_transform: dimension mismatch");
    Dataset out = ds;
    out.normalization = t;
    for (std::size_t r = 0; r < out.size(); ++r)
        for (std::size_t c = 0; c < out.dim(); ++c) {
            const FeatureRange& fr = t.ranges[c];
            out.features.at(r, c) =
                fr.constant ? 0.0 : (out.features.at(r, c) - fr.min) / (fr.max - fr.min);
        }
    return out;
}

struct ClusterSpec {
    std::vector<double> center;
    double radius = 1.0;
    std::size_t count = 0;
    int label = 0;
};

// Uniform samples inside each ball, labeled per spec.
inline Dataset synth_clusters(const std::vector<ClusterSpec>& clusters, Rng& rng) {
    if (clusters.empty()) throw std::invalid_argument("synth_clusters: no clusters given");
    const std::size_t dim = clusters.front().center.size();
    std::size_t total = 0;
    for (const ClusterSpec& c : clusters) {
        if (c.center.size() != dim)
            throw std::invalid_argument("synth_clusters: inconsistent dimensions");
        if (!(c.radius > 0.0)) throw std::invalid_argument("synth_clusters: radius must be > 0");
        total += c.count;
    }
    Dataset ds;
    ds.features = Matrix(total, dim);
    ds.labels.reserve(total);
    for (std::size_t c = 0; c < dim; ++c) ds.feature_names.push_back("x" + std::to_string(c));

    std::size_t r = 0;
    std::vector<double> dir(dim);
    for (const ClusterSpec& cl : clusters) {
        for (std::size_t k = 0; k < cl.count; ++k, ++r) {
            double norm2 = 0.0;
            for (std::size_t j = 0; j < dim; ++j) {
                dir[j] = rng.normal();
                norm2 += dir[j] * dir[j];
            }
            const double norm = std::sqrt(norm2);
            const double radial =
                cl.radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(dim));
            auto row = ds.features.row(r);
            for (std::size_t j = 0; j < dim; ++j)
                row[j] = cl.center[j] + (norm > 0.0 ? radial * dir[j] / norm : 0.0);
            ds.labels.push_back(cl.label);
        }
    }
    return ds;
}

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool zero_division = false;  // precision or recall had an empty denominator
};

struct Metrics {
    double accuracy = 0.0;
    std::array<ClassMetrics, 2> per_class;
    // confusion[actual][predicted]
    std::array<std::array<int, 2>, 2> confusion{{{0, 0}, {0, 0}}};
    int nonparticipating_markets = 0;
};

inline Metrics compute_metrics(std::span<const int> predicted, std::span<const int> actual) {
    if (predicted.size() != actual.size() || predicted.empty())
        throw std::invalid_argument("compute_metrics: mismatched or empty inputs");
    Metrics m;
    for (std::size_t i = 0; i < predicted.size(); ++i)
        m.confusion[actual[i]][predicted[i]] += 1;
    m.accuracy = static_cast<double>(m.confusion[0][0] + m.confusion[1][1]) /
                 static_cast<double>(predicted.size());
    for (int c = 0; c < 2; ++c) {
        const int tp = m.confusion[c][c];
        const int pred_c = m.confusion[0][c] + m.confusion[1][c];
        const int actual_c = m.confusion[c][0] + m.confusion[c][1];
        ClassMetrics& cm = m.per_class[c];
        if (pred_c == 0) {
            cm.precision = 0.0;
            cm.zero_division = true;
        } else {
            cm.precision = static_cast<double>(tp) / pred_c;
        }
        if (actual_c == 0) {
            cm.recall = 0.0;
            cm.zero_division = true;
        } else {
            cm.recall = static_cast<double>(tp) / actual_c;
        }
        cm.f1 = (cm.precision + cm.recall) > 0.0
                    ? 2.0 * cm.precision * cm.recall / (cm.precision + cm.recall)
                    : 0.0;
    }
    return m;
}

}  // namespace marketml
