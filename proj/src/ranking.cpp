#include "calibseg/ranking.hpp"

#include "calibseg/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <sstream>

namespace calibseg {

namespace {

constexpr double kUndefined = std::numeric_limits<double>::quiet_NaN();

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
    return s;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        cells.push_back(trim(cell));
    }
    if (!line.empty() && line.back() == ',') {
        cells.emplace_back();
    }
    return cells;
}

double parse_cell(const std::string& cell, std::size_t line_no) {
    const std::string key = lower(cell);
    if (key.empty() || key == "nan" || key == "na") {
        return kUndefined;
    }
    try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        if (used != cell.size() || !std::isfinite(v)) {
            throw std::invalid_argument(cell);
        }
        return v;
    } catch (const std::exception&) {
        throw FormatError("line " + std::to_string(line_no) + ": cannot parse value '" + cell + "'");
    }
}

std::vector<std::size_t> order_by_score(const std::vector<double>& score, const std::vector<bool>& usable) {
    std::vector<std::size_t> order;
    for (std::size_t m = 0; m < score.size(); ++m) {
        if (usable[m]) {
            order.push_back(m);
        }
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
    return order;
}

void validate_columns(const std::vector<MetricColumn>& metrics) {
    if (metrics.empty()) {
        throw InvalidInput("ranking needs at least one metric column");
    }
}

}  // namespace

std::string_view to_string(Orientation orientation) {
    return orientation == Orientation::HigherBetter ? "higher" : "lower";
}

Orientation parse_orientation(std::string_view name) {
    const std::string key = lower(trim(name));
    if (key == "higher" || key == "higher-better" || key == "higher_better" || key == "max") {
        return Orientation::HigherBetter;
    }
    if (key == "lower" || key == "lower-better" || key == "lower_better" || key == "min") {
        return Orientation::LowerBetter;
    }
    throw InvalidInput("unknown orientation '" + std::string(name) + "'");
}

std::vector<double> rank_column(std::span<const double> values, Orientation orientation) {
    if (values.empty()) {
        throw InvalidInput("cannot rank an empty column");
    }
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (std::isnan(values[i])) {
            continue;
        }
        if (!std::isfinite(values[i])) {
            throw InvalidInput("ranked values must be finite or undefined (NaN)");
        }
        idx.push_back(i);
    }
    const bool higher = orientation == Orientation::HigherBetter;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return higher ? values[a] > values[b] : values[a] < values[b];
    });
    std::vector<double> ranks(values.size(), kUndefined);
    std::size_t start = 0;
    while (start < idx.size()) {
        std::size_t end = start + 1;
        while (end < idx.size() && values[idx[end]] == values[idx[start]]) {
            ++end;
        }
        // Positions start+1 .. end share their mean.
        const double shared = (static_cast<double>(start + 1) + static_cast<double>(end)) / 2.0;
        for (std::size_t i = start; i < end; ++i) {
            ranks[idx[i]] = shared;
        }
        start = end;
    }
    return ranks;
}

void MetricTable::validate() const {
    validate_columns(metrics);
    if (methods.empty()) {
        throw InvalidInput("ranking needs at least one method");
    }
    if (values.size() != methods.size()) {
        throw InvalidInput("metric table has " + std::to_string(values.size()) + " rows for " +
                           std::to_string(methods.size()) + " methods");
    }
    for (const auto& row : values) {
        if (row.size() != metrics.size()) {
            throw InvalidInput("metric table row width does not match the metric count");
        }
    }
}

RankResult sum_rank(const MetricTable& table) {
    table.validate();
    const std::size_t n = table.methods.size();
    RankResult out;
    out.methods = table.methods;
    out.score.assign(n, 0.0);
    out.ranks.assign(n, std::vector<double>(table.metrics.size(), kUndefined));
    out.flagged.assign(n, false);
    std::vector<double> column(n);
    for (std::size_t j = 0; j < table.metrics.size(); ++j) {
        for (std::size_t m = 0; m < n; ++m) {
            column[m] = table.values[m][j];
        }
        const auto ranks = rank_column(column, table.metrics[j].orientation);
        for (std::size_t m = 0; m < n; ++m) {
            out.ranks[m][j] = ranks[m];
            if (std::isnan(ranks[m])) {
                out.flagged[m] = true;
            } else {
                out.score[m] += ranks[m];
            }
        }
    }
    std::vector<bool> usable(n);
    for (std::size_t m = 0; m < n; ++m) {
        usable[m] = !out.flagged[m];
    }
    out.order = order_by_score(out.score, usable);
    return out;
}

void CaseTable::validate() const {
    validate_columns(metrics);
    if (methods.empty()) {
        throw InvalidInput("ranking needs at least one method");
    }
    if (cases.empty() || values.size() != cases.size()) {
        throw InvalidInput("case table needs one value block per case");
    }
    for (const auto& block : values) {
        if (block.size() != methods.size()) {
            throw InvalidInput("case table block does not cover every method");
        }
        for (const auto& row : block) {
            if (row.size() != metrics.size()) {
                throw InvalidInput("case table row width does not match the metric count");
            }
        }
    }
}

RankResult mean_case_rank(const CaseTable& table) {
    table.validate();
    const std::size_t n = table.methods.size();
    const std::size_t num_cases = table.cases.size();
    RankResult out;
    out.methods = table.methods;
    out.score.assign(n, kUndefined);
    out.ranks.assign(n, std::vector<double>(num_cases, kUndefined));
    out.flagged.assign(n, false);

    std::vector<double> column(n);
    for (std::size_t c = 0; c < num_cases; ++c) {
        std::vector<double> rank_sum(n, 0.0);
        std::vector<std::size_t> rank_count(n, 0);
        for (std::size_t j = 0; j < table.metrics.size(); ++j) {
            for (std::size_t m = 0; m < n; ++m) {
                column[m] = table.values[c][m][j];
            }
            const auto ranks = rank_column(column, table.metrics[j].orientation);
            for (std::size_t m = 0; m < n; ++m) {
                if (std::isnan(ranks[m])) {
                    out.flagged[m] = true;
                } else {
                    rank_sum[m] += ranks[m];
                    ++rank_count[m];
                }
            }
        }
        for (std::size_t m = 0; m < n; ++m) {
            if (rank_count[m] > 0) {
                out.ranks[m][c] = rank_sum[m] / static_cast<double>(rank_count[m]);
            }
        }
    }

    std::vector<bool> usable(n, false);
    for (std::size_t m = 0; m < n; ++m) {
        double total = 0.0;
        std::size_t defined = 0;
        for (double r : out.ranks[m]) {
            if (!std::isnan(r)) {
                total += r;
                ++defined;
            }
        }
        if (defined > 0) {
            out.score[m] = total / static_cast<double>(defined);
            usable[m] = true;
        }
    }
    out.order = order_by_score(out.score, usable);
    return out;
}

MetricTable read_metric_table_csv(std::istream& in) {
    MetricTable table;
    std::string line;
    std::size_t line_no = 0;
    int stage = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped.front() == '#') {
            continue;
        }
        const auto cells = split_csv(stripped);
        if (cells.size() < 2) {
            throw FormatError("line " + std::to_string(line_no) + ": expected a label and at least one value");
        }
        if (stage == 0) {
            for (std::size_t i = 1; i < cells.size(); ++i) {
                table.metrics.push_back({cells[i], Orientation::HigherBetter});
            }
            stage = 1;
            continue;
        }
        if (cells.size() != table.metrics.size() + 1) {
            throw FormatError("line " + std::to_string(line_no) + ": expected " +
                              std::to_string(table.metrics.size() + 1) + " cells, got " +
                              std::to_string(cells.size()));
        }
        if (stage == 1) {
            for (std::size_t i = 1; i < cells.size(); ++i) {
                try {
                    table.metrics[i - 1].orientation = parse_orientation(cells[i]);
                } catch (const InvalidInput& e) {
                    throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
                }
            }
            stage = 2;
            continue;
        }
        table.methods.push_back(cells[0]);
        std::vector<double> row;
        for (std::size_t i = 1; i < cells.size(); ++i) {
            row.push_back(parse_cell(cells[i], line_no));
        }
        table.values.push_back(std::move(row));
    }
    if (stage < 2 || table.methods.empty()) {
        throw FormatError("metric table needs a header row, an orientation row and at least one method row");
    }
    return table;
}

}  // namespace calibseg
