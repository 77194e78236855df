#pragma once

// Challenge-style rank aggregation.
//
// Ranks start at 1 for the best method. Tied values share the mean of the
// positions they cover. Undefined entries are NaN; they are left out of the
// ranking of their column and the method is flagged.

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace calibseg {

enum class Orientation { HigherBetter, LowerBetter };

std::string_view to_string(Orientation orientation);
// Accepts "higher"/"lower" (and the "-better" suffixed forms).
Orientation parse_orientation(std::string_view name);

// NaN entries get a NaN rank; the others are ranked 1..n' among themselves.
std::vector<double> rank_column(std::span<const double> values, Orientation orientation);

struct MetricColumn {
    std::string name;
    Orientation orientation = Orientation::HigherBetter;
};

struct MetricTable {
    std::vector<std::string> methods;
    std::vector<MetricColumn> metrics;
    // values[method][metric]
    std::vector<std::vector<double>> values;

    void validate() const;
};

struct RankResult {
    std::vector<std::string> methods;
    // Sum of ranks (sum_rank) or mean case rank (mean_case_rank).
    std::vector<double> score;
    // sum_rank: ranks[method][metric]. mean_case_rank: ranks[method][case],
    // the mean of the method's metric ranks on that case. NaN when undefined.
    std::vector<std::vector<double>> ranks;
    // Methods with undefined entries. Flagged methods with no usable entry at
    // all are also missing from `order`.
    std::vector<bool> flagged;
    // Method indices from best to worst score; ties keep input order.
    std::vector<std::size_t> order;
};

// R_T = sum over metric columns of the method's rank. A method with an
// undefined entry is flagged and left out of `order`.
RankResult sum_rank(const MetricTable& table);

struct CaseTable {
    std::vector<std::string> methods;
    std::vector<MetricColumn> metrics;
    std::vector<std::string> cases;
    // values[case][method][metric]
    std::vector<std::vector<std::vector<double>>> values;

    void validate() const;
};

// Per case and metric, methods are ranked among those with a defined value.
// A method's case rank is the mean of its metric ranks on that case, and its
// score is the mean of its case ranks.
RankResult mean_case_rank(const CaseTable& table);

// CSV: header row "<label>,<metric>...", orientation row
// "<label>,higher|lower...", then "<method>,<value>..." rows. Lines starting
// with '#' are comments. Empty cells, "nan" and "na" are undefined.
MetricTable read_metric_table_csv(std::istream& in);

}  // namespace calibseg
