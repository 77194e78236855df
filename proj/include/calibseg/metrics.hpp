#pragma once

// Calibration (ECE, classwise ECE, reliability bins) and overlap/boundary
// (Dice, HD95) metrics for a single case.
//
// Confidence bins are left-open and right-closed, (i/M, (i+1)/M], with a
// confidence of exactly 0 placed in bin 0.

#include "calibseg/core.hpp"

#include <optional>
#include <vector>

namespace calibseg {

inline constexpr std::size_t kDefaultBins = 15;

struct BinStats {
    std::size_t index = 0;
    double lower = 0.0;
    double upper = 0.0;
    std::size_t count = 0;
    // Unset for an empty bin.
    std::optional<double> accuracy;
    std::optional<double> confidence;
};

std::size_t confidence_bin(double confidence, std::size_t bins);

// Max-probability reliability table. With `foreground_only`, a pixel counts
// when its ground truth or its argmax prediction is not background.
std::vector<BinStats> reliability_bins(const ProbField& probs, const LabelMap& gt, std::size_t bins,
                                       bool foreground_only);

double ece(const ProbField& probs, const LabelMap& gt, std::size_t bins, bool foreground_only);

// Sum over classes j and bins i of |B_ij| / N * |A_ij - C_ij|, where pixels are
// binned by s_j and N is the pixel count.
double cece(const ProbField& probs, const LabelMap& gt, std::size_t bins);

// 2|A & B| / (|A| + |B|) on the masks of class k; 1 when both are empty.
double dice(const LabelMap& pred, const LabelMap& gt, ClassId k);

// 95th percentile (linear interpolation) of the pooled nearest-boundary
// distances between the two masks of class k. Boundary pixels have a
// 4-neighbour outside the mask or outside the image. Empty when exactly one
// mask is empty; 0 when both are.
std::optional<double> hd95(const LabelMap& pred, const LabelMap& gt, ClassId k);

// Linear-interpolation percentile, q in [0, 1]. `values` must be non-empty.
double percentile(std::vector<double> values, double q);

// Scores over the foreground classes 1..K-1.
struct CaseMetrics {
    std::vector<double> dsc;
    double mean_dsc = 0.0;
    std::vector<std::optional<double>> hd95;
    // Mean of the defined per-class values; empty if none is defined.
    std::optional<double> mean_hd95;
    double ece = 0.0;
    double cece = 0.0;
};

CaseMetrics evaluate_case(const ProbField& probs, const LabelMap& gt, std::size_t bins = kDefaultBins,
                          bool foreground_only = true);

}  // namespace calibseg
