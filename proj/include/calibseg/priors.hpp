#pragma once

// Neighbourhood priors: the Gaussian smoothing kernel, SVLS soft labels and
// the per-pixel target vector tau used by the logit-constraint loss.
//
// Patches are taken around each pixel with replicate padding at the borders.

#include "calibseg/core.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace calibseg {

enum class PriorMode { Mean, Gaussian, Max, Min, Median, Mode };

std::string_view to_string(PriorMode mode);
// Case-insensitive; throws InvalidConfig on an unknown name.
PriorMode parse_prior_mode(std::string_view name);

struct PriorConfig {
    PriorMode mode = PriorMode::Mean;
    std::size_t patch_size = 3;
    // Only read in Gaussian mode.
    double sigma = 1.0;
    // Mean mode only: divide the class counts by the patch area.
    bool normalize = true;

    void validate() const;
};

// Unnormalized w(i, j) = exp(-(i^2 + j^2) / (2 sigma^2)) over a size x size
// window centred on the origin.
Kernel gaussian_kernel(std::size_t size, double sigma);

// Kernel-weighted class proportions of a patch, divided by the total weight.
std::vector<double> svls_soft_label(const LabelMap& patch, const Kernel& kernel);

// The prior vector of a single patch. The patch must be patch_size x patch_size.
std::vector<double> compute_prior(const LabelMap& patch, const PriorConfig& config);

// rows x cols window centred on (r, c), replicate-padded at the borders.
LabelMap extract_patch(const LabelMap& labels, std::size_t r, std::size_t c, std::size_t rows, std::size_t cols);

// compute_prior evaluated at every pixel.
PriorField prior_field(const LabelMap& labels, const PriorConfig& config);

// Per-pixel svls_soft_label with the given kernel.
Field svls_soft_labels(const LabelMap& labels, const Kernel& kernel);

}  // namespace calibseg
