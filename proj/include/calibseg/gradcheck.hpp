#pragma once

// Central finite-difference check of the analytic loss gradients.
//
// Losses are sums of per-pixel terms and a pixel's logits only enter its own
// term, so each derivative is estimated from that single term. This keeps the
// round-off of the difference quotient at the scale of one term instead of
// the whole image.
//
// Relative error of a component is |a - n| / max(|a|, |n|, floor), with a and
// n expressed per pixel (before the image-mean scaling).

#include "calibseg/core.hpp"
#include "calibseg/losses.hpp"

#include <cstdint>
#include <vector>

namespace calibseg {

struct GradcheckOptions {
    double step = 1e-6;
    double floor = 1e-3;
    double kink_margin = 1e-3;
};

struct GradcheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    // Components skipped because their pixel sits near a kink.
    std::size_t skipped = 0;
};

GradcheckResult check_gradient(const Loss& loss, const LogitField& logits, const GradcheckOptions& options = {});

struct GradcheckSuiteRow {
    LossKind kind;
    GradcheckResult result;
};

// For each loss kind at its default hyperparameters: `trials` random 5x5
// fields with K = 4, logits uniform in [-3, 3] and uniformly random labels.
std::vector<GradcheckSuiteRow> gradcheck_suite(const std::vector<LossKind>& kinds, std::uint64_t seed,
                                               std::size_t trials, const GradcheckOptions& options = {});

}  // namespace calibseg
