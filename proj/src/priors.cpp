#include "calibseg/priors.hpp"

#include "calibseg/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

namespace calibseg {

namespace {

constexpr std::pair<PriorMode, std::string_view> kModeNames[] = {
    {PriorMode::Mean, "mean"},     {PriorMode::Gaussian, "gaussian"}, {PriorMode::Max, "max"},
    {PriorMode::Min, "min"},       {PriorMode::Median, "median"},     {PriorMode::Mode, "mode"},
};

std::vector<double> one_hot_vector(std::size_t k, std::size_t num_classes) {
    std::vector<double> v(num_classes, 0.0);
    v[k] = 1.0;
    return v;
}

// Label histogram; the order statistics below work off it so that the
// smallest class id wins every tie.
std::vector<std::size_t> histogram(const LabelMap& patch) {
    std::vector<std::size_t> counts(patch.num_classes(), 0);
    for (ClassId v : patch.values()) {
        ++counts[v];
    }
    return counts;
}

std::size_t lowest_present(const std::vector<std::size_t>& counts) {
    return static_cast<std::size_t>(std::find_if(counts.begin(), counts.end(), [](auto n) { return n > 0; }) -
                                    counts.begin());
}

std::size_t highest_present(const std::vector<std::size_t>& counts) {
    std::size_t k = counts.size();
    while (k > 0 && counts[k - 1] == 0) {
        --k;
    }
    return k - 1;
}

// Lower median: the element at sorted position (n - 1) / 2.
std::size_t lower_median(const std::vector<std::size_t>& counts, std::size_t n) {
    const std::size_t target = (n - 1) / 2;
    std::size_t seen = 0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
        seen += counts[k];
        if (seen > target) {
            return k;
        }
    }
    return counts.size() - 1;
}

std::size_t most_frequent(const std::vector<std::size_t>& counts) {
    return static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

std::size_t clamp_index(std::ptrdiff_t i, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 1));
}

}  // namespace

std::string_view to_string(PriorMode mode) {
    for (const auto& [m, name] : kModeNames) {
        if (m == mode) {
            return name;
        }
    }
    return "unknown";
}

PriorMode parse_prior_mode(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
    for (const auto& [m, n] : kModeNames) {
        if (n == lower) {
            return m;
        }
    }
    throw InvalidConfig("unknown prior mode '" + std::string(name) + "'");
}

void PriorConfig::validate() const {
    if (patch_size == 0 || patch_size % 2 == 0) {
        throw InvalidConfig("prior patch size must be odd and >= 1, got " + std::to_string(patch_size));
    }
    if (mode == PriorMode::Gaussian && !(sigma > 0.0 && std::isfinite(sigma))) {
        throw InvalidConfig("Gaussian prior needs sigma > 0");
    }
}

Kernel gaussian_kernel(std::size_t size, double sigma) {
    if (size == 0 || size % 2 == 0) {
        throw InvalidConfig("Gaussian kernel size must be odd, got " + std::to_string(size));
    }
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw InvalidConfig("Gaussian kernel sigma must be positive");
    }
    const auto half = static_cast<std::ptrdiff_t>(size / 2);
    std::vector<double> weights;
    weights.reserve(size * size);
    for (std::ptrdiff_t i = -half; i <= half; ++i) {
        for (std::ptrdiff_t j = -half; j <= half; ++j) {
            weights.push_back(std::exp(-static_cast<double>(i * i + j * j) / (2.0 * sigma * sigma)));
        }
    }
    return {size, size, std::move(weights)};
}

std::vector<double> svls_soft_label(const LabelMap& patch, const Kernel& kernel) {
    if (patch.height() != kernel.rows() || patch.width() != kernel.cols()) {
        throw InvalidInput("patch is " + std::to_string(patch.height()) + "x" + std::to_string(patch.width()) +
                           " but kernel is " + std::to_string(kernel.rows()) + "x" + std::to_string(kernel.cols()));
    }
    std::vector<double> soft(patch.num_classes(), 0.0);
    const auto w = kernel.weights();
    for (std::size_t i = 0; i < patch.size(); ++i) {
        soft[patch[i]] += w[i];
    }
    const double total = std::abs(kernel.sum());
    for (double& v : soft) {
        v /= total;
    }
    return soft;
}

std::vector<double> compute_prior(const LabelMap& patch, const PriorConfig& config) {
    config.validate();
    if (patch.height() != config.patch_size || patch.width() != config.patch_size) {
        throw InvalidInput("prior patch must be " + std::to_string(config.patch_size) + "x" +
                           std::to_string(config.patch_size));
    }
    const std::size_t num_classes = patch.num_classes();
    switch (config.mode) {
        case PriorMode::Mean: {
            const auto counts = histogram(patch);
            const double d = config.normalize ? static_cast<double>(patch.size()) : 1.0;
            std::vector<double> tau(num_classes);
            for (std::size_t k = 0; k < num_classes; ++k) {
                tau[k] = static_cast<double>(counts[k]) / d;
            }
            return tau;
        }
        case PriorMode::Gaussian:
            return svls_soft_label(patch, gaussian_kernel(config.patch_size, config.sigma));
        case PriorMode::Max:
            return one_hot_vector(highest_present(histogram(patch)), num_classes);
        case PriorMode::Min:
            return one_hot_vector(lowest_present(histogram(patch)), num_classes);
        case PriorMode::Median:
            return one_hot_vector(lower_median(histogram(patch), patch.size()), num_classes);
        case PriorMode::Mode:
            return one_hot_vector(most_frequent(histogram(patch)), num_classes);
    }
    throw InvalidConfig("unhandled prior mode");
}

LabelMap extract_patch(const LabelMap& labels, std::size_t r, std::size_t c, std::size_t rows, std::size_t cols) {
    const auto half_r = static_cast<std::ptrdiff_t>(rows / 2);
    const auto half_c = static_cast<std::ptrdiff_t>(cols / 2);
    std::vector<ClassId> values;
    values.reserve(rows * cols);
    for (std::ptrdiff_t i = -half_r; i <= half_r; ++i) {
        const std::size_t rr = clamp_index(static_cast<std::ptrdiff_t>(r) + i, labels.height());
        for (std::ptrdiff_t j = -half_c; j <= half_c; ++j) {
            const std::size_t cc = clamp_index(static_cast<std::ptrdiff_t>(c) + j, labels.width());
            values.push_back(labels(rr, cc));
        }
    }
    return {rows, cols, labels.num_classes(), std::move(values)};
}

PriorField prior_field(const LabelMap& labels, const PriorConfig& config) {
    config.validate();
    PriorField out(labels.height(), labels.width(), labels.num_classes());
    for (std::size_t r = 0; r < labels.height(); ++r) {
        for (std::size_t c = 0; c < labels.width(); ++c) {
            const auto tau = compute_prior(extract_patch(labels, r, c, config.patch_size, config.patch_size), config);
            std::copy(tau.begin(), tau.end(), out.pixel(r * labels.width() + c).begin());
        }
    }
    return out;
}

Field svls_soft_labels(const LabelMap& labels, const Kernel& kernel) {
    Field out(labels.height(), labels.width(), labels.num_classes());
    for (std::size_t r = 0; r < labels.height(); ++r) {
        for (std::size_t c = 0; c < labels.width(); ++c) {
            const auto soft = svls_soft_label(extract_patch(labels, r, c, kernel.rows(), kernel.cols()), kernel);
            std::copy(soft.begin(), soft.end(), out.pixel(r * labels.width() + c).begin());
        }
    }
    return out;
}

}  // namespace calibseg
