#pragma once

// Seeded synthetic 2D segmentation cases and two toy models trained by
// full-batch gradient descent through the losses module.

#include "calibseg/core.hpp"
#include "calibseg/losses.hpp"
#include "calibseg/metrics.hpp"

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

namespace calibseg {

struct BenchConfig {
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t num_classes = 2;
    // Random discs/rectangles rasterized per foreground class.
    std::size_t shapes = 3;
    // Intensity mean of each class, background first. One per class, distinct.
    std::vector<double> means{0.0, 1.0};
    double noise_std = 0.35;
    // Probability that a pixel next to a region boundary takes a neighbouring
    // region's class in the observed labels.
    double label_noise = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct BenchCase {
    Field image;      // one channel
    LabelMap labels;  // observed (possibly noisy) labels
    LabelMap clean;   // rasterized shapes before label noise
    ProbField posterior;
};

// Cases are drawn one after another from a single stream seeded with
// config.seed, so the whole dataset is a function of the config and n_cases.
//
// Per case: shapes of class 1..K-1 (in that order) are painted over a
// background of class 0; intensity ~ N(mean[clean label], noise_std^2); each
// pixel with a 4-neighbour of another clean class switches, with probability
// label_noise, to one of those neighbouring classes chosen uniformly. The
// posterior is p(k | x) proportional to freq_k * N(x; mean_k, noise_std^2)
// with freq_k the clean class frequency of the case.
std::vector<BenchCase> generate_dataset(const BenchConfig& config, std::size_t n_cases);

// Per-pixel features of the linear model: intensity and its 3x3
// replicate-padded mean.
inline constexpr std::size_t kPixelFeatures = 2;
Field pixel_features(const Field& image);

// One free logit field per training case.
struct DirectLogit {
    std::vector<Field> logits;
};

// logits = weights * features + bias, weights row-major K x kPixelFeatures.
struct LinearPixel {
    std::size_t num_classes = 0;
    std::vector<double> weights;
    std::vector<double> bias;
};

using ModelParams = std::variant<DirectLogit, LinearPixel>;

enum class ModelKind { Direct, Linear };

// Direct: zero logits for every case. Linear: weights ~ 0.01 N(0, 1) from
// `seed`, zero bias.
ModelParams init_model(ModelKind kind, const std::vector<BenchCase>& data, std::size_t num_classes,
                       std::uint64_t seed);

LogitField model_logits(const ModelParams& model, std::size_t case_index, const BenchCase& data);

struct TrainConfig {
    LossConfig loss = LossConfig::defaults(LossKind::CE);
    std::size_t steps = 2000;
    double learning_rate = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrainResult {
    ModelParams params;
    // Objective before each update: mean over cases of the per-case loss.
    std::vector<double> trace;
};

// Full-batch gradient descent with a fixed step.
//
// LinearPixel follows the gradient of the mean per-case loss. For
// DirectLogit every pixel owns its logits, so each pixel takes a step of
// learning_rate along the gradient of its own loss term, independent of
// image size and case count.
TrainResult train(ModelParams model, const std::vector<BenchCase>& data, const TrainConfig& config);

struct RunReport {
    std::vector<CaseMetrics> cases;
    double mean_dsc = 0.0;
    std::optional<double> mean_hd95;
    double mean_ece = 0.0;
    double mean_cece = 0.0;
    // Mean |l_k| over the pixels whose ground truth is class g:
    // mean_abs_logit_by_class[g][k]. Rows of absent classes stay empty.
    std::vector<std::vector<double>> mean_abs_logit_by_class;
    // Mean |l| over every pixel and class.
    double mean_abs_logit = 0.0;
    // Mean over pixels of sum_k |s_k - posterior_k|.
    double posterior_l1 = 0.0;
};

RunReport evaluate_run(const ModelParams& model, const std::vector<BenchCase>& data, std::size_t bins = kDefaultBins,
                       bool foreground_only = true);

}  // namespace calibseg
