#pragma once

// Segmentation training losses with closed-form gradients w.r.t. the logits.
//
// Every loss is a sum of independent per-pixel terms. The reported value is
// their mean over the image (Reduction::Mean, the default) or their sum, and
// the gradient is scaled accordingly.
//
//   CE    -sum_k y_k log s_k
//   LS    CE against (1 - alpha) y + alpha / K
//   FL    -sum_k y_k (1 - s_k)^gamma log s_k
//   ECP   CE - lambda * H(s)
//   SVLS  CE against the Gaussian-weighted neighbourhood label proportions
//   MbLS  CE + lambda * sum_k max(0, max_j l_j - l_k - margin)
//   NACL  CE + lambda * sum_k P(|tau_k - t_k|), t = l (default) or t = s,
//         P(z) = z (default) or z^2, tau a neighbourhood prior

#include "calibseg/core.hpp"
#include "calibseg/priors.hpp"

#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

namespace calibseg {

enum class LossKind { CE, LS, FL, ECP, SVLS, MbLS, NACL };
enum class Penalty { Linear, Quadratic };
enum class ConstrainOn { Logits, Softmax };
enum class Reduction { Mean, Sum };

struct CeParams {};

struct LsParams {
    double alpha = 0.1;
};

struct FlParams {
    double gamma = 3.0;
};

struct EcpParams {
    double lambda = 0.1;
};

struct SvlsParams {
    double sigma = 2.0;
    std::size_t kernel_size = 3;
};

struct MblsParams {
    double lambda = 0.1;
    double margin = 5.0;
};

struct NaclParams {
    double lambda = 0.1;
    PriorConfig prior{};
    Penalty penalty = Penalty::Linear;
    ConstrainOn constrain_on = ConstrainOn::Logits;
};

using LossParams = std::variant<CeParams, LsParams, FlParams, EcpParams, SvlsParams, MblsParams, NaclParams>;

struct LossConfig {
    LossParams params = CeParams{};
    Reduction reduction = Reduction::Mean;

    LossKind kind() const noexcept { return static_cast<LossKind>(params.index()); }
    void validate() const;

    // The benchmark defaults: gamma 3, ECP lambda 0.1, alpha 0.1, sigma 2,
    // margin 5 with lambda 0.1, NACL lambda 0.1 with a 3x3 Mean prior.
    static LossConfig defaults(LossKind kind);
};

std::string_view to_string(LossKind kind);
LossKind parse_loss_kind(std::string_view name);
std::string_view to_string(Penalty penalty);
Penalty parse_penalty(std::string_view name);
std::string_view to_string(ConstrainOn target);
ConstrainOn parse_constrain_on(std::string_view name);
std::string_view to_string(Reduction reduction);
Reduction parse_reduction(std::string_view name);

inline constexpr LossKind kAllLossKinds[] = {LossKind::CE,   LossKind::LS,   LossKind::FL,  LossKind::ECP,
                                             LossKind::SVLS, LossKind::MbLS, LossKind::NACL};

struct LossResult {
    double value = 0.0;
    Field grad;
};

// A loss bound to one label map. Label-derived targets (smoothed labels,
// SVLS soft labels, NACL priors) are computed once at construction, so
// evaluating the same map repeatedly during training is cheap.
class Loss {
public:
    Loss(const LabelMap& labels, LossConfig config);
    // NACL only: use `prior` instead of deriving it from the labels.
    Loss(const LabelMap& labels, LossConfig config, PriorField prior);

    LossResult evaluate(const LogitField& logits) const;

    // Unreduced loss term of pixel p.
    double pixel_value(std::size_t p, std::span<const double> logits) const;
    // Gradient of pixel_value w.r.t. that pixel's logits; returns the term.
    double pixel_gradient(std::size_t p, std::span<const double> logits, std::span<double> grad) const;

    // True when a hinge or absolute-value term of pixel p is within `margin`
    // of its kink, where finite differences are not meaningful.
    bool near_kink(std::size_t p, std::span<const double> logits, double margin) const;

    const LossConfig& config() const noexcept { return config_; }
    const LabelMap& labels() const noexcept { return labels_; }
    // Cross-entropy target (one-hot, smoothed or SVLS soft label).
    const Field& target() const noexcept { return target_; }
    // NACL prior tau; empty for the other kinds.
    const Field& prior() const noexcept { return prior_; }

private:
    LabelMap labels_;
    LossConfig config_;
    Field target_;
    Field prior_;
};

LossResult compute_loss(const LogitField& logits, const LabelMap& labels, const LossConfig& config);

LossResult ce_loss(const LogitField& logits, const LabelMap& labels);
LossResult ls_loss(const LogitField& logits, const LabelMap& labels, LsParams params);
LossResult fl_loss(const LogitField& logits, const LabelMap& labels, FlParams params);
LossResult ecp_loss(const LogitField& logits, const LabelMap& labels, EcpParams params);
LossResult svls_loss(const LogitField& logits, const LabelMap& labels, SvlsParams params);
LossResult mbls_loss(const LogitField& logits, const LabelMap& labels, MblsParams params);
LossResult nacl_loss(const LogitField& logits, const LabelMap& labels, const NaclParams& params);

// SVLS loss at the centre pixel of a patch, split into the hard-label
// cross-entropy and the cross-entropy against the weighted label counts of
// the surrounding pixels.
struct SvlsDecomposition {
    double ce_term = 0.0;
    double constraint_term = 0.0;
    // (w_center * ce_term + constraint_term) / |sum w|
    double total = 0.0;
    // Weighted counts of the non-centre pixels.
    std::vector<double> tau;
};

SvlsDecomposition svls_decomposition(const LabelMap& patch, const Kernel& kernel, std::span<const double> logits);

// -sum_k soft_k log s_k at a single pixel, straight from the soft label.
double svls_pixel_loss(const LabelMap& patch, const Kernel& kernel, std::span<const double> logits);

// sum_k tau_k log(tau_k / s_k) with 0 log 0 = 0.
double kl_divergence(std::span<const double> tau, std::span<const double> s);
// -sum_k p_k log p_k with 0 log 0 = 0.
double entropy(std::span<const double> p);

}  // namespace calibseg
