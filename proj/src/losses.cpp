#include "calibseg/losses.hpp"

#include "calibseg/error.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <limits>
#include <string>

namespace calibseg {

namespace {

// log(1e-300): floor for log-probabilities of saturated softmax outputs.
const double kLogFloor = std::log(1e-300);

template <typename... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <typename... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

// Per-pixel scratch space; avoids heap traffic for the usual small K.
class Scratch {
public:
    explicit Scratch(std::size_t k) : size_(k) {
        if (k > kInline) {
            heap_.resize(3 * k);
        }
    }
    std::span<double> probs() { return slot(0); }
    std::span<double> log_probs() { return slot(1); }
    std::span<double> aux() { return slot(2); }

private:
    static constexpr std::size_t kInline = 16;

    std::span<double> slot(std::size_t i) {
        double* base = heap_.empty() ? inline_.data() : heap_.data();
        return {base + i * size_, size_};
    }

    std::size_t size_;
    std::array<double, 3 * kInline> inline_{};
    std::vector<double> heap_;
};

// Softmax and clamped log-softmax of one pixel.
void softmax_and_log(std::span<const double> logits, std::span<double> s, std::span<double> log_s) {
    double top = logits[0];
    for (double l : logits) {
        if (!std::isfinite(l)) {
            throw InvalidInput("loss input contains a non-finite logit");
        }
        top = std::max(top, l);
    }
    double total = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        s[k] = std::exp(logits[k] - top);
        total += s[k];
    }
    const double log_total = std::log(total);
    for (std::size_t k = 0; k < logits.size(); ++k) {
        s[k] /= total;
        log_s[k] = std::max(logits[k] - top - log_total, kLogFloor);
    }
}

// Cross-entropy against a (possibly soft) target; gradient s * sum(t) - t.
double soft_ce(std::span<const double> target, std::span<const double> s, std::span<const double> log_s,
               std::span<double> grad) {
    double value = 0.0;
    double mass = 0.0;
    for (std::size_t k = 0; k < target.size(); ++k) {
        value -= target[k] * log_s[k];
        mass += target[k];
    }
    for (std::size_t k = 0; k < target.size(); ++k) {
        grad[k] = s[k] * mass - target[k];
    }
    return value;
}

// 1 - s_k without cancellation.
double complement(std::span<const double> s, std::size_t k) {
    double rest = 0.0;
    for (std::size_t j = 0; j < s.size(); ++j) {
        if (j != k) {
            rest += s[j];
        }
    }
    return rest;
}

double focal(std::span<const double> target, double gamma, std::span<const double> s, std::span<const double> log_s,
             std::span<double> grad, std::span<double> coef) {
    double value = 0.0;
    double coef_total = 0.0;
    for (std::size_t k = 0; k < target.size(); ++k) {
        coef[k] = 0.0;
        if (target[k] == 0.0) {
            continue;
        }
        const double q = complement(s, k);
        const double modulating = std::pow(q, gamma);
        value -= target[k] * modulating * log_s[k];
        // s_k * d/ds_k [-(1 - s_k)^gamma log s_k]
        double slope = -modulating;
        if (gamma != 0.0 && q > 0.0) {
            slope += gamma * std::pow(q, gamma - 1.0) * s[k] * log_s[k];
        }
        coef[k] = target[k] * slope;
        coef_total += coef[k];
    }
    for (std::size_t j = 0; j < target.size(); ++j) {
        grad[j] = coef[j] - s[j] * coef_total;
    }
    return value;
}

double sign(double v) { return (v > 0.0) - (v < 0.0); }

std::string lower(std::string_view name) {
    std::string out(name);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char ch) { return std::tolower(ch); });
    return out;
}

void require_nonnegative(double v, const char* what) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
        throw InvalidConfig(std::string(what) + " must be finite and >= 0");
    }
}

}  // namespace

std::string_view to_string(LossKind kind) {
    switch (kind) {
        case LossKind::CE: return "ce";
        case LossKind::LS: return "ls";
        case LossKind::FL: return "fl";
        case LossKind::ECP: return "ecp";
        case LossKind::SVLS: return "svls";
        case LossKind::MbLS: return "mbls";
        case LossKind::NACL: return "nacl";
    }
    return "unknown";
}

LossKind parse_loss_kind(std::string_view name) {
    const std::string key = lower(name);
    for (LossKind kind : kAllLossKinds) {
        if (to_string(kind) == key) {
            return kind;
        }
    }
    throw InvalidConfig("unknown loss '" + std::string(name) + "'");
}

std::string_view to_string(Penalty penalty) { return penalty == Penalty::Linear ? "linear" : "quadratic"; }

Penalty parse_penalty(std::string_view name) {
    const std::string key = lower(name);
    if (key == "linear" || key == "l1") return Penalty::Linear;
    if (key == "quadratic" || key == "l2") return Penalty::Quadratic;
    throw InvalidConfig("unknown penalty '" + std::string(name) + "'");
}

std::string_view to_string(ConstrainOn target) { return target == ConstrainOn::Logits ? "logits" : "softmax"; }

ConstrainOn parse_constrain_on(std::string_view name) {
    const std::string key = lower(name);
    if (key == "logits" || key == "l") return ConstrainOn::Logits;
    if (key == "softmax" || key == "s") return ConstrainOn::Softmax;
    throw InvalidConfig("unknown constraint target '" + std::string(name) + "'");
}

std::string_view to_string(Reduction reduction) { return reduction == Reduction::Mean ? "mean" : "sum"; }

Reduction parse_reduction(std::string_view name) {
    const std::string key = lower(name);
    if (key == "mean") return Reduction::Mean;
    if (key == "sum") return Reduction::Sum;
    throw InvalidConfig("unknown reduction '" + std::string(name) + "'");
}

void LossConfig::validate() const {
    std::visit(Overloaded{
                   [](const CeParams&) {},
                   [](const LsParams& p) {
                       if (!(p.alpha >= 0.0 && p.alpha < 1.0)) {
                           throw InvalidConfig("label smoothing alpha must lie in [0, 1)");
                       }
                   },
                   [](const FlParams& p) { require_nonnegative(p.gamma, "focal gamma"); },
                   [](const EcpParams& p) { require_nonnegative(p.lambda, "ECP lambda"); },
                   [](const SvlsParams& p) {
                       if (!(p.sigma > 0.0) || !std::isfinite(p.sigma)) {
                           throw InvalidConfig("SVLS sigma must be positive");
                       }
                       if (p.kernel_size % 2 == 0) {
                           throw InvalidConfig("SVLS kernel size must be odd");
                       }
                   },
                   [](const MblsParams& p) {
                       require_nonnegative(p.lambda, "MbLS lambda");
                       require_nonnegative(p.margin, "MbLS margin");
                   },
                   [](const NaclParams& p) {
                       require_nonnegative(p.lambda, "NACL lambda");
                       p.prior.validate();
                   },
               },
               params);
}

LossConfig LossConfig::defaults(LossKind kind) {
    switch (kind) {
        case LossKind::CE: return {CeParams{}};
        case LossKind::LS: return {LsParams{}};
        case LossKind::FL: return {FlParams{}};
        case LossKind::ECP: return {EcpParams{}};
        case LossKind::SVLS: return {SvlsParams{}};
        case LossKind::MbLS: return {MblsParams{}};
        case LossKind::NACL: return {NaclParams{}};
    }
    throw InvalidConfig("unknown loss kind");
}

Loss::Loss(const LabelMap& labels, LossConfig config) : labels_(labels), config_(std::move(config)) {
    config_.validate();
    const std::size_t num_classes = labels.num_classes();
    std::visit(Overloaded{
                   [&](const LsParams& p) {
                       target_ = one_hot(labels);
                       const double floor = p.alpha / static_cast<double>(num_classes);
                       for (double& v : target_.values()) {
                           v = (1.0 - p.alpha) * v + floor;
                       }
                   },
                   [&](const SvlsParams& p) {
                       target_ = svls_soft_labels(labels, gaussian_kernel(p.kernel_size, p.sigma));
                   },
                   [&](const NaclParams& p) {
                       target_ = one_hot(labels);
                       prior_ = prior_field(labels, p.prior);
                   },
                   [&](const auto&) { target_ = one_hot(labels); },
               },
               config_.params);
}

Loss::Loss(const LabelMap& labels, LossConfig config, PriorField prior) : Loss(labels, std::move(config)) {
    if (config_.kind() != LossKind::NACL) {
        throw InvalidConfig("an explicit prior only applies to the NACL loss");
    }
    require_compatible(prior, labels);
    prior_ = std::move(prior);
}

double Loss::pixel_gradient(std::size_t p, std::span<const double> logits, std::span<double> grad) const {
    const std::size_t num_classes = labels_.num_classes();
    if (logits.size() != num_classes || grad.size() != num_classes) {
        throw InvalidInput("pixel logit vector has the wrong length");
    }
    Scratch scratch(num_classes);
    auto s = scratch.probs();
    auto log_s = scratch.log_probs();
    softmax_and_log(logits, s, log_s);
    const auto target = target_.pixel(p);

    return std::visit(
        Overloaded{
            [&](const FlParams& fp) { return focal(target, fp.gamma, s, log_s, grad, scratch.aux()); },
            [&](const EcpParams& ep) {
                double value = soft_ce(target, s, log_s, grad);
                double neg_entropy = 0.0;
                for (std::size_t k = 0; k < num_classes; ++k) {
                    neg_entropy += s[k] * log_s[k];
                }
                // d(-H)/dl_j = s_j (log s_j + H)
                for (std::size_t k = 0; k < num_classes; ++k) {
                    grad[k] += ep.lambda * s[k] * (log_s[k] - neg_entropy);
                }
                return value + ep.lambda * neg_entropy;
            },
            [&](const MblsParams& mp) {
                double value = soft_ce(target, s, log_s, grad);
                const std::size_t top = argmax(logits);
                double hinge = 0.0;
                for (std::size_t k = 0; k < num_classes; ++k) {
                    const double violation = logits[top] - logits[k] - mp.margin;
                    if (violation > 0.0) {
                        hinge += violation;
                        grad[top] += mp.lambda;
                        grad[k] -= mp.lambda;
                    }
                }
                return value + mp.lambda * hinge;
            },
            [&](const NaclParams& np) {
                double value = soft_ce(target, s, log_s, grad);
                const auto tau = prior_.pixel(p);
                const std::span<const double> constrained =
                    np.constrain_on == ConstrainOn::Logits ? logits : std::span<const double>(s);
                auto dpen = scratch.aux();
                double penalty = 0.0;
                for (std::size_t k = 0; k < num_classes; ++k) {
                    const double diff = constrained[k] - tau[k];
                    if (np.penalty == Penalty::Linear) {
                        penalty += std::abs(diff);
                        dpen[k] = sign(diff);
                    } else {
                        penalty += diff * diff;
                        dpen[k] = 2.0 * diff;
                    }
                }
                if (np.constrain_on == ConstrainOn::Logits) {
                    for (std::size_t k = 0; k < num_classes; ++k) {
                        grad[k] += np.lambda * dpen[k];
                    }
                } else {
                    // Chain through the softmax Jacobian: s_j (d_j - sum_k d_k s_k).
                    double weighted = 0.0;
                    for (std::size_t k = 0; k < num_classes; ++k) {
                        weighted += dpen[k] * s[k];
                    }
                    for (std::size_t k = 0; k < num_classes; ++k) {
                        grad[k] += np.lambda * s[k] * (dpen[k] - weighted);
                    }
                }
                return value + np.lambda * penalty;
            },
            [&](const auto&) { return soft_ce(target, s, log_s, grad); },
        },
        config_.params);
}

double Loss::pixel_value(std::size_t p, std::span<const double> logits) const {
    std::vector<double> grad(logits.size());
    return pixel_gradient(p, logits, grad);
}

bool Loss::near_kink(std::size_t p, std::span<const double> logits, double margin) const {
    const std::size_t num_classes = labels_.num_classes();
    if (const auto* mp = std::get_if<MblsParams>(&config_.params)) {
        const std::size_t top = argmax(logits);
        for (std::size_t k = 0; k < num_classes; ++k) {
            if (k != top && logits[top] - logits[k] < margin) {
                return true;
            }
            if (std::abs(logits[top] - logits[k] - mp->margin) < margin) {
                return true;
            }
        }
        return false;
    }
    if (const auto* np = std::get_if<NaclParams>(&config_.params)) {
        if (np->penalty == Penalty::Quadratic) {
            return false;
        }
        std::vector<double> s(num_classes);
        softmax_inplace(logits, s);
        const auto tau = prior_.pixel(p);
        for (std::size_t k = 0; k < num_classes; ++k) {
            const double t = np->constrain_on == ConstrainOn::Logits ? logits[k] : s[k];
            if (std::abs(t - tau[k]) < margin) {
                return true;
            }
        }
    }
    return false;
}

LossResult Loss::evaluate(const LogitField& logits) const {
    require_compatible(logits, labels_);
    const std::size_t n = logits.pixels();
    const double scale = config_.reduction == Reduction::Mean ? 1.0 / static_cast<double>(n) : 1.0;
    LossResult result{0.0, Field(logits.height(), logits.width(), logits.channels())};
    double total = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        auto g = result.grad.pixel(p);
        total += pixel_gradient(p, logits.pixel(p), g);
        for (double& v : g) {
            v *= scale;
        }
    }
    result.value = total * scale;
    return result;
}

LossResult compute_loss(const LogitField& logits, const LabelMap& labels, const LossConfig& config) {
    require_compatible(logits, labels);
    return Loss(labels, config).evaluate(logits);
}

LossResult ce_loss(const LogitField& logits, const LabelMap& labels) {
    return compute_loss(logits, labels, {CeParams{}});
}

LossResult ls_loss(const LogitField& logits, const LabelMap& labels, LsParams params) {
    return compute_loss(logits, labels, {params});
}

LossResult fl_loss(const LogitField& logits, const LabelMap& labels, FlParams params) {
    return compute_loss(logits, labels, {params});
}

LossResult ecp_loss(const LogitField& logits, const LabelMap& labels, EcpParams params) {
    return compute_loss(logits, labels, {params});
}

LossResult svls_loss(const LogitField& logits, const LabelMap& labels, SvlsParams params) {
    return compute_loss(logits, labels, {params});
}

LossResult mbls_loss(const LogitField& logits, const LabelMap& labels, MblsParams params) {
    return compute_loss(logits, labels, {params});
}

LossResult nacl_loss(const LogitField& logits, const LabelMap& labels, const NaclParams& params) {
    return compute_loss(logits, labels, {params});
}

namespace {

void check_patch(const LabelMap& patch, const Kernel& kernel, std::span<const double> logits) {
    if (patch.height() % 2 == 0 || patch.width() % 2 == 0) {
        throw InvalidInput("SVLS patch needs odd dimensions so that it has a centre pixel");
    }
    if (patch.height() != kernel.rows() || patch.width() != kernel.cols()) {
        throw InvalidInput("SVLS patch and kernel dimensions differ");
    }
    if (logits.size() != patch.num_classes()) {
        throw InvalidInput("logit vector length does not match the patch class count");
    }
}

std::vector<double> log_softmax(std::span<const double> logits) {
    std::vector<double> s(logits.size());
    std::vector<double> log_s(logits.size());
    softmax_and_log(logits, s, log_s);
    return log_s;
}

}  // namespace

SvlsDecomposition svls_decomposition(const LabelMap& patch, const Kernel& kernel, std::span<const double> logits) {
    check_patch(patch, kernel, logits);
    const auto log_s = log_softmax(logits);
    const std::size_t centre = (patch.height() / 2) * patch.width() + patch.width() / 2;
    const auto w = kernel.weights();

    SvlsDecomposition out;
    out.tau.assign(patch.num_classes(), 0.0);
    for (std::size_t i = 0; i < patch.size(); ++i) {
        if (i != centre) {
            out.tau[patch[i]] += w[i];
        }
    }
    out.ce_term = -log_s[patch[centre]];
    for (std::size_t k = 0; k < out.tau.size(); ++k) {
        out.constraint_term -= out.tau[k] * log_s[k];
    }
    out.total = (w[centre] * out.ce_term + out.constraint_term) / std::abs(kernel.sum());
    return out;
}

double svls_pixel_loss(const LabelMap& patch, const Kernel& kernel, std::span<const double> logits) {
    check_patch(patch, kernel, logits);
    const auto log_s = log_softmax(logits);
    const auto soft = svls_soft_label(patch, kernel);
    double value = 0.0;
    for (std::size_t k = 0; k < soft.size(); ++k) {
        value -= soft[k] * log_s[k];
    }
    return value;
}

double kl_divergence(std::span<const double> tau, std::span<const double> s) {
    if (tau.size() != s.size() || tau.empty()) {
        throw InvalidInput("KL divergence needs two non-empty vectors of equal length");
    }
    double tau_mass = 0.0;
    double s_mass = 0.0;
    for (std::size_t k = 0; k < tau.size(); ++k) {
        if (!(tau[k] >= 0.0) || !(s[k] >= 0.0)) {
            throw InvalidInput("KL divergence arguments must be non-negative");
        }
        tau_mass += tau[k];
        s_mass += s[k];
    }
    if (std::abs(tau_mass - 1.0) > 1e-9 || std::abs(s_mass - 1.0) > 1e-9) {
        throw InvalidInput("KL divergence arguments must lie on the probability simplex");
    }
    double value = 0.0;
    for (std::size_t k = 0; k < tau.size(); ++k) {
        if (tau[k] == 0.0) {
            continue;
        }
        if (s[k] == 0.0) {
            throw DivergenceInfinite("KL divergence is infinite: s_" + std::to_string(k) + " = 0 with tau_" +
                                     std::to_string(k) + " > 0");
        }
        value += tau[k] * std::log(tau[k] / s[k]);
    }
    return value;
}

double entropy(std::span<const double> p) {
    double h = 0.0;
    for (double v : p) {
        if (v > 0.0) {
            h -= v * std::log(v);
        }
    }
    return h;
}

}  // namespace calibseg
