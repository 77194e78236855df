#include "calibseg/core.hpp"

#include "calibseg/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace calibseg {

namespace {

void check_grid(std::size_t height, std::size_t width) {
    if (height == 0 || width == 0) {
        throw InvalidInput("grid must be at least 1x1");
    }
}

}  // namespace

LabelMap::LabelMap(std::size_t height, std::size_t width, std::size_t num_classes)
    : LabelMap(height, width, num_classes, std::vector<ClassId>(height * width, 0)) {}

LabelMap::LabelMap(std::size_t height, std::size_t width, std::size_t num_classes, std::vector<ClassId> values)
    : height_(height), width_(width), num_classes_(num_classes), values_(std::move(values)) {
    check_grid(height, width);
    if (num_classes < 2 || num_classes > 65536) {
        throw InvalidInput("label map needs between 2 and 65536 classes, got " + std::to_string(num_classes));
    }
    if (values_.size() != height * width) {
        throw InvalidInput("label map has " + std::to_string(values_.size()) + " values for a " +
                           std::to_string(height) + "x" + std::to_string(width) + " grid");
    }
    for (ClassId v : values_) {
        if (v >= num_classes) {
            throw InvalidInput("class id " + std::to_string(v) + " out of range for K=" + std::to_string(num_classes));
        }
    }
}

void LabelMap::set(std::size_t r, std::size_t c, ClassId label) { set(r * width_ + c, label); }

void LabelMap::set(std::size_t p, ClassId label) {
    if (label >= num_classes_) {
        throw InvalidInput("class id " + std::to_string(label) + " out of range for K=" + std::to_string(num_classes_));
    }
    values_.at(p) = label;
}

Field::Field(std::size_t height, std::size_t width, std::size_t channels, double fill)
    : Field(height, width, channels, std::vector<double>(height * width * channels, fill)) {}

Field::Field(std::size_t height, std::size_t width, std::size_t channels, std::vector<double> values)
    : height_(height), width_(width), channels_(channels), values_(std::move(values)) {
    check_grid(height, width);
    if (channels == 0) {
        throw InvalidInput("field needs at least one channel");
    }
    if (values_.size() != height * width * channels) {
        throw InvalidInput("field buffer size does not match its dimensions");
    }
}

Kernel::Kernel(std::size_t rows, std::size_t cols, std::vector<double> weights)
    : rows_(rows), cols_(cols), weights_(std::move(weights)) {
    if (rows % 2 == 0 || cols % 2 == 0) {
        throw InvalidConfig("kernel dimensions must be odd");
    }
    if (weights_.size() != rows * cols) {
        throw InvalidConfig("kernel weight count does not match its dimensions");
    }
    bool any_positive = false;
    for (double w : weights_) {
        if (!(w >= 0.0) || !std::isfinite(w)) {
            throw InvalidConfig("kernel weights must be finite and non-negative");
        }
        any_positive = any_positive || w > 0.0;
    }
    if (!any_positive) {
        throw InvalidConfig("kernel needs at least one positive weight");
    }
}

double Kernel::sum() const noexcept { return std::accumulate(weights_.begin(), weights_.end(), 0.0); }

void require_compatible(const Field& field, const LabelMap& labels) {
    if (field.height() != labels.height() || field.width() != labels.width()) {
        throw InvalidInput("field is " + std::to_string(field.height()) + "x" + std::to_string(field.width()) +
                           " but label map is " + std::to_string(labels.height()) + "x" +
                           std::to_string(labels.width()));
    }
    if (field.channels() != labels.num_classes()) {
        throw InvalidInput("field has " + std::to_string(field.channels()) + " channels but label map has K=" +
                           std::to_string(labels.num_classes()));
    }
}

Field one_hot(const LabelMap& labels) {
    Field out(labels.height(), labels.width(), labels.num_classes(), 0.0);
    for (std::size_t p = 0; p < labels.size(); ++p) {
        out.pixel(p)[labels[p]] = 1.0;
    }
    return out;
}

void softmax_inplace(std::span<const double> logits, std::span<double> out) {
    double top = logits[0];
    for (double l : logits) {
        if (!std::isfinite(l)) {
            throw InvalidInput("softmax input contains a non-finite logit");
        }
        top = std::max(top, l);
    }
    double total = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        out[k] = std::exp(logits[k] - top);
        total += out[k];
    }
    for (double& v : out) {
        v /= total;
    }
}

ProbField softmax(const LogitField& logits) {
    ProbField out(logits.height(), logits.width(), logits.channels());
    for (std::size_t p = 0; p < logits.pixels(); ++p) {
        softmax_inplace(logits.pixel(p), out.pixel(p));
    }
    return out;
}

std::size_t argmax(std::span<const double> v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

LabelMap argmax(const Field& field) {
    if (field.channels() < 2) {
        throw InvalidInput("argmax needs at least two channels");
    }
    std::vector<ClassId> ids(field.pixels());
    for (std::size_t p = 0; p < field.pixels(); ++p) {
        ids[p] = static_cast<ClassId>(argmax(field.pixel(p)));
    }
    return {field.height(), field.width(), field.channels(), std::move(ids)};
}

bool on_simplex(const Field& field, double tol) {
    for (std::size_t p = 0; p < field.pixels(); ++p) {
        double total = 0.0;
        for (double v : field.pixel(p)) {
            if (v < 0.0 || !std::isfinite(v)) {
                return false;
            }
            total += v;
        }
        if (std::abs(total - 1.0) > tol) {
            return false;
        }
    }
    return true;
}

}  // namespace calibseg
