#pragma once

// Grid containers shared by every module.
//
// Layout is row-major with the class axis innermost: the value of class k at
// pixel (r, c) lives at index (r * width + c) * K + k. The binary file formats
// in io.hpp serialize this buffer verbatim.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace calibseg {

using ClassId = std::uint16_t;

class LabelMap {
public:
    LabelMap() = default;
    // All pixels start as class 0 (background).
    LabelMap(std::size_t height, std::size_t width, std::size_t num_classes);
    LabelMap(std::size_t height, std::size_t width, std::size_t num_classes, std::vector<ClassId> values);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t num_classes() const noexcept { return num_classes_; }
    std::size_t size() const noexcept { return values_.size(); }

    ClassId operator()(std::size_t r, std::size_t c) const { return values_[r * width_ + c]; }
    ClassId operator[](std::size_t p) const { return values_[p]; }

    // Throws InvalidInput when `label` is out of range.
    void set(std::size_t r, std::size_t c, ClassId label);
    void set(std::size_t p, ClassId label);

    std::span<const ClassId> values() const noexcept { return values_; }

    friend bool operator==(const LabelMap&, const LabelMap&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::size_t num_classes_ = 0;
    std::vector<ClassId> values_;
};

// Per-pixel real vectors. LogitField, ProbField, SoftLabelField and PriorField
// are role names for the same container.
class Field {
public:
    Field() = default;
    Field(std::size_t height, std::size_t width, std::size_t channels, double fill = 0.0);
    Field(std::size_t height, std::size_t width, std::size_t channels, std::vector<double> values);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t channels() const noexcept { return channels_; }
    std::size_t pixels() const noexcept { return height_ * width_; }

    double& operator()(std::size_t r, std::size_t c, std::size_t k) { return values_[(r * width_ + c) * channels_ + k]; }
    double operator()(std::size_t r, std::size_t c, std::size_t k) const {
        return values_[(r * width_ + c) * channels_ + k];
    }

    std::span<double> pixel(std::size_t p) { return {values_.data() + p * channels_, channels_}; }
    std::span<const double> pixel(std::size_t p) const { return {values_.data() + p * channels_, channels_}; }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }

    bool same_grid(const Field& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_;
    }

    friend bool operator==(const Field&, const Field&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::size_t channels_ = 0;
    std::vector<double> values_;
};

using LogitField = Field;
using ProbField = Field;
using PriorField = Field;

// Discrete spatial weights over an odd-sized window.
class Kernel {
public:
    Kernel(std::size_t rows, std::size_t cols, std::vector<double> weights);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    double operator()(std::size_t i, std::size_t j) const { return weights_[i * cols_ + j]; }
    std::span<const double> weights() const noexcept { return weights_; }
    double sum() const noexcept;
    double center() const { return (*this)(rows_ / 2, cols_ / 2); }

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<double> weights_;
};

// Throws InvalidInput unless the map has the same grid and class count.
void require_compatible(const Field& field, const LabelMap& labels);

Field one_hot(const LabelMap& labels);

// Max-subtracted softmax over the class axis. Non-finite logits are rejected.
ProbField softmax(const LogitField& logits);
void softmax_inplace(std::span<const double> logits, std::span<double> out);

// Smallest index of the maximum component.
std::size_t argmax(std::span<const double> v);
LabelMap argmax(const Field& field);

// True if every pixel vector is non-negative and sums to one within `tol`.
bool on_simplex(const Field& field, double tol = 1e-12);

}  // namespace calibseg
