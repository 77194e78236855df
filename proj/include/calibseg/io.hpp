#pragma once

// Binary grid files.
//
//   .fld  "CSG1" | u32 H | u32 W | u32 K | H*W*K f64   (all little-endian)
//   .lab  "CSL1" | u32 H | u32 W | u32 K | H*W u16
//
// Payloads are row-major with the class axis innermost, matching Field and
// LabelMap in memory.

#include "calibseg/core.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>

namespace calibseg::io {

void write_field(std::ostream& out, const Field& field);
Field read_field(std::istream& in);

void write_labels(std::ostream& out, const LabelMap& labels);
LabelMap read_labels(std::istream& in);

void save_field(const std::filesystem::path& path, const Field& field);
Field load_field(const std::filesystem::path& path);

void save_labels(const std::filesystem::path& path, const LabelMap& labels);
LabelMap load_labels(const std::filesystem::path& path);

}  // namespace calibseg::io
